#include "mfrpinp/ad/params.hpp"

#include "mfrpinp/error.hpp"

namespace mfrpinp::ad {

Tensor& ParameterSet::add(const std::string& name, Tensor value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw InvalidArgument("duplicate parameter name '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterSet::copy_prefix_from(const ParameterSet& src, const std::string& prefix) {
  for (const auto& [name, t] : src.params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) params_[name] = t;
  }
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(params_.at(name), trainable_);
  bound_.emplace(name, v);
  return v;
}

GradMap ParamBinder::gradients() const {
  GradMap out;
  for (const auto& [name, t] : params_) {
    auto it = bound_.find(name);
    out.emplace(name, it == bound_.end() ? Tensor(t.shape(), 0.0) : it->second.grad());
  }
  return out;
}

}  // namespace mfrpinp::ad
