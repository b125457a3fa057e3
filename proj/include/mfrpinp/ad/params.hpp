#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mfrpinp/ad/tape.hpp"
#include "mfrpinp/rng.hpp"

namespace mfrpinp::ad {

using mfrpinp::Rng;

using GradMap = std::map<std::string, Tensor>;

/// Named learnable tensors. Ordered by name so iteration is deterministic.
class ParameterSet {
 public:
  /// Inserts a new parameter; duplicate names are rejected.
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }
  void bump_version() noexcept { ++version_; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  /// Copies every parameter under `prefix` from `src`, creating entries as needed.
  void copy_prefix_from(const ParameterSet& src, const std::string& prefix);

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.params_ == b.params_;
  }

 private:
  std::map<std::string, Tensor> params_;
  std::uint64_t version_ = 0;
};

/// Lazily lifts parameters onto a tape, one leaf per name.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterSet& params, bool trainable = true)
      : tape_(tape), params_(params), trainable_(trainable) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }
  bool trainable() const noexcept { return trainable_; }

  /// Gradients of every bound parameter after tape.backward(); names never
  /// bound, or unreachable from the loss, get zeros.
  GradMap gradients() const;

 private:
  Tape& tape_;
  const ParameterSet& params_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

}  // namespace mfrpinp::ad
