#include "mfrpinp/ad/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "mfrpinp/error.hpp"

namespace mfrpinp::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat cmap(const Tensor& t, std::size_t offset, std::size_t r, std::size_t c) {
  return ConstMapMat(t.data().data() + offset, static_cast<Eigen::Index>(r),
                     static_cast<Eigen::Index>(c));
}
MapMat mmap(Tensor& t, std::size_t offset, std::size_t r, std::size_t c) {
  return MapMat(t.data().data() + offset, static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
}

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

// outer x n x inner decomposition around `axis`.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};
AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F, class D>
Var unary(const char* name, const Var& a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(y), {ia}, [ia, df](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
  });
}

enum class Bin { Add, Sub, Mul, Div };

Var binary(const char* name, Bin kind, const Var& a, const Var& b) {
  same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const bool exact = x.shape() == z.shape();
  const bool a_scalar = x.size() == 1 && !exact;
  const bool b_scalar = z.size() == 1 && !exact;
  if (!exact && !a_scalar && !b_scalar) shape_fail(name, x.shape(), z.shape());
  const Shape out_shape = a_scalar ? z.shape() : x.shape();
  const std::size_t n = shape_size(out_shape);
  Tensor y(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = x[a_scalar ? 0 : i];
    const double v = z[b_scalar ? 0 : i];
    switch (kind) {
      case Bin::Add: y[i] = u + v; break;
      case Bin::Sub: y[i] = u - v; break;
      case Bin::Mul: y[i] = u * v; break;
      case Bin::Div: y[i] = u / v; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      name, std::move(y), {ia, ib},
      [=](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& x = t.value(ia);
        const Tensor& z = t.value(ib);
        if (t.requires_grad(ia)) {
          Tensor& gx = t.grad_slot(ia);
          for (std::size_t i = 0; i < n; ++i) {
            const double v = z[b_scalar ? 0 : i];
            double d = 0.0;
            switch (kind) {
              case Bin::Add:
              case Bin::Sub: d = 1.0; break;
              case Bin::Mul: d = v; break;
              case Bin::Div: d = 1.0 / v; break;
            }
            gx[a_scalar ? 0 : i] += g[i] * d;
          }
        }
        if (t.requires_grad(ib)) {
          Tensor& gz = t.grad_slot(ib);
          for (std::size_t i = 0; i < n; ++i) {
            const double u = x[a_scalar ? 0 : i];
            const double v = z[b_scalar ? 0 : i];
            double d = 0.0;
            switch (kind) {
              case Bin::Add: d = 1.0; break;
              case Bin::Sub: d = -1.0; break;
              case Bin::Mul: d = u; break;
              case Bin::Div: d = -u / (v * v); break;
            }
            gz[b_scalar ? 0 : i] += g[i] * d;
          }
        }
      });
}

}  // namespace

double softplus_value(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool ok_rank = (sa.size() == 2 && sb.size() == 2) ||
                       (sa.size() == 3 && sb.size() == 2) ||
                       (sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0]);
  if (!ok_rank || sa[sa.size() - 1] != sb[sb.size() - 2]) shape_fail("matmul", sa, sb);

  const bool batched_b = sb.size() == 3;
  const std::size_t batch = sa.size() == 3 ? sa[0] : 1;
  const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  Shape out = sa;
  out.back() = n;
  Tensor y(out);
  if (!batched_b) {
    mmap(y, 0, batch * m, n).noalias() = cmap(a.value(), 0, batch * m, k) * cmap(b.value(), 0, k, n);
  } else {
    for (std::size_t p = 0; p < batch; ++p) {
      mmap(y, p * m * n, m, n).noalias() =
          cmap(a.value(), p * m * k, m, k) * cmap(b.value(), p * k * n, k, n);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(y), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (!batched_b) {
      if (t.requires_grad(ia)) {
        mmap(t.grad_slot(ia), 0, batch * m, k).noalias() +=
            cmap(g, 0, batch * m, n) * cmap(bv, 0, k, n).transpose();
      }
      if (t.requires_grad(ib)) {
        mmap(t.grad_slot(ib), 0, k, n).noalias() +=
            cmap(av, 0, batch * m, k).transpose() * cmap(g, 0, batch * m, n);
      }
      return;
    }
    for (std::size_t p = 0; p < batch; ++p) {
      if (t.requires_grad(ia)) {
        mmap(t.grad_slot(ia), p * m * k, m, k).noalias() +=
            cmap(g, p * m * n, m, n) * cmap(bv, p * k * n, k, n).transpose();
      }
      if (t.requires_grad(ib)) {
        mmap(t.grad_slot(ib), p * k * n, k, n).noalias() +=
            cmap(av, p * m * k, m, k).transpose() * cmap(g, p * m * n, m, n);
      }
    }
  });
}

Var transpose(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() != 2 && s.size() != 3) {
    throw ShapeError("transpose expects rank 2 or 3, got " + shape_string(s));
  }
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t r = s[s.size() - 2], c = s.back();
  Shape out = s;
  std::swap(out[out.size() - 2], out[out.size() - 1]);
  Tensor y(out);
  for (std::size_t p = 0; p < batch; ++p) {
    mmap(y, p * r * c, c, r) = cmap(a.value(), p * r * c, r, c).transpose();
  }
  const std::size_t ia = a.id();
  return a.tape().record("transpose", std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t p = 0; p < batch; ++p) {
      mmap(ga, p * r * c, r, c) += cmap(g, p * r * c, c, r).transpose();
    }
  });
}

Var add(const Var& a, const Var& b) { return binary("add", Bin::Add, a, b); }
Var sub(const Var& a, const Var& b) { return binary("sub", Bin::Sub, a, b); }
Var mul(const Var& a, const Var& b) { return binary("mul", Bin::Mul, a, b); }
Var div(const Var& a, const Var& b) { return binary("div", Bin::Div, a, b); }

Var add_bias(const Var& a, const Var& bias) {
  same_tape(a, bias);
  const Shape& s = a.shape();
  const Shape& sb = bias.shape();
  if (s.empty() || sb.size() != 1 || sb[0] != s.back()) shape_fail("add_bias", s, sb);
  const std::size_t n = s.back();
  const std::size_t rows = a.value().size() / n;
  Tensor y = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] += bias.value()[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record("add_bias", std::move(y), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
    }
  });
}

Var mul_rows(const Var& a, const Var& row) {
  same_tape(a, row);
  const Shape& s = a.shape();
  const Shape& sr = row.shape();
  if (s.empty() || sr.size() != 1 || sr[0] != s.back()) shape_fail("mul_rows", s, sr);
  const std::size_t n = s.back();
  const std::size_t rows = a.value().size() / n;
  Tensor y = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] *= row.value()[j];
  const std::size_t ia = a.id(), ib = row.id();
  return a.tape().record("mul_rows", std::move(y), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& rv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_slot(ia);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[r * n + j] * rv[j];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_slot(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j] * av[r * n + j];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var neg(const Var& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary("softplus", a, softplus_value,
               [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var square(const Var& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat requires rank >= 1");
  lead.pop_back();
  const std::size_t rows = shape_size(lead);
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    Shape s = p.shape();
    if (s.empty()) throw ShapeError("concat requires rank >= 1");
    const std::size_t w = s.back();
    s.pop_back();
    if (s != lead) shape_fail("concat", parts[0].shape(), p.shape());
    widths.push_back(w);
    ids.push_back(p.id());
    total += w;
  }
  Shape out = lead;
  out.push_back(total);
  Tensor y(out);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < widths[k]; ++j) y[r * total + off + j] = v[r * widths[k] + j];
    off += widths[k];
  }
  return parts[0].tape().record("concat", std::move(y), ids, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gk = t.grad_slot(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t len) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  if (begin + len > sp.n || len == 0) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                     ") out of range for axis " + std::to_string(axis) + " of " +
                     shape_string(a.shape()));
  }
  Shape out = a.shape();
  out[axis] = len;
  Tensor y(out);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < len; ++j)
      for (std::size_t i = 0; i < sp.inner; ++i)
        y[(o * len + j) * sp.inner + i] = x[(o * sp.n + begin + j) * sp.inner + i];
  const std::size_t ia = a.id();
  return a.tape().record("slice", std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t i = 0; i < sp.inner; ++i)
          ga[(o * sp.n + begin + j) * sp.inner + i] += g[(o * len + j) * sp.inner + i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var expand(const Var& a, std::size_t axis, std::size_t n) {
  const Shape& s = a.shape();
  if (axis > s.size()) throw ShapeError("expand axis out of range for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis; i < s.size(); ++i) inner *= s[i];
  Shape out = s;
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(axis), n);
  Tensor y(out);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < inner; ++i) y[(o * n + j) * inner + i] = x[o * inner + i];
  const std::size_t ia = a.id();
  return a.tape().record("expand", std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < inner; ++i) ga[o * inner + i] += g[(o * n + j) * inner + i];
  });
}

namespace {
Var reduce_axis(const char* name, const Var& a, std::size_t axis, double factor) {
  const AxisSplit sp = split_axis(a.shape(), axis);
  Shape out = a.shape();
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor y(out);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t j = 0; j < sp.n; ++j)
      for (std::size_t i = 0; i < sp.inner; ++i)
        y[o * sp.inner + i] += x[(o * sp.n + j) * sp.inner + i];
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t j = 0; j < sp.n; ++j)
        for (std::size_t i = 0; i < sp.inner; ++i)
          ga[(o * sp.n + j) * sp.inner + i] += factor * g[o * sp.inner + i];
  });
}

Var reduce_all(const char* name, const Var& a, double factor) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(name, Tensor::scalar(s * factor), {ia},
                         [=](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0] * factor;
                           Tensor& ga = t.grad_slot(ia);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                         });
}
}  // namespace

Var sum(const Var& a, std::size_t axis) { return reduce_axis("sum", a, axis, 1.0); }
Var mean(const Var& a, std::size_t axis) {
  return reduce_axis("mean", a, axis, 1.0 / static_cast<double>(a.shape().at(axis)));
}
Var sum_all(const Var& a) { return reduce_all("sum_all", a, 1.0); }
Var mean_all(const Var& a) {
  return reduce_all("mean_all", a, 1.0 / static_cast<double>(a.value().size()));
}

Var softmax(const Var& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("softmax requires rank >= 1");
  const std::size_t n = s.back();
  const std::size_t rows = a.value().size() / n;
  const Tensor& x = a.value();
  Tensor y(s);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[r * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[r * n + j] = std::exp(x[r * n + j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record("softmax", std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_slot(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var detach(const Var& a) { return a.tape().constant(a.value()); }

}  // namespace mfrpinp::ad
