#include "mfrpinp/ad/losses.hpp"

#include <cmath>
#include <numbers>

#include "mfrpinp/ad/ops.hpp"
#include "mfrpinp/error.hpp"

namespace mfrpinp::ad {
namespace {

void require_positive(const Tensor& v, const char* what) {
  for (double x : v.data()) {
    if (!(x > 0)) {
      throw NumericError(std::string(what) + ": variance must be positive, got " +
                         std::to_string(x));
    }
  }
}

void require_same(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

std::size_t row_count(const Shape& s) {
  return s.size() <= 1 ? 1 : shape_size(s) / s.back();
}

}  // namespace

double gaussian_nll_value(std::span<const double> y, std::span<const double> mu,
                          std::span<const double> var, std::size_t rows) {
  if (y.size() != mu.size() || y.size() != var.size()) {
    throw ShapeError("gaussian_nll: operands differ in length");
  }
  if (rows == 0) throw ShapeError("gaussian_nll: zero rows");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(var[i] > 0)) {
      throw NumericError("gaussian_nll: variance must be positive, got " +
                         std::to_string(var[i]));
    }
    const double r = y[i] - mu[i];
    s += std::log(2.0 * std::numbers::pi * var[i]) + r * r / var[i];
  }
  return s / (2.0 * static_cast<double>(rows));
}

Var gaussian_nll(const Var& y, const Var& mu, const Var& var) {
  require_same(y, mu, "gaussian_nll");
  require_same(y, var, "gaussian_nll");
  const std::size_t rows = row_count(y.shape());
  const double value =
      gaussian_nll_value(y.value().data(), mu.value().data(), var.value().data(), rows);
  const std::size_t iy = y.id(), im = mu.id(), iv = var.id();
  const double inv_n = 1.0 / static_cast<double>(rows);
  return y.tape().record(
      "gaussian_nll", Tensor::scalar(value), {iy, im, iv}, [=](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& yv = t.value(iy);
        const Tensor& mv = t.value(im);
        const Tensor& vv = t.value(iv);
        const bool gy = t.requires_grad(iy), gm = t.requires_grad(im), gv = t.requires_grad(iv);
        for (std::size_t i = 0; i < yv.size(); ++i) {
          const double r = yv[i] - mv[i];
          if (gy) t.grad_slot(iy)[i] += g * inv_n * r / vv[i];
          if (gm) t.grad_slot(im)[i] -= g * inv_n * r / vv[i];
          if (gv) t.grad_slot(iv)[i] += g * 0.5 * inv_n * (1.0 / vv[i] - r * r / (vv[i] * vv[i]));
        }
      });
}

Var diag_gaussian_kl(const Var& mu1, const Var& var1, const Var& mu2, const Var& var2) {
  require_same(mu1, var1, "diag_gaussian_kl");
  require_same(mu1, mu2, "diag_gaussian_kl");
  require_same(mu1, var2, "diag_gaussian_kl");
  require_positive(var1.value(), "diag_gaussian_kl");
  require_positive(var2.value(), "diag_gaussian_kl");
  const Tensor& m1 = mu1.value();
  const Tensor& v1 = var1.value();
  const Tensor& m2 = mu2.value();
  const Tensor& v2 = var2.value();
  double kl = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) {
    const double d = m1[i] - m2[i];
    kl += 0.5 * (std::log(v2[i] / v1[i]) + (v1[i] + d * d) / v2[i] - 1.0);
  }
  const std::size_t a = mu1.id(), b = var1.id(), c = mu2.id(), e = var2.id();
  return mu1.tape().record(
      "diag_gaussian_kl", Tensor::scalar(kl), {a, b, c, e}, [=](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& m1 = t.value(a);
        const Tensor& v1 = t.value(b);
        const Tensor& m2 = t.value(c);
        const Tensor& v2 = t.value(e);
        for (std::size_t i = 0; i < m1.size(); ++i) {
          const double d = m1[i] - m2[i];
          if (t.requires_grad(a)) t.grad_slot(a)[i] += g * d / v2[i];
          if (t.requires_grad(c)) t.grad_slot(c)[i] -= g * d / v2[i];
          if (t.requires_grad(b)) t.grad_slot(b)[i] += g * 0.5 * (1.0 / v2[i] - 1.0 / v1[i]);
          if (t.requires_grad(e))
            t.grad_slot(e)[i] += g * 0.5 * (1.0 / v2[i] - (v1[i] + d * d) / (v2[i] * v2[i]));
        }
      });
}

Var reparameterized_sample(const Var& mu, const Var& var, Rng& rng) {
  require_same(mu, var, "reparameterized_sample");
  require_positive(var.value(), "reparameterized_sample");
  Tensor eps(mu.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
  return mu + sqrt(var) * mu.tape().constant(std::move(eps));
}

}  // namespace mfrpinp::ad
