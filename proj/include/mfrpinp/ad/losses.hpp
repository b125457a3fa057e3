#pragma once

#include <span>

#include "mfrpinp/ad/params.hpp"
#include "mfrpinp/ad/tape.hpp"

namespace mfrpinp::ad {

/// (1/(2N)) * sum_ij [log(2*pi*var_ij) + (y_ij - mu_ij)^2 / var_ij], where N is
/// the number of rows (size / last dimension). Throws NumericError on var <= 0.
double gaussian_nll_value(std::span<const double> y, std::span<const double> mu,
                          std::span<const double> var, std::size_t rows);

/// Differentiable form of gaussian_nll_value with respect to all three inputs.
Var gaussian_nll(const Var& y, const Var& mu, const Var& var);

/// sum_j 0.5 * [log(v2/v1) + (v1 + (m1 - m2)^2) / v2 - 1]  =  KL(N1 || N2),
/// summed over every element.
Var diag_gaussian_kl(const Var& mu1, const Var& var1, const Var& mu2, const Var& var2);

/// z = mu + sqrt(var) * eps, eps ~ N(0, I) drawn from `rng`.
Var reparameterized_sample(const Var& mu, const Var& var, Rng& rng);

}  // namespace mfrpinp::ad
