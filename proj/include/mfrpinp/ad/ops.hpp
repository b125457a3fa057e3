#pragma once

#include <span>
#include <vector>

#include "mfrpinp/ad/tape.hpp"

// Differentiable primitives. Elementwise binary ops accept only identical
// shapes or a single-element operand; anything else raises ShapeError. Row
// broadcasting of biases and axis expansion are separate, explicit ops.
namespace mfrpinp::ad {

/// [m,k]x[k,n], [B,m,k]x[k,n] (shared right operand) or [B,m,k]x[B,k,n].
Var matmul(const Var& a, const Var& b);
/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
/// Adds a vector of length n to every row of a [..., n] tensor.
Var add_bias(const Var& a, const Var& bias);
/// Multiplies every row of a [..., n] tensor elementwise by a length-n vector.
Var mul_rows(const Var& a, const Var& row);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var tanh(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);

/// Concatenation along the last axis; leading dimensions must agree.
Var concat(std::span<const Var> parts);
inline Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t len);
Var reshape(const Var& a, Shape shape);
/// Inserts a new axis of size n at `axis`, repeating the input along it.
Var expand(const Var& a, std::size_t axis, std::size_t n);

Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a, std::size_t axis);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
/// Softmax over the last axis.
Var softmax(const Var& a);

/// Value copy with no gradient path back to `a`.
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// Numerically stable log(1 + e^x).
double softplus_value(double x);

}  // namespace mfrpinp::ad
