#pragma once

#include <functional>
#include <vector>

#include "geostream/tensor.hpp"

namespace geostream {

inline constexpr double kLayerNormEpsilon = 1e-6;

double silu(double x);

// Row-stochastic attention matrix: softmax over allowed keys of
// q.k / sqrt(d), with the row max subtracted before exponentiation.
// Disallowed entries are exactly zero. Throws ShapeError if any query has
// no allowed key.
Tensor attention_weights(const Tensor& q, const Tensor& k,
                         const AttentionMask& mask);

// attention_weights(q, k, mask) . v
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask& mask);

// Per-row layer norm with learned gain/bias. Normalizes across the last
// dimension with epsilon added to the variance before the square root.
Tensor layer_norm(const Tensor& x, const std::vector<double>& gain,
                  const std::vector<double>& bias);

// Gated MLP: f(x) = W_down . (silu(W_gate x) * (W_up x)), elementwise gate.
// Weights are stored output-major so rows index output units.
struct SwigluParams {
  Tensor w_gate;  // [hidden x dim]
  Tensor w_up;    // [hidden x dim]
  Tensor w_down;  // [dim x hidden]

  std::size_t dim() const { return w_gate.cols(); }
  std::size_t hidden() const { return w_gate.rows(); }

  static SwigluParams zeros(std::size_t dim, std::size_t hidden);
  void validate() const;
};

// x is [n x dim]; returns [n x dim].
Tensor swiglu_forward(const SwigluParams& p, const Tensor& x);

enum class LossKind { squared_error };

struct SwigluGradients {
  double loss = 0.0;
  Tensor d_gate;
  Tensor d_up;
  Tensor d_down;
};

// Analytic gradient of the loss between swiglu_forward(p, x) and target.
// squared_error averages over all n*dim output elements.
SwigluGradients swiglu_grad(const SwigluParams& p, const Tensor& x,
                            const Tensor& target,
                            LossKind kind = LossKind::squared_error);

// Central finite differences of f at theta. Step h applies per coordinate.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& theta, double step);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|), the relative-error metric used
// by the gradient checks.
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace geostream
