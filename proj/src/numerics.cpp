#include "geostream/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geostream/errors.hpp"

namespace geostream {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// d/dx silu(x) = sigmoid(x) * (1 + x * (1 - sigmoid(x)))
double silu_deriv(double x) {
  double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k,
                         const AttentionMask& mask) {
  if (q.cols() != k.cols()) throw ShapeError("attention: key dim mismatch");
  if (mask.n_query() != q.rows() || mask.n_key() != k.rows()) {
    throw ShapeError("attention: mask shape mismatch");
  }
  if (!mask.every_query_has_key()) {
    throw MaskedOutError("attention: query with no allowed key");
  }
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = Tensor::matrix(q.rows(), k.rows());
  std::vector<double> scores(k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (!mask.allowed(i, j)) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) {
        dot += q.at(i, c) * k.at(j, c);
      }
      scores[j] = dot * inv_sqrt_d;
      if (scores[j] > row_max) row_max = scores[j];
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (!mask.allowed(i, j)) continue;
      scores[j] = std::exp(scores[j] - row_max);
      denom += scores[j];
    }
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (mask.allowed(i, j)) weights.at(i, j) = scores[j] / denom;
    }
  }
  return weights;
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask& mask) {
  if (k.rows() != v.rows()) throw ShapeError("attention: k/v row mismatch");
  return matmul(attention_weights(q, k, mask), v);
}

Tensor layer_norm(const Tensor& x, const std::vector<double>& gain,
                  const std::vector<double>& bias) {
  std::size_t d = x.cols();
  if (d < 2) throw ShapeError("layer_norm: needs at least 2 features");
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias dim mismatch");
  }
  Tensor out = Tensor::matrix(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += x.at(i, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      double dev = x.at(i, c) - mean;
      var += dev * dev;
    }
    var /= static_cast<double>(d);
    double inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t c = 0; c < d; ++c) {
      out.at(i, c) = gain[c] * (x.at(i, c) - mean) * inv_std + bias[c];
    }
  }
  return out;
}

SwigluParams SwigluParams::zeros(std::size_t dim, std::size_t hidden) {
  SwigluParams p;
  p.w_gate = Tensor::matrix(hidden, dim);
  p.w_up = Tensor::matrix(hidden, dim);
  p.w_down = Tensor::matrix(dim, hidden);
  return p;
}

void SwigluParams::validate() const {
  if (w_gate.rank() != 2 || w_up.rank() != 2 || w_down.rank() != 2) {
    throw ShapeError("swiglu: weights must be matrices");
  }
  if (!w_gate.same_shape(w_up) || w_down.rows() != w_gate.cols() ||
      w_down.cols() != w_gate.rows()) {
    throw ShapeError("swiglu: inconsistent weight shapes");
  }
}

Tensor swiglu_forward(const SwigluParams& p, const Tensor& x) {
  p.validate();
  if (x.cols() != p.dim()) throw ShapeError("swiglu: input dim mismatch");
  Tensor g = matmul_abt(x, p.w_gate);
  Tensor u = matmul_abt(x, p.w_up);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = silu(g[i]) * u[i];
  return matmul_abt(g, p.w_down);
}

SwigluGradients swiglu_grad(const SwigluParams& p, const Tensor& x,
                            const Tensor& target, LossKind kind) {
  if (kind != LossKind::squared_error) {
    throw ConfigError("swiglu_grad: unsupported loss kind");
  }
  p.validate();
  if (x.cols() != p.dim()) throw ShapeError("swiglu: input dim mismatch");
  if (target.rows() != x.rows() || target.cols() != p.dim()) {
    throw ShapeError("swiglu: target shape mismatch");
  }
  std::size_t n = x.rows();
  std::size_t d = p.dim();
  std::size_t hd = p.hidden();

  Tensor g = matmul_abt(x, p.w_gate);  // [n x hd]
  Tensor u = matmul_abt(x, p.w_up);    // [n x hd]
  Tensor h = Tensor::matrix(n, hd);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = silu(g[i]) * u[i];
  Tensor y = matmul_abt(h, p.w_down);  // [n x d]

  SwigluGradients out;
  out.d_gate = Tensor::matrix(hd, d);
  out.d_up = Tensor::matrix(hd, d);
  out.d_down = Tensor::matrix(d, hd);

  double inv_count = 1.0 / static_cast<double>(n * d);
  Tensor dy = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < y.size(); ++i) {
    double diff = y[i] - target[i];
    out.loss += diff * diff;
    dy[i] = 2.0 * diff * inv_count;
  }
  out.loss *= inv_count;

  // dL/dW_down = dy^T . h
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      double dyi = dy.at(r, i);
      if (dyi == 0.0) continue;
      for (std::size_t j = 0; j < hd; ++j) {
        out.d_down.at(i, j) += dyi * h.at(r, j);
      }
    }
  }
  // dL/dh = dy . W_down, then split through the gate.
  Tensor dh = matmul(dy, p.w_down);  // [n x hd]
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < hd; ++j) {
      double dg = dh.at(r, j) * u.at(r, j) * silu_deriv(g.at(r, j));
      double du = dh.at(r, j) * silu(g.at(r, j));
      for (std::size_t c = 0; c < d; ++c) {
        out.d_gate.at(j, c) += dg * x.at(r, c);
        out.d_up.at(j, c) += du * x.at(r, c);
      }
    }
  }
  return out;
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& theta, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_grad: step must be > 0");
  std::vector<double> grad(theta.size());
  std::vector<double> probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + step;
    double up = f(probe);
    probe[i] = theta[i] - step;
    double down = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: non-finite evaluation");
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_rel_error(const std::vector<double>& a,
                     const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("max_rel_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace geostream
