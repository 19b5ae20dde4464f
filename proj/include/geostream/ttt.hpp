#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geostream/numerics.hpp"
#include "geostream/rng.hpp"
#include "geostream/tensor.hpp"

namespace geostream {

struct TttConfig {
  double learning_rate = 0.05;  // 0 is allowed and makes updates no-ops
  double momentum_coeff = 0.9;
  int newton_schulz_iters = 5;
  std::size_t n_heads = 1;
  std::size_t head_dim = 32;
  std::size_t expansion = 4;  // hidden = expansion * head_dim
  // Streaming memory is wiped every reset_period chunks; 0 disables resets.
  std::int64_t reset_period = 5;

  std::size_t hidden() const { return expansion * head_dim; }
  void validate() const;  // ConfigError on nonsense values
};

// Orthogonalize m by a fixed number of Newton-Schulz iterations of the
// quintic X <- a X + b (A X) + c (A^2 X), A = X X^T, after normalizing by
// the Frobenius norm. With (a, b, c) = (15/8, -10/8, 3/8) the map is a
// contraction toward the polar factor U V^T for any nonzero input, so the
// returned matrix has singular values near 1.
Tensor newton_schulz_orthogonalize(const Tensor& m, int iters);

struct MuonResult {
  Tensor direction;     // orthogonalized momentum, same shape as grad
  Tensor new_momentum;  // momentum_coeff * momentum + grad
};

// One Muon step: accumulate momentum, then orthogonalize it. The caller
// applies direction scaled by the learning rate.
MuonResult muon_step(const Tensor& grad, const Tensor& momentum,
                     const TttConfig& cfg);

// Per-head fast weights adapted at test time, plus Muon momentum and the
// frozen copy used by resets.
struct FastWeightState {
  std::vector<SwigluParams> heads;
  std::vector<SwigluParams> momentum;
  std::vector<SwigluParams> initial;
  std::int64_t chunks_absorbed = 0;

  std::size_t n_heads() const { return heads.size(); }
  std::size_t head_dim() const { return heads.at(0).dim(); }
  std::size_t hidden() const { return heads.at(0).hidden(); }
  void validate() const;

  // Gate/up get small random init; the down projection starts at zero so a
  // fresh memory contributes nothing through the residual path.
  static FastWeightState init(const TttConfig& cfg, RngState& rng);
};

// Apply the fast-weight nets to already-projected queries,
// q: [n x n_heads*head_dim], heads side by side. Read-only.
Tensor fastweight_apply(const FastWeightState& state, const Tensor& q);

// Absorb one chunk: per head, gradient of the mean squared reconstruction
// error f(k) vs v, one Muon step per weight matrix. If any gradient is
// non-finite the state is left untouched and NumericalError is thrown.
void fastweight_update(FastWeightState& state, const Tensor& k,
                       const Tensor& v, const TttConfig& cfg);

// Slow (frozen) projections wrapping the fast weights inside a token block.
struct TttProjections {
  Tensor w_q;    // [n_heads*head_dim x model_dim]
  Tensor w_k;    // [n_heads*head_dim x model_dim]
  Tensor w_v;    // [n_heads*head_dim x model_dim]
  Tensor w_out;  // [model_dim x n_heads*head_dim]

  static TttProjections init(std::size_t model_dim, const TttConfig& cfg,
                             RngState& rng);
};

// tokens_normed: [n x model_dim] (pre-norm applied by the caller).
Tensor ttt_apply(const FastWeightState& state, const TttProjections& proj,
                 const Tensor& tokens_normed);
void ttt_update(FastWeightState& state, const TttProjections& proj,
                const Tensor& tokens_normed, const TttConfig& cfg);

// Back to the frozen initial weights, zero momentum, zero chunk count.
void reset_state(FastWeightState& state);

// Fixed-layout binary snapshot: a space-padded JSON header line of constant
// length followed by little-endian doubles. The byte size depends only on
// the dimensions, never on how many chunks were absorbed.
void save_fast_weights(const FastWeightState& state, const std::string& path);
FastWeightState load_fast_weights(const std::string& path);
std::size_t fast_weight_bytes(const FastWeightState& state);

}  // namespace geostream
