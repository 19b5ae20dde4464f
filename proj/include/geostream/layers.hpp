#pragma once

#include <cstddef>
#include <vector>

#include "geostream/numerics.hpp"
#include "geostream/rng.hpp"
#include "geostream/tensor.hpp"

namespace geostream {

// x [n x in] times w^T where w is [out x in].
Tensor linear(const Tensor& x, const Tensor& w);

struct LayerNormParams {
  std::vector<double> gain;
  std::vector<double> bias;

  static LayerNormParams identity(std::size_t dim);
};

Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

// One multi-head attention sublayer's slow weights. All four projections
// are model_dim x model_dim; heads split the projected features evenly.
struct AttentionParams {
  Tensor w_q, w_k, w_v, w_o;
  LayerNormParams ln;
  std::size_t heads = 4;

  std::size_t model_dim() const { return w_q.cols(); }
  void validate() const;

  static AttentionParams init(std::size_t model_dim, std::size_t heads,
                              RngState& rng);
};

struct ProjectedKv {
  Tensor k;
  Tensor v;
};

// Key/value projections of already normed (and embedded) tokens.
ProjectedKv project_kv(const Tensor& normed, const AttentionParams& p);

// Per-head masked attention over projected tensors, heads re-concatenated.
// The output projection w_o is NOT applied here.
Tensor multihead_from_projected(const Tensor& q_proj, const ProjectedKv& kv,
                                std::size_t heads, const AttentionMask& mask);

// Full pre-norm residual sublayer: x + W_o . MHA(LN(x)) under the mask.
Tensor attention_sublayer(const Tensor& tokens, const AttentionParams& p,
                          const AttentionMask& mask);

}  // namespace geostream
