#include "geostream/layers.hpp"

#include <cmath>

#include "geostream/errors.hpp"

namespace geostream {

Tensor linear(const Tensor& x, const Tensor& w) { return matmul_abt(x, w); }

LayerNormParams LayerNormParams::identity(std::size_t dim) {
  return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gain, p.bias);
}

void AttentionParams::validate() const {
  std::size_t d = w_q.cols();
  if (w_q.rows() != d || !w_k.same_shape(w_q) || !w_v.same_shape(w_q) ||
      !w_o.same_shape(w_q)) {
    throw ShapeError("attention: projections must be square and equal");
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: model_dim must divide evenly into heads");
  }
  if (ln.gain.size() != d || ln.bias.size() != d) {
    throw ShapeError("attention: layer norm dim mismatch");
  }
}

AttentionParams AttentionParams::init(std::size_t model_dim,
                                      std::size_t heads, RngState& rng) {
  AttentionParams p;
  double stddev = 1.0 / std::sqrt(static_cast<double>(model_dim));
  p.w_q = random_matrix(rng, model_dim, model_dim, stddev);
  p.w_k = random_matrix(rng, model_dim, model_dim, stddev);
  p.w_v = random_matrix(rng, model_dim, model_dim, stddev);
  p.w_o = random_matrix(rng, model_dim, model_dim, stddev);
  p.ln = LayerNormParams::identity(model_dim);
  p.heads = heads;
  p.validate();
  return p;
}

ProjectedKv project_kv(const Tensor& normed, const AttentionParams& p) {
  return {linear(normed, p.w_k), linear(normed, p.w_v)};
}

Tensor multihead_from_projected(const Tensor& q_proj, const ProjectedKv& kv,
                                std::size_t heads, const AttentionMask& mask) {
  if (q_proj.cols() != kv.k.cols() || !kv.k.same_shape(kv.v)) {
    throw ShapeError("attention: projected q/k/v dims differ");
  }
  std::size_t d = q_proj.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: head split mismatch");
  }
  std::size_t hd = d / heads;
  Tensor out = Tensor::matrix(q_proj.rows(), d);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q_h = slice_cols(q_proj, h * hd, (h + 1) * hd);
    Tensor k_h = slice_cols(kv.k, h * hd, (h + 1) * hd);
    Tensor v_h = slice_cols(kv.v, h * hd, (h + 1) * hd);
    paste_cols(out, h * hd, masked_attention(q_h, k_h, v_h, mask));
  }
  return out;
}

Tensor attention_sublayer(const Tensor& tokens, const AttentionParams& p,
                          const AttentionMask& mask) {
  p.validate();
  Tensor normed = layer_norm(tokens, p.ln);
  Tensor q = linear(normed, p.w_q);
  ProjectedKv kv = project_kv(normed, p);
  Tensor mixed = multihead_from_projected(q, kv, p.heads, mask);
  return add(tokens, linear(mixed, p.w_o));
}

}  // namespace geostream
