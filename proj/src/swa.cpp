#include "geostream/swa.hpp"

#include "geostream/errors.hpp"

namespace geostream {

void TokenBlock::validate() const {
  if (frames == 0 || tokens_per_frame == 0) {
    throw ShapeError("token block: empty chunk");
  }
  if (tokens.rank() != 2 || tokens.rows() != n_tokens()) {
    throw ShapeError("token block: row count != frames * tokens_per_frame");
  }
  if (frame_ids.size() != frames || status.size() != frames) {
    throw ShapeError("token block: per-frame metadata size mismatch");
  }
  for (std::size_t i = 1; i < frame_ids.size(); ++i) {
    if (frame_ids[i] <= frame_ids[i - 1]) {
      throw DataError("token block: frame ids must strictly increase");
    }
  }
}

OverlapEmbeddings OverlapEmbeddings::zeros(std::size_t dim) {
  return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0),
          std::vector<double>(dim, 0.0)};
}

OverlapEmbeddings OverlapEmbeddings::init(std::size_t dim, RngState& rng) {
  OverlapEmbeddings e = zeros(dim);
  for (double& v : e.prev_vec) v = 0.02 * rng.normal();
  for (double& v : e.none_vec) v = 0.02 * rng.normal();
  for (double& v : e.next_vec) v = 0.02 * rng.normal();
  return e;
}

const std::vector<double>& OverlapEmbeddings::for_status(
    OverlapStatus s) const {
  switch (s) {
    case OverlapStatus::overlaps_previous:
      return prev_vec;
    case OverlapStatus::no_overlap:
      return none_vec;
    case OverlapStatus::overlaps_next:
      return next_vec;
  }
  throw ConfigError("overlap embeddings: unknown status");
}

SwaLayerParams SwaLayerParams::init(std::size_t model_dim, std::size_t heads,
                                    RngState& rng) {
  return {AttentionParams::init(model_dim, heads, rng),
          OverlapEmbeddings::init(model_dim, rng)};
}

AttentionMask build_swa_mask(const ChunkWindow& window) {
  window.cur.validate();
  std::size_t nq = window.cur.n_tokens();
  std::size_t nk = nq;
  if (window.prev) {
    window.prev->validate();
    nk += window.prev->n_tokens();
  }
  // Every current-chunk query sees every key in the two-chunk union.
  return AttentionMask::all_allowed(nq, nk);
}

Tensor apply_overlap_embeddings(const Tensor& tokens,
                                std::span<const OverlapStatus> statuses,
                                std::size_t tokens_per_frame,
                                const OverlapEmbeddings& emb) {
  if (tokens_per_frame == 0 ||
      tokens.rows() != statuses.size() * tokens_per_frame) {
    throw ShapeError("overlap embeddings: one status per frame required");
  }
  std::size_t dim = tokens.cols();
  if (emb.prev_vec.size() != dim || emb.none_vec.size() != dim ||
      emb.next_vec.size() != dim) {
    throw ShapeError("overlap embeddings: dim mismatch");
  }
  Tensor out = tokens;
  for (std::size_t f = 0; f < statuses.size(); ++f) {
    const std::vector<double>& vec = emb.for_status(statuses[f]);
    for (std::size_t r = f * tokens_per_frame; r < (f + 1) * tokens_per_frame;
         ++r) {
      for (std::size_t c = 0; c < dim; ++c) out.at(r, c) += vec[c];
    }
  }
  return out;
}

SwaResult swa_forward(const ChunkWindow& window, const SwaCache& cache,
                      const SwaLayerParams& params) {
  window.cur.validate();
  params.attn.validate();

  Tensor cur_normed = layer_norm(window.cur.tokens, params.attn.ln);
  Tensor cur_emb = apply_overlap_embeddings(
      cur_normed, window.cur.status, window.cur.tokens_per_frame, params.emb);
  Tensor q = linear(cur_emb, params.attn.w_q);
  ProjectedKv cur_kv = project_kv(cur_emb, params.attn);

  ProjectedKv window_kv = cur_kv;
  if (!cache.empty()) {
    if (cache.chunk_index != window.chunk_index - 1) {
      throw CacheError("swa: cache does not belong to the previous chunk");
    }
    window_kv = {vstack(cache.keys, cur_kv.k), vstack(cache.values, cur_kv.v)};
  } else if (window.prev) {
    window.prev->validate();
    Tensor prev_normed = layer_norm(window.prev->tokens, params.attn.ln);
    Tensor prev_emb = apply_overlap_embeddings(prev_normed,
                                               window.prev->status,
                                               window.prev->tokens_per_frame,
                                               params.emb);
    ProjectedKv prev_kv = project_kv(prev_emb, params.attn);
    window_kv = {vstack(prev_kv.k, cur_kv.k), vstack(prev_kv.v, cur_kv.v)};
  }

  std::size_t nq = window.cur.n_tokens();
  AttentionMask mask = AttentionMask::all_allowed(nq, window_kv.k.rows());
  Tensor mixed = multihead_from_projected(q, window_kv, params.attn.heads,
                                          mask);
  Tensor out = add(window.cur.tokens, linear(mixed, params.attn.w_o));

  SwaResult result;
  result.tokens = std::move(out);
  result.cache.chunk_index = window.chunk_index;
  result.cache.keys = std::move(cur_kv.k);
  result.cache.values = std::move(cur_kv.v);
  return result;
}

}  // namespace geostream
