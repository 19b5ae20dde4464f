#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "geostream/layers.hpp"
#include "geostream/tensor.hpp"

namespace geostream {

// Whether a frame is shared with the previous chunk, the next chunk, or
// neither. A frame shared with both reports overlaps_previous.
enum class OverlapStatus : std::uint8_t {
  overlaps_previous = 0,
  no_overlap = 1,
  overlaps_next = 2,
};

// A chunk's tokens plus per-frame metadata. Tokens are laid out frame by
// frame, tokens_per_frame rows each.
struct TokenBlock {
  Tensor tokens;
  std::size_t frames = 0;
  std::size_t tokens_per_frame = 0;
  std::vector<std::int64_t> frame_ids;
  std::vector<OverlapStatus> status;

  std::size_t n_tokens() const { return frames * tokens_per_frame; }
  void validate() const;  // ShapeError / DataError on inconsistencies
};

// The sliding window: the current chunk plus, from chunk 2 on, the
// previous chunk's tokens at the same depth.
struct ChunkWindow {
  TokenBlock cur;
  std::optional<TokenBlock> prev;
  std::int64_t chunk_index = 0;  // 0-based position in the stream
};

// Three additive per-status vectors.
struct OverlapEmbeddings {
  std::vector<double> prev_vec;
  std::vector<double> none_vec;
  std::vector<double> next_vec;

  static OverlapEmbeddings zeros(std::size_t dim);
  static OverlapEmbeddings init(std::size_t dim, RngState& rng);
  const std::vector<double>& for_status(OverlapStatus s) const;
};

// Post-projection keys/values of one chunk, kept for the next chunk's
// window so the previous chunk is never re-projected.
struct SwaCache {
  std::int64_t chunk_index = -1;
  Tensor keys;
  Tensor values;

  bool empty() const { return keys.empty(); }
  std::size_t bytes() const { return (keys.size() + values.size()) * 8; }
  void clear() { *this = SwaCache{}; }
};

struct SwaLayerParams {
  AttentionParams attn;
  OverlapEmbeddings emb;

  static SwaLayerParams init(std::size_t model_dim, std::size_t heads,
                             RngState& rng);
};

// Queries are current-chunk tokens; keys span previous + current tokens.
AttentionMask build_swa_mask(const ChunkWindow& window);

// Add each frame's status vector to all of that frame's token rows.
Tensor apply_overlap_embeddings(const Tensor& tokens,
                                std::span<const OverlapStatus> statuses,
                                std::size_t tokens_per_frame,
                                const OverlapEmbeddings& emb);

struct SwaResult {
  Tensor tokens;   // residual-added current-chunk tokens
  SwaCache cache;  // this chunk's keys/values for the next window
};

// Residual sliding-window attention. A nonempty cache must belong to
// chunk_index - 1 (CacheError otherwise) and replaces re-projection of
// window.prev; with an empty cache, window.prev (if present) is projected
// on the fly, which is the stateless recomputation path.
SwaResult swa_forward(const ChunkWindow& window, const SwaCache& cache,
                      const SwaLayerParams& params);

}  // namespace geostream
