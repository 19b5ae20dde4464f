#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geostream/geometry.hpp"
#include "geostream/layers.hpp"
#include "geostream/swa.hpp"
#include "geostream/tensor.hpp"
#include "geostream/ttt.hpp"

namespace geostream {

struct StackConfig {
  std::size_t model_dim = 64;
  std::size_t n_blocks = 4;
  std::size_t heads = 4;
  std::size_t patch_rows = 2;
  std::size_t patch_cols = 2;
  std::size_t feature_dim = 8;
  // 1-based block indices carrying a sliding-window attention sublayer.
  std::vector<std::size_t> swa_depths{2, 4};
  TttConfig ttt;
  // Ablation switches used by the scaling benchmark variants.
  bool enable_ttt = true;
  bool enable_swa = true;
  // When false, SWA recomputes the previous chunk's projections from its
  // retained tokens instead of reading the key/value cache.
  bool use_kv_cache = true;

  std::size_t tokens_per_frame() const { return patch_rows * patch_cols; }
  void validate() const;

  static StackConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct TttLayerParams {
  TttProjections proj;
  LayerNormParams ln;
};

struct BlockParams {
  AttentionParams frame_attn;
  std::optional<SwaLayerParams> swa;  // present iff depth in swa_depths
  TttLayerParams ttt;
  AttentionParams chunk_attn;
};

struct PredictionHeads {
  Tensor pointmap_w;  // [3 x model_dim]
  std::vector<double> pointmap_b;
  Tensor pose_w;  // [9 x model_dim]: 6 rotation values + 3 translation
  std::vector<double> pose_b;
  Tensor conf_w;  // [1 x model_dim]
  std::vector<double> conf_b;

  static PredictionHeads init(std::size_t model_dim, RngState& rng);
};

// Slow weights of the whole backbone, including the frozen initial fast
// weights each fresh stream starts from.
struct StackParams {
  Tensor embed_w;  // [model_dim x feature_dim]
  std::vector<double> embed_b;
  std::vector<BlockParams> blocks;
  std::vector<FastWeightState> fast_init;  // one per block
  PredictionHeads heads;

  static StackParams init(const StackConfig& cfg, RngState& rng);
};

// Identity of the frames inside one chunk.
struct FrameMeta {
  std::vector<std::int64_t> frame_ids;
  std::vector<OverlapStatus> status;

  std::size_t frames() const { return frame_ids.size(); }
};

// Mutable per-stream state: fast weights and the sliding window memory for
// every block, plus stream position bookkeeping.
struct BlockState {
  FastWeightState fast;
  SwaCache cache;
  std::optional<Tensor> prev_tokens;  // stateless-path copy, kv cache off
};

struct StreamState {
  std::vector<BlockState> blocks;
  std::int64_t chunks_processed = 0;
  std::optional<FrameMeta> prev_meta;

  static StreamState fresh(const StackParams& params);
  // Fast weights back to the initial snapshot, caches dropped.
  void reset_memory();
  std::size_t state_bytes() const;
};

// One residual block: frame attention, optional SWA, TTT apply-then-update,
// chunk-wide bidirectional attention.
Tensor block_forward(const BlockParams& bp, const StackConfig& cfg,
                     const TokenBlock& cur, std::int64_t chunk_index,
                     BlockState& state,
                     const std::optional<FrameMeta>& prev_meta);

struct ChunkOutput {
  std::vector<PoseSE3> poses;
  std::vector<Pointmap> pointmaps;
  Tensor confidence;  // [frames x tokens_per_frame]
  bool reset_applied = false;
};

// Run a chunk of per-token features [frames*tokens_per_frame x feature_dim]
// through the stack. Applies the reset policy at entry, advances fast
// weights by one update per TTT layer, and decodes poses and pointmaps.
ChunkOutput stack_forward(const StackParams& params, const StackConfig& cfg,
                          const Tensor& features, const FrameMeta& meta,
                          StreamState& state);

}  // namespace geostream
