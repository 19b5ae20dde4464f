#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "geostream/alignment.hpp"
#include "geostream/block.hpp"
#include "geostream/geometry.hpp"
#include "geostream/ttt.hpp"

namespace geostream {

// Half-open frame range [begin, end).
struct ChunkSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t frames() const { return end - begin; }
};

struct PartitionPlan {
  std::size_t n_frames = 0;
  std::size_t chunk_size = 0;
  std::size_t overlap = 0;
  std::vector<ChunkSpan> chunks;

  std::size_t n_chunks() const { return chunks.size(); }
};

// Chunk m starts at m * (chunk_size - overlap), so consecutive chunks share
// exactly `overlap` frames. The final chunk is ragged but always keeps at
// least overlap + 1 frames.
PartitionPlan partition_chunks(std::size_t n_frames, std::size_t chunk_size,
                               std::size_t overlap);

enum class MotionModel : std::uint8_t { straight, turn, loop, mixed };

struct SceneOptions {
  MotionModel motion = MotionModel::straight;
  double step = 0.25;        // per-frame camera advance
  double turn_rate = 0.04;   // radians per frame in turning segments
  double jitter = 0.001;     // translation wobble
  double z_min = 0.5;        // depth range of the generated surfaces
  double z_max = 8.0;
  std::size_t map_rows = 2;  // ground-truth pointmap resolution
  std::size_t map_cols = 2;

  void validate() const;  // ConfigError on nonsense values
};

// Ground-truth camera trajectory plus camera-frame pointmaps of a random
// smooth surface in front of each camera.
struct SyntheticScene {
  Trajectory trajectory;
  std::vector<Pointmap> pointmaps;
  std::uint64_t seed = 0;

  std::size_t frames() const { return trajectory.size(); }
};

SyntheticScene generate_scene(std::size_t n_frames, const SceneOptions& opts,
                              std::uint64_t seed);

// File-fed variant: keeps the supplied trajectory and synthesizes pointmaps
// in front of each given camera. Motion options are ignored.
SyntheticScene scene_from_trajectory(const Trajectory& traj,
                                     const SceneOptions& opts,
                                     std::uint64_t seed);

enum class GaugeMode : std::uint8_t { none, per_chunk_se3, per_chunk_sim3 };

// Synthetic predictor: ground truth re-expressed in an independent random
// gauge per chunk, with optional prediction noise. With all sigmas zero the
// output is exactly gauge-transformed truth, so the stitcher must recover
// the scene exactly.
struct OracleConfig {
  GaugeMode gauge_mode = GaugeMode::none;
  double sigma_t = 0.0;  // per-frame translation noise
  double sigma_r = 0.0;  // per-frame rotation angle noise, radians
  // Per-chunk log-normal factor applied to the pointmaps of the frames a
  // chunk shares with its predecessor: an inconsistent re-prediction of
  // the seam, the seed of scale drift. A coherent whole-chunk factor would
  // be just another gauge and stitch away exactly.
  double sigma_s = 0.0;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on negative sigmas
};

std::vector<ChunkPrediction> oracle_predict(const SyntheticScene& scene,
                                            const PartitionPlan& plan,
                                            const OracleConfig& cfg);

struct ChunkDiagnostics {
  std::size_t chunk_index = 0;
  std::size_t frames = 0;
  double seconds = 0.0;
  std::size_t state_bytes = 0;
  bool reset_applied = false;
};

struct StreamOptions {
  std::int64_t reset_period = 5;  // 0 disables resets
  StitchMode align_mode = StitchMode::rigid;
  // When false the per-chunk outputs are concatenated raw (overlap frames
  // deduplicated, earlier chunk wins) with identity chunk transforms.
  bool stitch = true;
};

struct StreamResult {
  std::vector<std::int64_t> frame_ids;
  std::vector<PoseSE3> poses;        // stitched into the first chunk's frame
  std::vector<Pointmap> pointmaps;   // scale-adjusted local pointmaps
  std::vector<double> confidence;    // per frame, mean over tokens
  std::vector<PoseSE3> chunk_transforms;
  std::vector<double> chunk_scales;
  std::vector<ChunkDiagnostics> per_chunk;
};

// Deterministic per-frame token features derived from the scene geometry.
// Token p reads pixel p of the frame's pointmap (wrapping if the grid is
// smaller than tokens_per_frame).
Tensor frame_features(const SyntheticScene& scene, std::size_t frame,
                      std::size_t tokens_per_frame, std::size_t feature_dim);

// Streaming inference: chunks left to right through the stack, fast weights
// reset every reset_period chunks, frames re-joined by the feedforward
// stitcher. Seam continuity across resets comes from the alignment alone.
// When `state` is given it is used and mutated in place (it must be fresh
// or a continuation of the same stream); otherwise a fresh one is created.
StreamResult run_stream(const StackParams& params, const StackConfig& cfg,
                        const SyntheticScene& scene, const PartitionPlan& plan,
                        const StreamOptions& opts,
                        StreamState* state = nullptr);

// Key-value associative recall probing the fast-weight memory directly:
// random unit keys and unit values, mean squared retrieval error before and
// after one pass of chunk-wise updates. Unit values pin the before-error at
// 1 (the output projection starts at zero), so after-errors are comparable
// across pair counts.
struct RecallReport {
  std::size_t n_pairs = 0;
  std::size_t dims = 0;
  double before = 0.0;
  double after = 0.0;
};

struct RecallResult {
  Tensor keys;    // [n_pairs x dims]
  Tensor values;  // [n_pairs x dims]
  RecallReport report;
};

RecallResult recall_task(std::size_t n_pairs, std::size_t dims,
                         std::uint64_t seed, double learning_rate = 0.2,
                         std::size_t pairs_per_chunk = 8);

// JSON-lines trajectory dump, one frame per line: frame_id and the 12 pose
// floats of the 3x4 [R|t] matrix in row-major order.
void write_pose_jsonl(std::ostream& os, std::span<const std::int64_t> ids,
                      std::span<const PoseSE3> poses);
// Inverse of write_pose_jsonl. ParseError names the offending line.
Trajectory read_pose_jsonl(std::istream& is);

}  // namespace geostream
