#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geostream/geometry.hpp"

namespace geostream {

// Raw per-chunk predictions before stitching: camera-to-world poses and
// local (camera-frame) pointmaps, one of each per frame.
struct ChunkPrediction {
  std::size_t chunk_index = 0;
  std::vector<std::int64_t> frame_ids;
  std::vector<PoseSE3> poses;
  std::vector<Pointmap> pointmaps;

  std::size_t frames() const { return frame_ids.size(); }
  void validate() const;
};

enum class StitchMode : std::uint8_t { rigid, similarity };

struct StitchOptions {
  StitchMode mode = StitchMode::rigid;
  // Alternative scale estimator: mean after dropping trunc_fraction of the
  // ratios at each tail. The default estimator is the lower median.
  bool truncated_mean = false;
  double trunc_fraction = 0.25;
};

// One stitched trajectory. Overlap frames appear once, with the earlier
// chunk's pose; chunk_transforms[0] is the identity and chunk_scales[0] = 1.
struct AlignedStream {
  std::vector<std::int64_t> frame_ids;
  std::vector<PoseSE3> poses;
  std::vector<Pointmap> pointmaps;  // scale-adjusted local pointmaps
  std::vector<PoseSE3> chunk_transforms;
  std::vector<double> chunk_scales;
};

// Rigid seam transform from the shared frame's two poses:
// A_m = prev_aligned * cur_raw^-1.
PoseSE3 align_chunk_se3(const PoseSE3& prev_aligned_overlap_pose,
                        const PoseSE3& cur_raw_overlap_pose);

// Relative scale between two chunks from their overlap pointmaps: the
// lower median (or truncated mean) of per-pixel norm ratios
// ||prev|| / ||cur||, pooled over all supplied overlap frames. Pixels must
// be valid in both maps with norms above 1e-9 to contribute.
double estimate_chunk_scale(std::span<const Pointmap> prev_adjusted,
                            std::span<const Pointmap> cur_raw,
                            const StitchOptions& opts = {});
double estimate_chunk_scale(const Pointmap& prev_adjusted,
                            const Pointmap& cur_raw,
                            const StitchOptions& opts = {});

struct ChunkAlignment {
  PoseSE3 a_m;
  double s_m = 1.0;
  std::vector<PoseSE3> aligned_poses;
  std::vector<Pointmap> adjusted_pointmaps;
};

// Similarity seam alignment: estimate s_m from the overlaps, scale every
// translation and pointmap by s_m, then rigid-align on the last overlap
// frame. cur_overlap_positions index into cur's frames and pair one-to-one
// with prev_adjusted_overlap.
ChunkAlignment align_chunk_sim3(const PoseSE3& prev_aligned_overlap_pose,
                                std::span<const Pointmap> prev_adjusted_overlap,
                                const ChunkPrediction& cur,
                                std::span<const std::size_t> cur_overlap_positions,
                                const StitchOptions& opts = {});

// Chain the per-seam alignments left to right. The first chunk passes
// through untouched; every later chunk must share at least one frame id
// with its predecessor (StitchError otherwise).
AlignedStream stitch_stream(std::span<const ChunkPrediction> chunks,
                            const StitchOptions& opts = {});

}  // namespace geostream
