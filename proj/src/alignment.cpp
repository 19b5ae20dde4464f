#include "geostream/alignment.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "geostream/errors.hpp"

namespace geostream {

void ChunkPrediction::validate() const {
  std::size_t n = frame_ids.size();
  if (n == 0) throw ShapeError("chunk prediction: no frames");
  if (poses.size() != n || pointmaps.size() != n) {
    throw ShapeError("chunk prediction: per-frame arrays disagree in size");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (frame_ids[i] <= frame_ids[i - 1]) {
      throw DataError("chunk prediction: frame ids must strictly increase");
    }
  }
  for (const PoseSE3& p : poses) validate_pose(p);
  for (const Pointmap& pm : pointmaps) pm.check();
}

PoseSE3 align_chunk_se3(const PoseSE3& prev_aligned_overlap_pose,
                        const PoseSE3& cur_raw_overlap_pose) {
  validate_pose(prev_aligned_overlap_pose);
  validate_pose(cur_raw_overlap_pose);
  return se3_compose(prev_aligned_overlap_pose,
                     se3_inverse(cur_raw_overlap_pose));
}

double estimate_chunk_scale(std::span<const Pointmap> prev_adjusted,
                            std::span<const Pointmap> cur_raw,
                            const StitchOptions& opts) {
  if (prev_adjusted.size() != cur_raw.size() || prev_adjusted.empty()) {
    throw ShapeError("chunk scale: overlap pointmap lists must pair up");
  }
  std::vector<double> ratios;
  for (std::size_t f = 0; f < prev_adjusted.size(); ++f) {
    const Pointmap& a = prev_adjusted[f];
    const Pointmap& b = cur_raw[f];
    a.check();
    b.check();
    if (a.height != b.height || a.width != b.width) {
      throw ShapeError("chunk scale: overlap pointmap sizes differ");
    }
    for (std::size_t p = 0; p < a.size(); ++p) {
      if (!a.valid[p] || !b.valid[p]) continue;
      double na = norm(a.points[p]);
      double nb = norm(b.points[p]);
      if (na <= 1e-9 || nb <= 1e-9) continue;
      ratios.push_back(na / nb);
    }
  }
  if (ratios.empty()) {
    throw DegenerateError("chunk scale: no jointly valid overlap pixels");
  }
  std::sort(ratios.begin(), ratios.end());
  if (opts.truncated_mean) {
    std::size_t drop = static_cast<std::size_t>(
        opts.trunc_fraction * static_cast<double>(ratios.size()));
    if (2 * drop >= ratios.size()) drop = (ratios.size() - 1) / 2;
    double acc = 0.0;
    std::size_t kept = ratios.size() - 2 * drop;
    for (std::size_t i = drop; i < ratios.size() - drop; ++i) acc += ratios[i];
    return acc / static_cast<double>(kept);
  }
  return ratios[(ratios.size() - 1) / 2];
}

double estimate_chunk_scale(const Pointmap& prev_adjusted,
                            const Pointmap& cur_raw,
                            const StitchOptions& opts) {
  return estimate_chunk_scale(std::span<const Pointmap>(&prev_adjusted, 1),
                              std::span<const Pointmap>(&cur_raw, 1), opts);
}

ChunkAlignment align_chunk_sim3(const PoseSE3& prev_aligned_overlap_pose,
                                std::span<const Pointmap> prev_adjusted_overlap,
                                const ChunkPrediction& cur,
                                std::span<const std::size_t> cur_overlap_positions,
                                const StitchOptions& opts) {
  cur.validate();
  if (cur_overlap_positions.empty() ||
      cur_overlap_positions.size() != prev_adjusted_overlap.size()) {
    throw ShapeError("sim3 align: overlap positions must pair with pointmaps");
  }
  for (std::size_t pos : cur_overlap_positions) {
    if (pos >= cur.frames()) {
      throw ShapeError("sim3 align: overlap position out of range");
    }
  }

  std::vector<Pointmap> cur_overlap;
  for (std::size_t pos : cur_overlap_positions) {
    cur_overlap.push_back(cur.pointmaps[pos]);
  }
  double s = estimate_chunk_scale(prev_adjusted_overlap, cur_overlap, opts);

  ChunkAlignment out;
  out.s_m = s;
  std::size_t k = cur_overlap_positions.back();
  PoseSE3 scaled_k = cur.poses[k];
  scaled_k.t = s * scaled_k.t;
  out.a_m = align_chunk_se3(prev_aligned_overlap_pose, scaled_k);
  for (std::size_t f = 0; f < cur.frames(); ++f) {
    PoseSE3 scaled = cur.poses[f];
    scaled.t = s * scaled.t;
    out.aligned_poses.push_back(se3_compose(out.a_m, scaled));
    out.adjusted_pointmaps.push_back(scale_pointmap(cur.pointmaps[f], s));
  }
  return out;
}

AlignedStream stitch_stream(std::span<const ChunkPrediction> chunks,
                            const StitchOptions& opts) {
  if (chunks.empty()) throw DataError("stitch: no chunks");

  AlignedStream out;
  std::set<std::int64_t> seen;
  std::vector<PoseSE3> prev_aligned;
  std::vector<Pointmap> prev_adjusted;
  std::vector<std::int64_t> prev_ids;

  for (std::size_t m = 0; m < chunks.size(); ++m) {
    const ChunkPrediction& chunk = chunks[m];
    chunk.validate();

    ChunkAlignment al;
    if (m == 0) {
      al.a_m = PoseSE3::identity();
      al.s_m = 1.0;
      al.aligned_poses = chunk.poses;
      al.adjusted_pointmaps = chunk.pointmaps;
    } else {
      // Overlap = frame ids shared with the previous chunk.
      std::vector<std::size_t> prev_pos, cur_pos;
      for (std::size_t i = 0; i < chunk.frames(); ++i) {
        auto it = std::find(prev_ids.begin(), prev_ids.end(),
                            chunk.frame_ids[i]);
        if (it == prev_ids.end()) continue;
        prev_pos.push_back(static_cast<std::size_t>(it - prev_ids.begin()));
        cur_pos.push_back(i);
      }
      if (cur_pos.empty()) {
        throw StitchError("stitch: no overlap between chunks " +
                          std::to_string(m - 1) + " and " + std::to_string(m));
      }
      if (opts.mode == StitchMode::rigid) {
        al.a_m = align_chunk_se3(prev_aligned[prev_pos.back()],
                                 chunk.poses[cur_pos.back()]);
        al.s_m = 1.0;
        for (std::size_t f = 0; f < chunk.frames(); ++f) {
          al.aligned_poses.push_back(se3_compose(al.a_m, chunk.poses[f]));
        }
        al.adjusted_pointmaps = chunk.pointmaps;
      } else {
        std::vector<Pointmap> prev_overlap;
        for (std::size_t pos : prev_pos) {
          prev_overlap.push_back(prev_adjusted[pos]);
        }
        al = align_chunk_sim3(prev_aligned[prev_pos.back()], prev_overlap,
                              chunk, cur_pos, opts);
      }
    }

    out.chunk_transforms.push_back(al.a_m);
    out.chunk_scales.push_back(al.s_m);
    for (std::size_t f = 0; f < chunk.frames(); ++f) {
      if (seen.contains(chunk.frame_ids[f])) continue;  // earlier chunk wins
      seen.insert(chunk.frame_ids[f]);
      out.frame_ids.push_back(chunk.frame_ids[f]);
      out.poses.push_back(al.aligned_poses[f]);
      out.pointmaps.push_back(al.adjusted_pointmaps[f]);
    }

    prev_aligned = std::move(al.aligned_poses);
    prev_adjusted = std::move(al.adjusted_pointmaps);
    prev_ids = chunk.frame_ids;
  }
  return out;
}

}  // namespace geostream
