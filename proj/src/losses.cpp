#include "geostream/losses.hpp"

#include <algorithm>
#include <cmath>

#include "geostream/errors.hpp"

namespace geostream {

namespace {

// Joint validity and matching dimensions for one frame pair.
void check_frame(const Pointmap& a, const Pointmap& b) {
  a.check();
  b.check();
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("losses: predicted and true pointmap sizes differ");
  }
}

std::size_t supervised_pixels(const SupervisionBatch& batch) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < batch.frames(); ++i) {
    for (std::size_t p = 0; p < batch.gt[i].size(); ++p) {
      if (batch.pred[i].valid[p] && batch.gt[i].valid[p]) ++n;
    }
  }
  return n;
}

PoseSE3 relative_pose(const PoseSE3& a, const PoseSE3& b) {
  return se3_compose(se3_inverse(a), b);
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_r < 0.0 || lambda_t < 0.0 || lambda_global < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (!(huber_delta > 0.0)) {
    throw ConfigError("huber delta must be positive");
  }
}

double SupervisionBatch::depth_at(std::size_t frame, std::size_t pixel) const {
  if (depth.empty()) return gt[frame].points[pixel][2];
  return depth[frame][pixel];
}

void SupervisionBatch::validate() const {
  std::size_t n = gt.size();
  if (n == 0) throw ShapeError("supervision batch: no frames");
  if (pred.size() != n || pred_poses.size() != n || gt_poses.size() != n) {
    throw ShapeError("supervision batch: per-frame arrays disagree in size");
  }
  for (std::size_t i = 0; i < n; ++i) check_frame(pred[i], gt[i]);
  if (!depth.empty()) {
    if (depth.size() != n) {
      throw ShapeError("supervision batch: depth rows != frames");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (depth[i].size() != gt[i].size()) {
        throw ShapeError("supervision batch: depth row size != pixels");
      }
    }
  }
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= n || i == j) {
      throw ShapeError("supervision batch: pair index out of range");
    }
  }
}

double huber(double e, double delta) {
  if (!(delta > 0.0)) throw ConfigError("huber delta must be positive");
  double a = std::fabs(e);
  if (a <= delta) return 0.5 * a * a;
  return delta * (a - 0.5 * delta);
}

double solve_sequence_scale(const SupervisionBatch& batch) {
  batch.validate();
  // Eq-of-interest rewritten per component: (1/z)|s a - b| =
  // (|a|/z) |s - b/a|, so the minimizer is a weighted median of ratios.
  std::vector<std::pair<double, double>> ratio_weight;
  for (std::size_t i = 0; i < batch.frames(); ++i) {
    const Pointmap& ph = batch.pred[i];
    const Pointmap& gh = batch.gt[i];
    for (std::size_t p = 0; p < gh.size(); ++p) {
      if (!ph.valid[p] || !gh.valid[p]) continue;
      double z = batch.depth_at(i, p);
      if (!(z > 0.0)) throw DataError("losses: nonpositive depth on a valid pixel");
      for (int c = 0; c < 3; ++c) {
        double a = ph.points[p][c];
        if (a == 0.0) continue;
        ratio_weight.push_back({gh.points[p][c] / a, std::fabs(a) / z});
      }
    }
  }
  if (ratio_weight.empty()) {
    throw DegenerateError("losses: no component carries scale information");
  }
  std::sort(ratio_weight.begin(), ratio_weight.end());
  double total = 0.0;
  for (const auto& [r, w] : ratio_weight) total += w;
  double cum = 0.0;
  double s = ratio_weight.back().first;
  for (const auto& [r, w] : ratio_weight) {
    cum += w;
    if (cum >= 0.5 * total) {
      s = r;
      break;
    }
  }
  if (!(s > 0.0)) {
    throw DegenerateError("losses: scale minimizer is not positive");
  }
  return s;
}

double local_pointmap_loss(const SupervisionBatch& batch, double s) {
  batch.validate();
  if (!(s > 0.0)) throw ConfigError("losses: scale must be positive");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.frames(); ++i) {
    const Pointmap& ph = batch.pred[i];
    const Pointmap& gh = batch.gt[i];
    for (std::size_t p = 0; p < gh.size(); ++p) {
      if (!ph.valid[p] || !gh.valid[p]) continue;
      double z = batch.depth_at(i, p);
      if (!(z > 0.0)) throw DataError("losses: nonpositive depth on a valid pixel");
      double l1 = 0.0;
      for (int c = 0; c < 3; ++c) {
        l1 += std::fabs(s * ph.points[p][c] - gh.points[p][c]);
      }
      acc += l1 / z;
      ++count;
    }
  }
  if (count == 0) throw DegenerateError("losses: no supervised pixels");
  return acc / static_cast<double>(count);
}

double pose_loss(const SupervisionBatch& batch, double s,
                 const LossWeights& w) {
  batch.validate();
  w.validate();
  if (!(s > 0.0)) throw ConfigError("losses: scale must be positive");
  if (batch.pairs.empty()) {
    throw DataError("losses: pose loss needs at least one frame pair");
  }
  for (const PoseSE3& p : batch.pred_poses) validate_pose(p);
  for (const PoseSE3& p : batch.gt_poses) validate_pose(p);

  double acc = 0.0;
  for (const auto& [i, j] : batch.pairs) {
    PoseSE3 rel_pred = relative_pose(batch.pred_poses[i], batch.pred_poses[j]);
    PoseSE3 rel_gt = relative_pose(batch.gt_poses[i], batch.gt_poses[j]);
    double rot = 0.0;
    if (w.rot_loss == RotationLossKind::frobenius) {
      rot = frobenius_norm(rel_pred.R - rel_gt.R);
    } else {
      rot = rotation_geodesic_angle(rel_pred.R, rel_gt.R);
    }
    Vec3 dt = s * rel_pred.t - rel_gt.t;
    acc += w.lambda_r * rot + w.lambda_t * huber(norm(dt), w.huber_delta);
  }
  return acc;
}

double global_pointmap_loss(const SupervisionBatch& batch, double s) {
  batch.validate();
  if (!(s > 0.0)) throw ConfigError("losses: scale must be positive");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch.frames(); ++i) {
    const PoseSE3& tp = batch.pred_poses[i];
    const PoseSE3& tg = batch.gt_poses[i];
    validate_pose(tp);
    validate_pose(tg);
    const Pointmap& ph = batch.pred[i];
    const Pointmap& gh = batch.gt[i];
    for (std::size_t p = 0; p < gh.size(); ++p) {
      if (!ph.valid[p] || !gh.valid[p]) continue;
      // The whole prediction is lifted into ground-truth units: world
      // point s * (R_hat x_hat + t_hat).
      Vec3 pw = tp.R * (s * ph.points[p]) + s * tp.t;
      Vec3 gw = tg.R * gh.points[p] + tg.t;
      for (int c = 0; c < 3; ++c) acc += std::fabs(pw[c] - gw[c]);
      ++count;
    }
  }
  if (count == 0) throw DegenerateError("losses: no supervised pixels");
  return acc / static_cast<double>(count);
}

LossBreakdown total_loss(const SupervisionBatch& batch, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.s_star = solve_sequence_scale(batch);
  b.local = local_pointmap_loss(batch, b.s_star);
  b.pose = pose_loss(batch, b.s_star, w);
  b.global_term = global_pointmap_loss(batch, b.s_star);
  b.total = b.local + b.pose + w.lambda_global * b.global_term;
  return b;
}

std::vector<Tensor> total_loss_pointmap_grad(const SupervisionBatch& batch,
                                             const LossWeights& w, double s) {
  batch.validate();
  w.validate();
  if (!(s > 0.0)) throw ConfigError("losses: scale must be positive");
  std::size_t count = supervised_pixels(batch);
  if (count == 0) throw DegenerateError("losses: no supervised pixels");
  double inv_count = 1.0 / static_cast<double>(count);

  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < batch.frames(); ++i) {
    const Pointmap& ph = batch.pred[i];
    const Pointmap& gh = batch.gt[i];
    const PoseSE3& tp = batch.pred_poses[i];
    const PoseSE3& tg = batch.gt_poses[i];
    Tensor g = Tensor::matrix(ph.size(), 3);
    for (std::size_t p = 0; p < gh.size(); ++p) {
      if (!ph.valid[p] || !gh.valid[p]) continue;
      double z = batch.depth_at(i, p);
      if (!(z > 0.0)) throw DataError("losses: nonpositive depth on a valid pixel");
      for (int c = 0; c < 3; ++c) {
        double r = s * ph.points[p][c] - gh.points[p][c];
        g.at(p, c) += inv_count * (s / z) * sign(r);
      }
      Vec3 pw = tp.R * (s * ph.points[p]) + s * tp.t;
      Vec3 gw = tg.R * gh.points[p] + tg.t;
      Vec3 sw{sign(pw[0] - gw[0]), sign(pw[1] - gw[1]), sign(pw[2] - gw[2])};
      // d pw / d x_hat = s * R_hat, so the pullback is s * R_hat^T.
      Vec3 pulled = transpose(tp.R) * sw;
      for (int c = 0; c < 3; ++c) {
        g.at(p, c) += w.lambda_global * inv_count * s * pulled[c];
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace geostream
