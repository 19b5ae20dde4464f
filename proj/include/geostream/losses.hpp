#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "geostream/geometry.hpp"
#include "geostream/tensor.hpp"

namespace geostream {

enum class RotationLossKind : std::uint8_t { frobenius, geodesic };

struct LossWeights {
  double lambda_r = 0.1;
  double lambda_t = 10.0;
  double lambda_global = 1.0;
  double huber_delta = 1.0;
  RotationLossKind rot_loss = RotationLossKind::frobenius;

  void validate() const;  // ConfigError on negative weights or delta <= 0
};

// Predictions and ground truth for one supervised sequence. A pixel
// contributes only when valid in both the predicted and true pointmap.
struct SupervisionBatch {
  std::vector<Pointmap> pred;
  std::vector<Pointmap> gt;
  std::vector<PoseSE3> pred_poses;
  std::vector<PoseSE3> gt_poses;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  // Normalization depths, one row per frame; empty means "use the true
  // pointmap's z". Must be positive on supervised pixels.
  std::vector<std::vector<double>> depth;

  std::size_t frames() const { return gt.size(); }
  double depth_at(std::size_t frame, std::size_t pixel) const;
  void validate() const;  // ShapeError on size mismatches
};

// Quadratic inside delta, linear outside: e^2/2 if e <= delta, else
// delta * (e - delta/2).
double huber(double e, double delta);

// Exact minimizer over s of the depth-normalized L1 objective: the
// weighted lower median of componentwise ratios x/x_hat with weights
// |x_hat|/z. DegenerateError when no component carries weight or the
// minimizer is not positive.
double solve_sequence_scale(const SupervisionBatch& batch);

// Mean over supervised pixels of (1/z) * ||s x_hat - x||_1.
double local_pointmap_loss(const SupervisionBatch& batch, double s);

// Sum over the pair set of lambda_r * L_rot(relative rotations) +
// lambda_t * huber(||s t_hat_ij - t_ij||).
double pose_loss(const SupervisionBatch& batch, double s,
                 const LossWeights& w);

// Mean over supervised pixels of the L1 gap between world pointmaps; the
// prediction (points and pose translation alike) is scaled into ground
// truth units by s first.
double global_pointmap_loss(const SupervisionBatch& batch, double s);

struct LossBreakdown {
  double s_star = 1.0;
  double local = 0.0;
  double pose = 0.0;
  double global_term = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const SupervisionBatch& batch, const LossWeights& w);

// Subgradient of total_loss with respect to every predicted pointmap
// coordinate, holding s fixed at the supplied value. One [pixels x 3]
// tensor per frame, row order matching the pointmap's pixel order. Exact
// wherever no L1 residual sits on a kink.
std::vector<Tensor> total_loss_pointmap_grad(const SupervisionBatch& batch,
                                             const LossWeights& w, double s);

}  // namespace geostream
