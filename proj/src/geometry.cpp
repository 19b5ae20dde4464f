#include "geostream/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "geostream/errors.hpp"

namespace geostream {

Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a.x + b.x, a.y + b.y, a.z + b.z};
}

Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }

double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  if (n < 1e-300) throw NumericalError("cannot normalize zero vector");
  return (1.0 / n) * a;
}

Mat3 Mat3::identity() { return diagonal(1.0, 1.0, 1.0); }

Mat3 Mat3::diagonal(double a, double b, double c) {
  Mat3 d;
  d.at(0, 0) = a;
  d.at(1, 1) = b;
  d.at(2, 2) = c;
  return d;
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a.at(0, 0) * v.x + a.at(0, 1) * v.y + a.at(0, 2) * v.z,
          a.at(1, 0) * v.x + a.at(1, 1) * v.y + a.at(1, 2) * v.z,
          a.at(2, 0) * v.x + a.at(2, 1) * v.y + a.at(2, 2) * v.z};
}

Mat3 operator+(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (std::size_t i = 0; i < 9; ++i) out.m[i] = a.m[i] + b.m[i];
  return out;
}

Mat3 operator-(const Mat3& a, const Mat3& b) {
  Mat3 out;
  for (std::size_t i = 0; i < 9; ++i) out.m[i] = a.m[i] - b.m[i];
  return out;
}

Mat3 scaled(const Mat3& a, double s) {
  Mat3 out;
  for (std::size_t i = 0; i < 9; ++i) out.m[i] = s * a.m[i];
  return out;
}

Mat3 transpose(const Mat3& a) {
  Mat3 out;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) out.at(i, j) = a.at(j, i);
  }
  return out;
}

double det(const Mat3& a) {
  return a.at(0, 0) * (a.at(1, 1) * a.at(2, 2) - a.at(1, 2) * a.at(2, 1)) -
         a.at(0, 1) * (a.at(1, 0) * a.at(2, 2) - a.at(1, 2) * a.at(2, 0)) +
         a.at(0, 2) * (a.at(1, 0) * a.at(2, 1) - a.at(1, 1) * a.at(2, 0));
}

double trace(const Mat3& a) { return a.at(0, 0) + a.at(1, 1) + a.at(2, 2); }

double frobenius_norm(const Mat3& a) {
  double acc = 0.0;
  for (double v : a.m) acc += v * v;
  return std::sqrt(acc);
}

bool all_finite(const Mat3& a) {
  for (double v : a.m) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  Vec3 u = normalized(axis);
  double c = std::cos(angle);
  double s = std::sin(angle);
  double ic = 1.0 - c;
  Mat3 r;
  r.at(0, 0) = c + u.x * u.x * ic;
  r.at(0, 1) = u.x * u.y * ic - u.z * s;
  r.at(0, 2) = u.x * u.z * ic + u.y * s;
  r.at(1, 0) = u.y * u.x * ic + u.z * s;
  r.at(1, 1) = c + u.y * u.y * ic;
  r.at(1, 2) = u.y * u.z * ic - u.x * s;
  r.at(2, 0) = u.z * u.x * ic - u.y * s;
  r.at(2, 1) = u.z * u.y * ic + u.x * s;
  r.at(2, 2) = c + u.z * u.z * ic;
  return r;
}

bool is_rotation(const Mat3& r, double tol) {
  if (!all_finite(r)) return false;
  Mat3 should_be_identity = transpose(r) * r;
  Mat3 diff = should_be_identity - Mat3::identity();
  return frobenius_norm(diff) <= tol && det(r) > 0.0;
}

double rotation_geodesic_angle(const Mat3& a, const Mat3& b) {
  double c = (trace(transpose(a) * b) - 1.0) / 2.0;
  c = std::clamp(c, -1.0, 1.0);
  return std::acos(c);
}

void jacobi_svd3(const Mat3& a, Mat3& u, Vec3& sigma, Mat3& v) {
  // One-sided Jacobi: rotate column pairs of w until all pairs are
  // orthogonal, accumulating the rotations in v. Then w = u * diag(sigma).
  Mat3 w = a;
  v = Mat3::identity();
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t q = p + 1; q < 3; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
          app += w.at(r, p) * w.at(r, p);
          aqq += w.at(r, q) * w.at(r, q);
          apq += w.at(r, p) * w.at(r, q);
        }
        off = std::max(off, std::fabs(apq));
        if (std::fabs(apq) < 1e-300) continue;
        double zeta = (aqq - app) / (2.0 * apq);
        double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                   (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (std::size_t r = 0; r < 3; ++r) {
          double wp = w.at(r, p), wq = w.at(r, q);
          w.at(r, p) = c * wp - s * wq;
          w.at(r, q) = s * wp + c * wq;
          double vp = v.at(r, p), vq = v.at(r, q);
          v.at(r, p) = c * vp - s * vq;
          v.at(r, q) = s * vp + c * vq;
        }
      }
    }
    if (off < 1e-15 * (1.0 + frobenius_norm(a))) break;
  }

  std::array<double, 3> norms{};
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < 3; ++r) acc += w.at(r, c) * w.at(r, c);
    norms[c] = std::sqrt(acc);
  }
  // Sort singular values descending, permuting columns of w and v alike.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });
  Mat3 ws = w, vs = v;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < 3; ++r) {
      w.at(r, c) = ws.at(r, order[c]);
      v.at(r, c) = vs.at(r, order[c]);
    }
  }
  sigma = {norms[order[0]], norms[order[1]], norms[order[2]]};

  u = Mat3::identity();
  for (std::size_t c = 0; c < 3; ++c) {
    if (sigma[c] > 1e-300) {
      for (std::size_t r = 0; r < 3; ++r) u.at(r, c) = w.at(r, c) / sigma[c];
    } else if (c == 2) {
      // Rank-deficient: complete u to an orthonormal basis.
      Vec3 c0{u.at(0, 0), u.at(1, 0), u.at(2, 0)};
      Vec3 c1{u.at(0, 1), u.at(1, 1), u.at(2, 1)};
      Vec3 c2 = cross(c0, c1);
      for (std::size_t r = 0; r < 3; ++r) u.at(r, 2) = c2[r];
    } else {
      // Rank 0 or 1: fall back to coordinate axes orthogonal to col 0.
      Vec3 c0{u.at(0, 0), u.at(1, 0), u.at(2, 0)};
      if (c == 1 && sigma[0] > 1e-300) {
        Vec3 pick = std::fabs(c0.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        Vec3 c1 = normalized(cross(c0, pick));
        for (std::size_t r = 0; r < 3; ++r) u.at(r, 1) = c1[r];
      }
      // sigma[0] == 0 leaves u as identity, which is orthonormal.
    }
  }
}

Mat3 orthonormalize_rotation(const Mat3& a) {
  Mat3 u, v;
  Vec3 sigma;
  jacobi_svd3(a, u, sigma, v);
  double sign = det(u * transpose(v)) < 0.0 ? -1.0 : 1.0;
  return u * Mat3::diagonal(1.0, 1.0, sign) * transpose(v);
}

Mat3 rotation_from_6d(const std::array<double, 6>& a) {
  Vec3 a1{a[0], a[1], a[2]};
  Vec3 a2{a[3], a[4], a[5]};
  double n1 = norm(a1);
  if (n1 < 1e-12) throw NumericalError("rotation_from_6d: zero first vector");
  Vec3 b1 = (1.0 / n1) * a1;
  Vec3 rej = a2 - dot(b1, a2) * b1;
  double n2 = norm(rej);
  if (n2 < 1e-12) throw NumericalError("rotation_from_6d: collinear input");
  Vec3 b2 = (1.0 / n2) * rej;
  Vec3 b3 = cross(b1, b2);
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    r.at(i, 0) = b1[i];
    r.at(i, 1) = b2[i];
    r.at(i, 2) = b3[i];
  }
  return r;
}

void validate_pose(const PoseSE3& p, double tol) {
  if (!all_finite(p.R) || !std::isfinite(p.t.x) || !std::isfinite(p.t.y) ||
      !std::isfinite(p.t.z)) {
    throw PoseError("pose has non-finite entries");
  }
  if (!is_rotation(p.R, tol)) throw PoseError("pose R is not a rotation");
}

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b) {
  validate_pose(a);
  validate_pose(b);
  return {a.R * b.R, a.R * b.t + a.t};
}

PoseSE3 se3_inverse(const PoseSE3& a) {
  validate_pose(a);
  Mat3 rt = transpose(a.R);
  return {rt, -1.0 * (rt * a.t)};
}

Vec3 se3_apply_point(const PoseSE3& p, const Vec3& x) {
  return p.R * x + p.t;
}

SimilaritySim3 sim3_compose(const SimilaritySim3& a, const SimilaritySim3& b) {
  return {a.s * b.s, a.R * b.R, a.s * (a.R * b.t) + a.t};
}

SimilaritySim3 sim3_inverse(const SimilaritySim3& g) {
  if (g.s <= 0.0) throw DegenerateError("sim3 scale must be positive");
  Mat3 rt = transpose(g.R);
  double inv_s = 1.0 / g.s;
  return {inv_s, rt, -inv_s * (rt * g.t)};
}

Vec3 sim3_apply_point(const SimilaritySim3& g, const Vec3& x) {
  return g.s * (g.R * x) + g.t;
}

PoseSE3 sim3_apply(const SimilaritySim3& g, const PoseSE3& T) {
  return {g.R * T.R, g.s * (g.R * T.t) + g.t};
}

Pointmap::Pointmap(std::size_t h, std::size_t w)
    : height(h), width(w), points(h * w), valid(h * w, 1) {}

std::size_t Pointmap::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t f : valid) n += (f != 0);
  return n;
}

void Pointmap::check() const {
  if (points.size() != height * width || valid.size() != height * width) {
    throw ShapeError("pointmap buffers do not match height*width");
  }
}

Pointmap transform_pointmap(const PoseSE3& p, const Pointmap& pm) {
  pm.check();
  Pointmap out = pm;
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (pm.is_valid(i)) out.points[i] = se3_apply_point(p, pm.points[i]);
  }
  return out;
}

Pointmap scale_pointmap(const Pointmap& pm, double s) {
  pm.check();
  Pointmap out = pm;
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (pm.is_valid(i)) out.points[i] = s * pm.points[i];
  }
  return out;
}

void Trajectory::push(std::int64_t frame_id, const PoseSE3& pose) {
  if (!frame_ids.empty() && frame_id <= frame_ids.back()) {
    throw DataError("trajectory frame ids must strictly increase");
  }
  frame_ids.push_back(frame_id);
  poses.push_back(pose);
}

void Trajectory::check() const {
  if (frame_ids.size() != poses.size()) {
    throw DataError("trajectory id/pose count mismatch");
  }
  for (std::size_t i = 1; i < frame_ids.size(); ++i) {
    if (frame_ids[i] <= frame_ids[i - 1]) {
      throw DataError("trajectory frame ids must strictly increase");
    }
  }
}

SimilaritySim3 umeyama_align(std::span<const Vec3> src,
                             std::span<const Vec3> dst, bool with_scale) {
  if (src.size() != dst.size()) {
    throw ShapeError("umeyama: point count mismatch");
  }
  std::size_t n = src.size();
  if (n < 3) throw DegenerateError("umeyama: need at least 3 points");

  Vec3 mu_src{}, mu_dst{};
  for (std::size_t i = 0; i < n; ++i) {
    mu_src = mu_src + src[i];
    mu_dst = mu_dst + dst[i];
  }
  double inv_n = 1.0 / static_cast<double>(n);
  mu_src = inv_n * mu_src;
  mu_dst = inv_n * mu_dst;

  // Cross-covariance (dst x src) and source variance.
  Mat3 cov{};
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 ds = src[i] - mu_src;
    Vec3 dd = dst[i] - mu_dst;
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        cov.at(r, c) += dd[r] * ds[c] * inv_n;
      }
    }
    var_src += dot(ds, ds) * inv_n;
  }

  Mat3 u, v;
  Vec3 sigma;
  jacobi_svd3(cov, u, sigma, v);

  // Collinear clouds leave the rotation about the line unconstrained.
  double scale_ref = std::max(sigma.x, 1e-300);
  if (sigma.y <= 1e-9 * scale_ref) {
    throw DegenerateError("umeyama: degenerate (collinear) input");
  }

  double sign = det(u) * det(v) < 0.0 ? -1.0 : 1.0;
  Mat3 d_sign = Mat3::diagonal(1.0, 1.0, sign);
  Mat3 rot = u * d_sign * transpose(v);

  double scale = 1.0;
  if (with_scale) {
    if (var_src <= 0.0) {
      throw DegenerateError("umeyama: zero source spread");
    }
    scale = (sigma.x + sigma.y + sign * sigma.z) / var_src;
    if (scale <= 0.0) throw DegenerateError("umeyama: non-positive scale");
  }

  Vec3 t = mu_dst - scale * (rot * mu_src);
  return {scale, rot, t};
}

}  // namespace geostream
