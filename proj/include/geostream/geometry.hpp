#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace geostream {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](std::size_t i) const {
    return i == 0 ? x : (i == 1 ? y : z);
  }
};

Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);
Vec3 operator*(double s, const Vec3& a);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  double& at(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
  double at(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }

  static Mat3 identity();
  static Mat3 diagonal(double a, double b, double c);
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);
Mat3 operator+(const Mat3& a, const Mat3& b);
Mat3 operator-(const Mat3& a, const Mat3& b);
Mat3 scaled(const Mat3& a, double s);
Mat3 transpose(const Mat3& a);
double det(const Mat3& a);
double trace(const Mat3& a);
double frobenius_norm(const Mat3& a);
bool all_finite(const Mat3& a);

// Rodrigues rotation about a (not necessarily unit) axis.
Mat3 axis_angle(const Vec3& axis, double angle);

bool is_rotation(const Mat3& r, double tol = 1e-6);
// Angle in radians between two rotations, acos((tr(a^T b) - 1) / 2).
double rotation_geodesic_angle(const Mat3& a, const Mat3& b);

// One-sided Jacobi SVD, a = u * diag(sigma) * v^T with sigma sorted
// descending and u, v orthogonal (not necessarily rotations).
void jacobi_svd3(const Mat3& a, Mat3& u, Vec3& sigma, Mat3& v);

// Nearest rotation in Frobenius norm: u * diag(1, 1, det(u v^T)) * v^T.
Mat3 orthonormalize_rotation(const Mat3& a);

// Map two free 3-vectors (rows of a 2x3 block) to a rotation via
// Gram-Schmidt plus cross product. Continuous everywhere the first vector
// and the rejection of the second are nonzero.
Mat3 rotation_from_6d(const std::array<double, 6>& a);

// Camera-to-world rigid pose: world = R * local + t.
struct PoseSE3 {
  Mat3 R = Mat3::identity();
  Vec3 t{};

  static PoseSE3 identity() { return PoseSE3{}; }
};

// Throws PoseError unless R is a rotation and all entries are finite.
void validate_pose(const PoseSE3& p, double tol = 1e-9);

PoseSE3 se3_compose(const PoseSE3& a, const PoseSE3& b);
PoseSE3 se3_inverse(const PoseSE3& a);
Vec3 se3_apply_point(const PoseSE3& p, const Vec3& x);

// Similarity transform x -> s * R * x + t.
struct SimilaritySim3 {
  double s = 1.0;
  Mat3 R = Mat3::identity();
  Vec3 t{};

  static SimilaritySim3 identity() { return SimilaritySim3{}; }
};

SimilaritySim3 sim3_compose(const SimilaritySim3& a, const SimilaritySim3& b);
SimilaritySim3 sim3_inverse(const SimilaritySim3& g);
Vec3 sim3_apply_point(const SimilaritySim3& g, const Vec3& x);
// Action on a camera-to-world pose: rotation g.R * T.R, translation
// g.s * g.R * T.t + g.t. Keeps camera orientation orthonormal.
PoseSE3 sim3_apply(const SimilaritySim3& g, const PoseSE3& T);

// Per-frame grid of 3D points with a validity mask.
struct Pointmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> valid;

  Pointmap() = default;
  Pointmap(std::size_t h, std::size_t w);

  std::size_t size() const { return points.size(); }
  Vec3& at(std::size_t r, std::size_t c) { return points[r * width + c]; }
  const Vec3& at(std::size_t r, std::size_t c) const {
    return points[r * width + c];
  }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }
  std::size_t valid_count() const;
  void check() const;  // ShapeError on inconsistent buffer sizes
};

// Apply a pose to every valid point (local frame to world frame).
// Invalid entries are copied through untouched.
Pointmap transform_pointmap(const PoseSE3& p, const Pointmap& pm);
Pointmap scale_pointmap(const Pointmap& pm, double s);

// Ordered camera trajectory with strictly increasing frame ids.
struct Trajectory {
  std::vector<std::int64_t> frame_ids;
  std::vector<PoseSE3> poses;

  std::size_t size() const { return poses.size(); }
  void push(std::int64_t frame_id, const PoseSE3& pose);
  void check() const;  // DataError unless ids strictly increase
};

// Closed-form least-squares similarity (or rigid when with_scale is false)
// mapping src onto dst: minimizes sum |dst_i - (s R src_i + t)|^2.
// Throws DegenerateError for fewer than 3 points, collinear input, or zero
// source spread when a scale is requested.
SimilaritySim3 umeyama_align(std::span<const Vec3> src,
                             std::span<const Vec3> dst, bool with_scale);

}  // namespace geostream
