#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "geostream/errors.hpp"
#include "geostream/geometry.hpp"
#include "geostream/rng.hpp"

using namespace geostream;

namespace {

PoseSE3 random_pose(RngState& rng) {
  Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
  PoseSE3 p;
  p.R = axis_angle(axis, rng.uniform(-3.0, 3.0));
  p.t = {rng.normal(), rng.normal(), rng.normal()};
  return p;
}

SimilaritySim3 random_sim3(RngState& rng) {
  PoseSE3 p = random_pose(rng);
  return {std::exp(0.5 * rng.normal()), p.R, p.t};
}

Vec3 random_point(RngState& rng) {
  return {rng.normal(), rng.normal(), rng.normal()};
}

double pose_diff(const PoseSE3& a, const PoseSE3& b) {
  double d = frobenius_norm(a.R - b.R);
  return std::max(d, norm(a.t - b.t));
}

}  // namespace

TEST_CASE("axis-angle builds rotations and validate accepts them") {
  RngState rng(1);
  for (int i = 0; i < 10; ++i) {
    Mat3 r = axis_angle(random_point(rng), rng.uniform(-3.0, 3.0));
    CHECK(is_rotation(r, 1e-12));
    validate_pose({r, random_point(rng)});
  }
  Mat3 bad = Mat3::diagonal(1.0, 1.0, 2.0);
  CHECK_THROWS_AS(validate_pose({bad, {}}), PoseError);
  Mat3 mirror = Mat3::diagonal(1.0, 1.0, -1.0);
  CHECK_THROWS_AS(validate_pose({mirror, {}}), PoseError);
}

TEST_CASE("se3 identity, inverse, and composition laws") {
  RngState rng(2);
  for (int i = 0; i < 10; ++i) {
    PoseSE3 a = random_pose(rng);
    PoseSE3 b = random_pose(rng);

    CHECK(pose_diff(se3_compose(PoseSE3::identity(), b), b) == 0.0);
    CHECK(pose_diff(se3_compose(a, se3_inverse(a)), PoseSE3::identity()) <
          1e-12);
    CHECK(pose_diff(se3_inverse(se3_inverse(a)), a) < 1e-12);

    // Composition equals sequential application pointwise.
    Vec3 x = random_point(rng);
    Vec3 via_compose = se3_apply_point(se3_compose(a, b), x);
    Vec3 sequential = se3_apply_point(a, se3_apply_point(b, x));
    CHECK(norm(via_compose - sequential) < 1e-12);

    PoseSE3 c = random_pose(rng);
    PoseSE3 ab_c = se3_compose(se3_compose(a, b), c);
    PoseSE3 a_bc = se3_compose(a, se3_compose(b, c));
    CHECK(pose_diff(ab_c, a_bc) < 1e-12);
  }
}

TEST_CASE("pointmap transform applies the pose on valid pixels only") {
  RngState rng(3);
  Pointmap pm(2, 3);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    pm.points[i] = {rng.normal(), rng.normal(), 2.0 + rng.uniform()};
  }
  pm.valid[4] = 0;
  Vec3 invalid_original = pm.points[4];

  // Identity leaves everything alone.
  Pointmap same = transform_pointmap(PoseSE3::identity(), pm);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    CHECK(norm(same.points[i] - pm.points[i]) == 0.0);
  }

  // Pure translation shifts valid pixels.
  PoseSE3 shift;
  shift.t = {1.0, -2.0, 0.5};
  Pointmap moved = transform_pointmap(shift, pm);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    if (pm.is_valid(i)) {
      CHECK(norm(moved.points[i] - (pm.points[i] + shift.t)) == 0.0);
    }
  }
  CHECK(norm(moved.points[4] - invalid_original) == 0.0);

  // Inverse round-trip.
  PoseSE3 p = random_pose(rng);
  Pointmap there = transform_pointmap(p, pm);
  Pointmap back = transform_pointmap(se3_inverse(p), there);
  for (std::size_t i = 0; i < pm.size(); ++i) {
    CHECK(norm(back.points[i] - pm.points[i]) < 1e-12);
  }
}

TEST_CASE("sim3 identity and pure-scale actions") {
  RngState rng(4);
  PoseSE3 t = random_pose(rng);
  PoseSE3 same = sim3_apply(SimilaritySim3::identity(), t);
  CHECK(pose_diff(same, t) == 0.0);

  SimilaritySim3 pure_scale;
  pure_scale.s = 3.0;
  PoseSE3 scaled_pose = sim3_apply(pure_scale, t);
  CHECK(frobenius_norm(scaled_pose.R - t.R) == 0.0);
  CHECK(norm(scaled_pose.t - 3.0 * t.t) == 0.0);
}

TEST_CASE("sim3 compose/inverse laws") {
  RngState rng(5);
  for (int i = 0; i < 10; ++i) {
    SimilaritySim3 a = random_sim3(rng);
    SimilaritySim3 b = random_sim3(rng);
    Vec3 x = random_point(rng);
    Vec3 via = sim3_apply_point(sim3_compose(a, b), x);
    Vec3 seq = sim3_apply_point(a, sim3_apply_point(b, x));
    CHECK(norm(via - seq) < 1e-12);

    SimilaritySim3 id = sim3_compose(a, sim3_inverse(a));
    CHECK(std::fabs(id.s - 1.0) < 1e-12);
    CHECK(frobenius_norm(id.R - Mat3::identity()) < 1e-12);
    CHECK(norm(id.t) < 1e-12);
  }
}

TEST_CASE("sim3 pose action is consistent with scale-adjusted pointmaps") {
  // Transforming a pointmap scaled by g.s with the pose sim3_apply(g, T)
  // gives the same world points as applying g to the T-transformed points.
  RngState rng(6);
  for (int i = 0; i < 5; ++i) {
    SimilaritySim3 g = random_sim3(rng);
    PoseSE3 t = random_pose(rng);
    Pointmap pm(2, 2);
    for (std::size_t j = 0; j < pm.size(); ++j) {
      pm.points[j] = {rng.normal(), rng.normal(), 1.5 + rng.uniform()};
    }
    Pointmap lhs =
        transform_pointmap(sim3_apply(g, t), scale_pointmap(pm, g.s));
    Pointmap world = transform_pointmap(t, pm);
    for (std::size_t j = 0; j < pm.size(); ++j) {
      Vec3 rhs = sim3_apply_point(g, world.points[j]);
      CHECK(norm(lhs.points[j] - rhs) < 1e-12);
    }
  }
}

TEST_CASE("jacobi svd reconstructs and orders singular values") {
  RngState rng(7);
  for (int i = 0; i < 20; ++i) {
    Mat3 a;
    for (double& v : a.m) v = rng.normal();
    Mat3 u, v;
    Vec3 sigma;
    jacobi_svd3(a, u, sigma, v);

    CHECK(sigma.x >= sigma.y);
    CHECK(sigma.y >= sigma.z);
    CHECK(sigma.z >= 0.0);
    CHECK(frobenius_norm(transpose(u) * u - Mat3::identity()) < 1e-12);
    CHECK(frobenius_norm(transpose(v) * v - Mat3::identity()) < 1e-12);

    Mat3 rebuilt =
        u * Mat3::diagonal(sigma.x, sigma.y, sigma.z) * transpose(v);
    CHECK(frobenius_norm(rebuilt - a) < 1e-12);
  }
}

TEST_CASE("orthonormalize_rotation projects onto rotations") {
  RngState rng(8);
  for (int i = 0; i < 10; ++i) {
    Mat3 r = axis_angle(random_point(rng), rng.uniform(-3.0, 3.0));
    // A rotation is its own projection.
    CHECK(frobenius_norm(orthonormalize_rotation(r) - r) < 1e-12);

    Mat3 noisy = r;
    for (double& v : noisy.m) v += 0.05 * rng.normal();
    Mat3 fixed = orthonormalize_rotation(noisy);
    CHECK(is_rotation(fixed, 1e-9));
  }
  // Reflections project to proper rotations, not mirrors.
  Mat3 mirror = Mat3::diagonal(1.0, 1.0, -1.0);
  CHECK(is_rotation(orthonormalize_rotation(mirror), 1e-9));
}

TEST_CASE("rotation_from_6d builds rotations and rejects degenerate input") {
  RngState rng(9);
  for (int i = 0; i < 10; ++i) {
    std::array<double, 6> a;
    for (double& v : a) v = rng.normal();
    Mat3 r = rotation_from_6d(a);
    CHECK(is_rotation(r, 1e-12));
  }
  CHECK(frobenius_norm(rotation_from_6d({1, 0, 0, 0, 1, 0}) -
                       Mat3::identity()) < 1e-15);
  CHECK_THROWS_AS(rotation_from_6d({0, 0, 0, 1, 0, 0}), NumericalError);
  CHECK_THROWS_AS(rotation_from_6d({1, 0, 0, 2, 0, 0}), NumericalError);
}

TEST_CASE("trajectory enforces strictly increasing frame ids") {
  Trajectory t;
  t.push(0, PoseSE3::identity());
  t.push(5, PoseSE3::identity());
  CHECK_THROWS_AS(t.push(5, PoseSE3::identity()), DataError);
  CHECK_THROWS_AS(t.push(3, PoseSE3::identity()), DataError);
  CHECK(t.size() == 2);
}

TEST_CASE("umeyama on identical clouds returns the identity") {
  RngState rng(10);
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i) pts.push_back(random_point(rng));
  SimilaritySim3 g = umeyama_align(pts, pts, true);
  CHECK(std::fabs(g.s - 1.0) < 1e-12);
  CHECK(frobenius_norm(g.R - Mat3::identity()) < 1e-9);
  CHECK(norm(g.t) < 1e-12);
}

TEST_CASE("umeyama recovers a known similarity exactly") {
  RngState rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SimilaritySim3 g = random_sim3(rng);
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 10; ++i) {
      Vec3 p = random_point(rng);
      src.push_back(p);
      dst.push_back(sim3_apply_point(g, p));
    }
    SimilaritySim3 got = umeyama_align(src, dst, true);
    CHECK(std::fabs(got.s - g.s) < 1e-9);
    CHECK(frobenius_norm(got.R - g.R) < 1e-9);
    CHECK(norm(got.t - g.t) < 1e-9);

    double residual = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      Vec3 err = sim3_apply_point(got, src[i]) - dst[i];
      residual += dot(err, err);
    }
    CHECK(residual < 1e-18);
  }
}

TEST_CASE("umeyama recovers rigid transforms with scale disabled") {
  RngState rng(12);
  PoseSE3 p = random_pose(rng);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 6; ++i) {
    Vec3 q = random_point(rng);
    src.push_back(q);
    dst.push_back(se3_apply_point(p, q));
  }
  SimilaritySim3 got = umeyama_align(src, dst, false);
  CHECK(got.s == 1.0);
  CHECK(frobenius_norm(got.R - p.R) < 1e-9);
  CHECK(norm(got.t - p.t) < 1e-9);
}

TEST_CASE("umeyama residual never exceeds the raw noise level") {
  RngState rng(13);
  std::vector<Vec3> src, dst;
  double noise_sq = 0.0;
  for (int i = 0; i < 30; ++i) {
    Vec3 p = random_point(rng);
    Vec3 eps = {0.01 * rng.normal(), 0.01 * rng.normal(),
                0.01 * rng.normal()};
    src.push_back(p);
    dst.push_back(p + eps);
    noise_sq += dot(eps, eps);
  }
  SimilaritySim3 got = umeyama_align(src, dst, true);
  double residual_sq = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Vec3 err = sim3_apply_point(got, src[i]) - dst[i];
    residual_sq += dot(err, err);
  }
  CHECK(residual_sq <= noise_sq + 1e-15);
}

TEST_CASE("umeyama rejects degenerate configurations") {
  std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(umeyama_align(two, two, true), DegenerateError);

  std::vector<Vec3> line;
  for (int i = 0; i < 6; ++i) {
    line.push_back({static_cast<double>(i), 0.0, 0.0});
  }
  CHECK_THROWS_AS(umeyama_align(line, line, true), DegenerateError);

  std::vector<Vec3> collapsed(5, Vec3{1, 2, 3});
  CHECK_THROWS_AS(umeyama_align(collapsed, collapsed, true), DegenerateError);
}

TEST_CASE("umeyama residual is invariant to a common gauge") {
  RngState rng(14);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 12; ++i) {
    src.push_back(random_point(rng));
    dst.push_back(random_point(rng));
  }
  auto residual_of = [](const std::vector<Vec3>& s,
                        const std::vector<Vec3>& d) {
    SimilaritySim3 g = umeyama_align(s, d, true);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      Vec3 err = sim3_apply_point(g, s[i]) - d[i];
      acc += dot(err, err);
    }
    return acc;
  };
  double base = residual_of(src, dst);

  SimilaritySim3 gauge = random_sim3(rng);
  std::vector<Vec3> src2, dst2;
  for (std::size_t i = 0; i < src.size(); ++i) {
    src2.push_back(sim3_apply_point(gauge, src[i]));
    dst2.push_back(sim3_apply_point(gauge, dst[i]));
  }
  // The gauge rescales space by gauge.s, so residuals scale by gauge.s^2.
  double transformed = residual_of(src2, dst2) / (gauge.s * gauge.s);
  CHECK(std::fabs(transformed - base) < 1e-9 * (1.0 + base));
}

TEST_CASE("umeyama beats random similarity transforms") {
  RngState rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 6; ++i) {
      src.push_back(random_point(rng));
      dst.push_back(random_point(rng));
    }
    SimilaritySim3 best = umeyama_align(src, dst, true);
    double best_residual = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      Vec3 err = sim3_apply_point(best, src[i]) - dst[i];
      best_residual += dot(err, err);
    }
    for (int k = 0; k < 1000; ++k) {
      SimilaritySim3 rival = random_sim3(rng);
      double r = 0.0;
      for (std::size_t i = 0; i < src.size(); ++i) {
        Vec3 err = sim3_apply_point(rival, src[i]) - dst[i];
        r += dot(err, err);
      }
      CHECK(r >= best_residual - 1e-12);
    }
  }
}

TEST_CASE("geodesic angle between rotations") {
  Mat3 a = axis_angle({0, 0, 1}, 0.5);
  CHECK(std::fabs(rotation_geodesic_angle(a, a)) < 1e-7);
  Mat3 b = axis_angle({0, 0, 1}, 1.2);
  CHECK(std::fabs(rotation_geodesic_angle(a, b) - 0.7) < 1e-12);
}
