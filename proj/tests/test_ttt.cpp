#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "geostream/errors.hpp"
#include "geostream/numerics.hpp"
#include "geostream/rng.hpp"
#include "geostream/tensor.hpp"
#include "geostream/ttt.hpp"
#include "oracles.hpp"

using namespace geostream;

namespace {

// Mean inner reconstruction loss over all heads: L(f_W(k), v).
double inner_loss(const FastWeightState& st, const Tensor& k,
                  const Tensor& v) {
  Tensor out = fastweight_apply(st, k);
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double d = out[i] - v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(out.size());
}

bool params_equal(const SwigluParams& a, const SwigluParams& b) {
  return max_abs_diff(a.w_gate, b.w_gate) == 0.0 &&
         max_abs_diff(a.w_up, b.w_up) == 0.0 &&
         max_abs_diff(a.w_down, b.w_down) == 0.0;
}

bool states_equal(const FastWeightState& a, const FastWeightState& b) {
  if (a.chunks_absorbed != b.chunks_absorbed) return false;
  if (a.heads.size() != b.heads.size()) return false;
  for (std::size_t h = 0; h < a.heads.size(); ++h) {
    if (!params_equal(a.heads[h], b.heads[h])) return false;
    if (!params_equal(a.momentum[h], b.momentum[h])) return false;
    if (!params_equal(a.initial[h], b.initial[h])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("newton-schulz maps zero to zero") {
  Tensor z = Tensor::matrix(3, 3, 0.0);
  Tensor out = newton_schulz_orthogonalize(z, 5);
  CHECK(frobenius_norm(out) == 0.0);
}

TEST_CASE("newton-schulz fixes orthogonal inputs within 1e-3") {
  double a = std::cos(0.7), b = std::sin(0.7);
  Tensor rot = Tensor::matrix(2, 2);
  rot.at(0, 0) = a;
  rot.at(0, 1) = -b;
  rot.at(1, 0) = b;
  rot.at(1, 1) = a;
  Tensor out = newton_schulz_orthogonalize(rot, 5);
  CHECK(max_abs_diff(out, rot) < 1e-3);
}

TEST_CASE("newton-schulz on diag(2, 0.5) approaches identity") {
  Tensor d = Tensor::matrix(2, 2);
  d.at(0, 0) = 2.0;
  d.at(1, 1) = 0.5;
  Tensor out = newton_schulz_orthogonalize(d, 5);
  CHECK(max_abs_diff(out, Tensor::identity(2)) < 0.05);
  // Same answer as the SVD sign-function oracle.
  Tensor want = oracles::ref_svd_sign(d);
  CHECK(max_abs_diff(out, want) < 0.05);
}

TEST_CASE("newton-schulz converges to the svd sign factor") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RngState rng(40 + seed);
    std::size_t n = 4;
    // Controlled conditioning: singular values in [0.5, 2].
    Tensor u = oracles::ref_random_orthogonal(rng, n);
    Tensor v = oracles::ref_random_orthogonal(rng, n);
    Tensor s = Tensor::matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) s.at(i, i) = rng.uniform(0.5, 2.0);
    Tensor a = matmul(matmul(u, s), transpose(v));

    Tensor want = oracles::ref_svd_sign(a);
    Tensor got = newton_schulz_orthogonalize(a, 12);
    CHECK(max_abs_diff(got, want) < 1e-9);

    // At the working iteration count the singular values are near 1.
    Tensor coarse = newton_schulz_orthogonalize(a, 5);
    for (double sv : oracles::ref_singular_values(coarse)) {
      CHECK(std::fabs(sv - 1.0) < 0.3);
    }
  }
}

TEST_CASE("newton-schulz handles rectangular matrices both ways") {
  RngState rng(50);
  Tensor wide = random_matrix(rng, 3, 7, 1.0);
  Tensor tall = random_matrix(rng, 7, 3, 1.0);
  Tensor ow = newton_schulz_orthogonalize(wide, 12);
  Tensor ot = newton_schulz_orthogonalize(tall, 12);
  CHECK(ow.rows() == 3);
  CHECK(ow.cols() == 7);
  CHECK(ot.rows() == 7);
  CHECK(ot.cols() == 3);
  // Rows of the wide result are orthonormal: W W^T = I.
  Tensor gw = matmul_abt(ow, ow);
  CHECK(max_abs_diff(gw, Tensor::identity(3)) < 1e-9);
  Tensor gt = matmul_abt(transpose(ot), transpose(ot));
  CHECK(max_abs_diff(gt, Tensor::identity(3)) < 1e-9);
}

TEST_CASE("muon step accumulates momentum and orthogonalizes it") {
  TttConfig cfg;
  RngState rng(60);
  Tensor g = random_matrix(rng, 3, 3, 1.0);
  Tensor m = random_matrix(rng, 3, 3, 1.0);
  MuonResult r = muon_step(g, m, cfg);
  Tensor want_m = add(scaled(m, cfg.momentum_coeff), g);
  CHECK(max_abs_diff(r.new_momentum, want_m) == 0.0);
  Tensor want_dir =
      newton_schulz_orthogonalize(want_m, cfg.newton_schulz_iters);
  CHECK(max_abs_diff(r.direction, want_dir) == 0.0);
}

TEST_CASE("muon step of zero gradient and momentum is zero") {
  TttConfig cfg;
  Tensor z = Tensor::matrix(4, 4, 0.0);
  MuonResult r = muon_step(z, z, cfg);
  CHECK(frobenius_norm(r.direction) == 0.0);
  CHECK(frobenius_norm(r.new_momentum) == 0.0);
}

TEST_CASE("fresh fast weights are a residual no-op") {
  TttConfig cfg;
  cfg.n_heads = 2;
  cfg.head_dim = 8;
  RngState rng(70);
  FastWeightState st = FastWeightState::init(cfg, rng);
  Tensor q = random_matrix(rng, 5, 16, 1.0);
  Tensor out = fastweight_apply(st, q);
  CHECK(frobenius_norm(out) == 0.0);
}

TEST_CASE("ttt_apply is a pointwise map and read-only") {
  TttConfig cfg;
  cfg.head_dim = 8;
  RngState rng(71);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(12, cfg, rng);
  // Give the fast weights some content first.
  Tensor warm = random_matrix(rng, 6, 12, 1.0);
  ttt_update(st, proj, warm, cfg);

  FastWeightState before = st;
  Tensor row = random_matrix(rng, 1, 12, 1.0);
  Tensor tokens = vstack(row, row);
  Tensor out = ttt_apply(st, proj, tokens);
  for (std::size_t c = 0; c < 12; ++c) {
    CHECK(out.at(0, c) == out.at(1, c));
  }
  CHECK(states_equal(st, before));
}

TEST_CASE("ttt_apply equals the composed projection oracle") {
  TttConfig cfg;
  cfg.n_heads = 2;
  cfg.head_dim = 4;
  cfg.expansion = 2;
  RngState rng(72);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(10, cfg, rng);
  Tensor warm = random_matrix(rng, 4, 10, 1.0);
  ttt_update(st, proj, warm, cfg);

  Tensor tokens = random_matrix(rng, 3, 10, 1.0);
  Tensor got = ttt_apply(st, proj, tokens);

  // Oracle: project queries by hand, run the scalar swiglu per head, then
  // the output projection, all with plain loops.
  std::size_t width = cfg.n_heads * cfg.head_dim;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> q(width, 0.0);
    for (std::size_t i = 0; i < width; ++i) {
      for (std::size_t c = 0; c < 10; ++c) {
        q[i] += proj.w_q.at(i, c) * tokens.at(r, c);
      }
    }
    std::vector<double> o(width, 0.0);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      std::vector<double> q_h(q.begin() + h * cfg.head_dim,
                              q.begin() + (h + 1) * cfg.head_dim);
      std::vector<double> o_h = oracles::ref_swiglu_row(
          st.heads[h].w_gate, st.heads[h].w_up, st.heads[h].w_down, q_h);
      for (std::size_t i = 0; i < cfg.head_dim; ++i) {
        o[h * cfg.head_dim + i] = o_h[i];
      }
    }
    for (std::size_t c = 0; c < 10; ++c) {
      double want = 0.0;
      for (std::size_t i = 0; i < width; ++i) {
        want += proj.w_out.at(c, i) * o[i];
      }
      CHECK(std::fabs(got.at(r, c) - want) < 1e-12);
    }
  }
}

TEST_CASE("zero learning rate leaves params unchanged but counts the chunk") {
  TttConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.head_dim = 8;
  RngState rng(73);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(12, cfg, rng);
  FastWeightState before = st;
  Tensor tokens = random_matrix(rng, 4, 12, 1.0);
  ttt_update(st, proj, tokens, cfg);
  CHECK(st.chunks_absorbed == before.chunks_absorbed + 1);
  for (std::size_t h = 0; h < st.heads.size(); ++h) {
    CHECK(params_equal(st.heads[h], before.heads[h]));
  }
}

TEST_CASE("one update strictly decreases the inner loss for small eta") {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TttConfig cfg;
    cfg.head_dim = 8;
    cfg.expansion = 2;
    RngState rng(900 + seed);
    FastWeightState st = FastWeightState::init(cfg, rng);
    Tensor k = random_matrix(rng, 6, 8, 1.0);
    Tensor v = random_matrix(rng, 6, 8, 1.0);
    double before = inner_loss(st, k, v);

    // Halving search for a step size that descends.
    bool descended = false;
    double eta = 0.05;
    for (int tries = 0; tries < 40; ++tries) {
      TttConfig probe = cfg;
      probe.learning_rate = eta;
      FastWeightState trial = st;
      fastweight_update(trial, k, v, probe);
      if (inner_loss(trial, k, v) < before) {
        descended = true;
        break;
      }
      eta /= 2.0;
    }
    if (!descended) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("repeated updates on one batch descend monotonically") {
  TttConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.head_dim = 8;
  cfg.expansion = 2;
  RngState rng(80);
  FastWeightState st = FastWeightState::init(cfg, rng);
  Tensor k = random_matrix(rng, 8, 8, 1.0);
  Tensor v = random_matrix(rng, 8, 8, 1.0);
  double prev = inner_loss(st, k, v);
  for (int step = 0; step < 2; ++step) {
    fastweight_update(st, k, v, cfg);
    double cur = inner_loss(st, k, v);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("associative recall improves for every pair") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TttConfig cfg;
    cfg.head_dim = 32;
    cfg.expansion = 4;
    cfg.learning_rate = 0.05;
    RngState rng(1000 + seed);
    FastWeightState st = FastWeightState::init(cfg, rng);
    std::size_t n_pairs = 16;
    Tensor k = random_matrix(rng, n_pairs, 32, 1.0);
    Tensor v = random_matrix(rng, n_pairs, 32, 1.0);

    std::vector<double> before(n_pairs), after(n_pairs);
    Tensor out0 = fastweight_apply(st, k);
    fastweight_update(st, k, v, cfg);
    Tensor out1 = fastweight_apply(st, k);
    for (std::size_t i = 0; i < n_pairs; ++i) {
      double b = 0.0, a = 0.0;
      for (std::size_t c = 0; c < 32; ++c) {
        double db = out0.at(i, c) - v.at(i, c);
        double da = out1.at(i, c) - v.at(i, c);
        b += db * db;
        a += da * da;
      }
      before[i] = b;
      after[i] = a;
    }
    for (std::size_t i = 0; i < n_pairs; ++i) {
      CHECK(after[i] < before[i]);
    }
  }
}

TEST_CASE("non-finite tokens leave state untouched and raise") {
  TttConfig cfg;
  cfg.head_dim = 8;
  RngState rng(81);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(12, cfg, rng);
  FastWeightState before = st;
  Tensor tokens = random_matrix(rng, 4, 12, 1.0);
  tokens.at(1, 3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ttt_update(st, proj, tokens, cfg), NumericalError);
  CHECK(states_equal(st, before));
}

TEST_CASE("reset restores the initial snapshot bitwise") {
  TttConfig cfg;
  cfg.head_dim = 8;
  cfg.expansion = 2;
  RngState rng(82);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(12, cfg, rng);
  FastWeightState fresh = st;

  // Fresh state: reset is the identity.
  FastWeightState same = st;
  reset_state(same);
  CHECK(states_equal(same, fresh));

  for (int i = 0; i < 3; ++i) {
    Tensor tokens = random_matrix(rng, 4, 12, 1.0);
    ttt_update(st, proj, tokens, cfg);
  }
  CHECK(st.chunks_absorbed == 3);
  reset_state(st);
  CHECK(states_equal(st, fresh));

  // Idempotent.
  FastWeightState once = st;
  reset_state(st);
  CHECK(states_equal(st, once));

  // Behavior equals a fresh state's, bitwise.
  Tensor probe = random_matrix(rng, 3, 12, 1.0);
  Tensor a = ttt_apply(st, proj, probe);
  Tensor b = ttt_apply(fresh, proj, probe);
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("state serialization round-trips bitwise") {
  TttConfig cfg;
  cfg.n_heads = 2;
  cfg.head_dim = 6;
  cfg.expansion = 2;
  RngState rng(83);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(10, cfg, rng);
  for (int i = 0; i < 2; ++i) {
    Tensor tokens = random_matrix(rng, 4, 10, 1.0);
    ttt_update(st, proj, tokens, cfg);
  }

  std::string path = "ttt_state_roundtrip.bin";
  save_fast_weights(st, path);
  FastWeightState loaded = load_fast_weights(path);
  CHECK(states_equal(st, loaded));
  std::remove(path.c_str());
}

TEST_CASE("serialized byte length is constant across updates") {
  TttConfig cfg;
  cfg.head_dim = 6;
  cfg.expansion = 2;
  RngState rng(84);
  FastWeightState st = FastWeightState::init(cfg, rng);
  TttProjections proj = TttProjections::init(10, cfg, rng);

  std::string path = "ttt_state_size.bin";
  std::size_t expect = fast_weight_bytes(st);
  for (int i = 0; i < 100; ++i) {
    Tensor tokens = random_matrix(rng, 3, 10, 1.0);
    ttt_update(st, proj, tokens, cfg);
    if (i % 10 == 0) {
      save_fast_weights(st, path);
      std::ifstream f(path, std::ios::binary | std::ios::ate);
      CHECK(static_cast<std::size_t>(f.tellg()) == expect);
    }
  }
  CHECK(fast_weight_bytes(st) == expect);
  std::remove(path.c_str());
}

TEST_CASE("malformed state files raise ParseError") {
  std::string path = "ttt_state_bad.bin";
  {
    std::ofstream f(path, std::ios::binary);
    f << "not a header";
  }
  CHECK_THROWS_AS(load_fast_weights(path), ParseError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_fast_weights("does_not_exist.bin"), IoError);
}

TEST_CASE("config validation rejects nonsense") {
  TttConfig cfg;
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TttConfig{};
  cfg.momentum_coeff = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TttConfig{};
  cfg.newton_schulz_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TttConfig{};
  cfg.reset_period = -2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TttConfig{};
  cfg.head_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
