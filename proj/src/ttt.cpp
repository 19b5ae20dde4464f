#include "geostream/ttt.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geostream/errors.hpp"

namespace geostream {

void TttConfig::validate() const {
  if (learning_rate < 0.0 || !std::isfinite(learning_rate)) {
    throw ConfigError("ttt: learning_rate must be non-negative");
  }
  if (momentum_coeff < 0.0 || momentum_coeff >= 1.0) {
    throw ConfigError("ttt: momentum_coeff must be in [0, 1)");
  }
  if (newton_schulz_iters < 1) {
    throw ConfigError("ttt: newton_schulz_iters must be >= 1");
  }
  if (n_heads == 0 || head_dim == 0 || expansion == 0) {
    throw ConfigError("ttt: head dims must be positive");
  }
  if (reset_period < 0) {
    throw ConfigError("ttt: reset_period must be >= 0");
  }
}

Tensor newton_schulz_orthogonalize(const Tensor& m, int iters) {
  if (m.rank() != 2) throw ShapeError("newton_schulz: matrix required");
  constexpr double a = 15.0 / 8.0;
  constexpr double b = -10.0 / 8.0;
  constexpr double c = 3.0 / 8.0;

  bool tall = m.rows() > m.cols();
  Tensor x = tall ? transpose(m) : m;
  double norm = frobenius_norm(x);
  scale_inplace(x, 1.0 / (norm + 1e-12));
  for (int it = 0; it < iters; ++it) {
    Tensor gram = matmul_abt(x, x);        // A = X X^T
    Tensor ax = matmul(gram, x);           // A X
    Tensor aax = matmul(gram, ax);         // A^2 X
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = a * x[i] + b * ax[i] + c * aax[i];
    }
  }
  return tall ? transpose(x) : x;
}

MuonResult muon_step(const Tensor& grad, const Tensor& momentum,
                     const TttConfig& cfg) {
  if (!grad.same_shape(momentum)) {
    throw ShapeError("muon: grad/momentum shape mismatch");
  }
  MuonResult out;
  out.new_momentum = add(scaled(momentum, cfg.momentum_coeff), grad);
  out.direction =
      newton_schulz_orthogonalize(out.new_momentum, cfg.newton_schulz_iters);
  return out;
}

void FastWeightState::validate() const {
  if (heads.empty() || heads.size() != momentum.size() ||
      heads.size() != initial.size()) {
    throw ShapeError("fast weights: head list mismatch");
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    heads[h].validate();
    if (!heads[h].w_gate.same_shape(momentum[h].w_gate) ||
        !heads[h].w_gate.same_shape(initial[h].w_gate)) {
      throw ShapeError("fast weights: momentum/initial shape mismatch");
    }
  }
}

FastWeightState FastWeightState::init(const TttConfig& cfg, RngState& rng) {
  cfg.validate();
  FastWeightState st;
  double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    SwigluParams p = SwigluParams::zeros(cfg.head_dim, cfg.hidden());
    fill_normal(rng, p.w_gate, stddev);
    fill_normal(rng, p.w_up, stddev);
    // w_down stays zero.
    st.heads.push_back(p);
    st.momentum.push_back(SwigluParams::zeros(cfg.head_dim, cfg.hidden()));
  }
  st.initial = st.heads;
  return st;
}

Tensor fastweight_apply(const FastWeightState& state, const Tensor& q) {
  state.validate();
  std::size_t hd = state.head_dim();
  if (q.cols() != state.n_heads() * hd) {
    throw ShapeError("fast weights: query width mismatch");
  }
  Tensor out = Tensor::matrix(q.rows(), q.cols());
  for (std::size_t h = 0; h < state.n_heads(); ++h) {
    Tensor q_h = slice_cols(q, h * hd, (h + 1) * hd);
    Tensor o_h = swiglu_forward(state.heads[h], q_h);
    paste_cols(out, h * hd, o_h);
  }
  return out;
}

void fastweight_update(FastWeightState& state, const Tensor& k,
                       const Tensor& v, const TttConfig& cfg) {
  state.validate();
  std::size_t hd = state.head_dim();
  if (!k.same_shape(v) || k.cols() != state.n_heads() * hd) {
    throw ShapeError("fast weights: key/value shape mismatch");
  }

  // Compute every gradient before touching any weight so a numerical
  // failure cannot leave the state half-updated.
  std::vector<SwigluGradients> grads;
  grads.reserve(state.n_heads());
  for (std::size_t h = 0; h < state.n_heads(); ++h) {
    Tensor k_h = slice_cols(k, h * hd, (h + 1) * hd);
    Tensor v_h = slice_cols(v, h * hd, (h + 1) * hd);
    SwigluGradients g = swiglu_grad(state.heads[h], k_h, v_h);
    if (!std::isfinite(g.loss) || !g.d_gate.all_finite() ||
        !g.d_up.all_finite() || !g.d_down.all_finite()) {
      throw NumericalError("fast weights: non-finite gradient");
    }
    grads.push_back(std::move(g));
  }

  for (std::size_t h = 0; h < state.n_heads(); ++h) {
    auto step = [&](Tensor& w, Tensor& m, const Tensor& g) {
      MuonResult r = muon_step(g, m, cfg);
      m = std::move(r.new_momentum);
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= cfg.learning_rate * r.direction[i];
      }
    };
    step(state.heads[h].w_gate, state.momentum[h].w_gate, grads[h].d_gate);
    step(state.heads[h].w_up, state.momentum[h].w_up, grads[h].d_up);
    step(state.heads[h].w_down, state.momentum[h].w_down, grads[h].d_down);
  }
  ++state.chunks_absorbed;
}

TttProjections TttProjections::init(std::size_t model_dim,
                                    const TttConfig& cfg, RngState& rng) {
  std::size_t width = cfg.n_heads * cfg.head_dim;
  auto orthogonal = [&](std::size_t rows, std::size_t cols) {
    Tensor m = random_matrix(rng, rows, cols, 1.0);
    return newton_schulz_orthogonalize(m, 12);
  };
  TttProjections p;
  p.w_q = orthogonal(width, model_dim);
  p.w_k = orthogonal(width, model_dim);
  p.w_v = orthogonal(width, model_dim);
  p.w_out = orthogonal(model_dim, width);
  return p;
}

Tensor ttt_apply(const FastWeightState& state, const TttProjections& proj,
                 const Tensor& tokens_normed) {
  Tensor q = matmul_abt(tokens_normed, proj.w_q);
  Tensor o = fastweight_apply(state, q);
  return matmul_abt(o, proj.w_out);
}

void ttt_update(FastWeightState& state, const TttProjections& proj,
                const Tensor& tokens_normed, const TttConfig& cfg) {
  Tensor k = matmul_abt(tokens_normed, proj.w_k);
  Tensor v = matmul_abt(tokens_normed, proj.w_v);
  fastweight_update(state, k, v, cfg);
}

void reset_state(FastWeightState& state) {
  state.validate();
  state.heads = state.initial;
  for (SwigluParams& m : state.momentum) {
    m = SwigluParams::zeros(m.w_down.rows(), m.w_gate.rows());
  }
  state.chunks_absorbed = 0;
}

namespace {

constexpr std::size_t kHeaderBytes = 256;

void append_le_double(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

double read_le_double(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i]))
            << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void append_params(std::string& buf, const SwigluParams& p) {
  for (double v : p.w_gate.data()) append_le_double(buf, v);
  for (double v : p.w_up.data()) append_le_double(buf, v);
  for (double v : p.w_down.data()) append_le_double(buf, v);
}

std::size_t params_doubles(std::size_t dim, std::size_t hidden) {
  return 3 * dim * hidden;
}

}  // namespace

std::size_t fast_weight_bytes(const FastWeightState& state) {
  state.validate();
  std::size_t per_head = params_doubles(state.head_dim(), state.hidden());
  // heads + momentum + initial
  return kHeaderBytes + 3 * state.n_heads() * per_head * 8;
}

void save_fast_weights(const FastWeightState& state, const std::string& path) {
  state.validate();
  nlohmann::json header = {
      {"kind", "fastweights"},
      {"n_heads", state.n_heads()},
      {"head_dim", state.head_dim()},
      {"hidden", state.hidden()},
      {"chunks_absorbed", state.chunks_absorbed},
  };
  std::string head = header.dump();
  if (head.size() >= kHeaderBytes) {
    throw IoError("fast weights: header too large");
  }
  head.resize(kHeaderBytes - 1, ' ');
  head.push_back('\n');

  std::string buf = head;
  for (const SwigluParams& p : state.heads) append_params(buf, p);
  for (const SwigluParams& p : state.momentum) append_params(buf, p);
  for (const SwigluParams& p : state.initial) append_params(buf, p);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("fast weights: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("fast weights: write failed for " + path);
}

FastWeightState load_fast_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("fast weights: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < kHeaderBytes || buf[kHeaderBytes - 1] != '\n') {
    throw ParseError("fast weights: truncated or malformed header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(0, kHeaderBytes - 1));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fast weights: bad header: ") + e.what());
  }
  if (header.value("kind", "") != std::string("fastweights")) {
    throw ParseError("fast weights: unexpected kind");
  }
  std::size_t n_heads = header.at("n_heads").get<std::size_t>();
  std::size_t head_dim = header.at("head_dim").get<std::size_t>();
  std::size_t hidden = header.at("hidden").get<std::size_t>();
  if (n_heads == 0 || head_dim == 0 || hidden == 0) {
    throw ParseError("fast weights: bad dimensions");
  }

  std::size_t per_head = params_doubles(head_dim, hidden);
  std::size_t expect = kHeaderBytes + 3 * n_heads * per_head * 8;
  if (buf.size() != expect) {
    throw ParseError("fast weights: size mismatch");
  }

  const char* p = buf.data() + kHeaderBytes;
  auto read_params = [&]() {
    SwigluParams params = SwigluParams::zeros(head_dim, hidden);
    for (double& v : params.w_gate.data()) v = read_le_double(p), p += 8;
    for (double& v : params.w_up.data()) v = read_le_double(p), p += 8;
    for (double& v : params.w_down.data()) v = read_le_double(p), p += 8;
    return params;
  };

  FastWeightState st;
  for (std::size_t h = 0; h < n_heads; ++h) st.heads.push_back(read_params());
  for (std::size_t h = 0; h < n_heads; ++h) {
    st.momentum.push_back(read_params());
  }
  for (std::size_t h = 0; h < n_heads; ++h) {
    st.initial.push_back(read_params());
  }
  st.chunks_absorbed = header.at("chunks_absorbed").get<std::int64_t>();
  st.validate();
  return st;
}

}  // namespace geostream
