#include "geostream/block.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include <json.hpp>

#include "geostream/errors.hpp"
#include "geostream/numerics.hpp"

namespace geostream {

namespace {

// Lay tokens_per_frame out as a grid: square when possible, one row
// otherwise. Pointmaps only care about the pixel count.
std::pair<std::size_t, std::size_t> patch_grid(std::size_t tpf) {
  auto root = static_cast<std::size_t>(std::llround(std::sqrt(
      static_cast<double>(tpf))));
  if (root * root == tpf) return {root, root};
  return {1, tpf};
}

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

std::vector<double> affine_row(const Tensor& w, const std::vector<double>& b,
                               const Tensor& tokens, std::size_t row) {
  std::vector<double> out(w.rows());
  for (std::size_t o = 0; o < w.rows(); ++o) {
    double acc = b[o];
    for (std::size_t c = 0; c < w.cols(); ++c) {
      acc += w.at(o, c) * tokens.at(row, c);
    }
    out[o] = acc;
  }
  return out;
}

}  // namespace

void StackConfig::validate() const {
  if (model_dim == 0 || heads == 0 || model_dim % heads != 0) {
    throw ConfigError("stack config: model_dim must be a multiple of heads");
  }
  if (n_blocks == 0) throw ConfigError("stack config: need at least 1 block");
  if (patch_rows == 0 || patch_cols == 0) {
    throw ConfigError("stack config: empty patch grid");
  }
  if (feature_dim == 0) throw ConfigError("stack config: feature_dim = 0");
  for (std::size_t d : swa_depths) {
    if (d < 1 || d > n_blocks) {
      throw ConfigError("stack config: swa depth outside [1, n_blocks]");
    }
    if (std::count(swa_depths.begin(), swa_depths.end(), d) != 1) {
      throw ConfigError("stack config: duplicate swa depth");
    }
  }
  ttt.validate();
}

StackConfig StackConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config: top level must be an object");

  StackConfig cfg;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "model_dim") {
        cfg.model_dim = val.get<std::size_t>();
      } else if (key == "n_blocks") {
        cfg.n_blocks = val.get<std::size_t>();
      } else if (key == "heads") {
        cfg.heads = val.get<std::size_t>();
      } else if (key == "swa_depths") {
        cfg.swa_depths = val.get<std::vector<std::size_t>>();
      } else if (key == "tokens_per_frame") {
        auto grid = patch_grid(val.get<std::size_t>());
        cfg.patch_rows = grid.first;
        cfg.patch_cols = grid.second;
      } else if (key == "ttt") {
        if (!val.is_object()) throw ParseError("config: ttt must be an object");
        for (const auto& [tk, tv] : val.items()) {
          if (tk == "lr") {
            cfg.ttt.learning_rate = tv.get<double>();
          } else if (tk == "momentum") {
            cfg.ttt.momentum_coeff = tv.get<double>();
          } else if (tk == "ns_iters") {
            cfg.ttt.newton_schulz_iters = tv.get<int>();
          } else if (tk == "reset_period") {
            cfg.ttt.reset_period = tv.get<std::int64_t>();
          } else {
            throw ConfigError("config: unknown ttt key '" + tk + "'");
          }
        }
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string StackConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["model_dim"] = model_dim;
  j["n_blocks"] = n_blocks;
  j["heads"] = heads;
  j["swa_depths"] = swa_depths;
  j["tokens_per_frame"] = tokens_per_frame();
  j["ttt"] = {{"lr", ttt.learning_rate},
              {"momentum", ttt.momentum_coeff},
              {"ns_iters", ttt.newton_schulz_iters},
              {"reset_period", ttt.reset_period}};
  return j.dump(2);
}

PredictionHeads PredictionHeads::init(std::size_t model_dim, RngState& rng) {
  PredictionHeads h;
  double scale = 1.0 / std::sqrt(static_cast<double>(model_dim));
  h.pointmap_w = random_matrix(rng, 3, model_dim, scale);
  h.pointmap_b = {0.0, 0.0, 1.0};
  h.pose_w = random_matrix(rng, 9, model_dim, scale);
  // Bias toward the identity rotation so the 6d lift is never degenerate
  // at small activations.
  h.pose_b = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  h.conf_w = random_matrix(rng, 1, model_dim, scale);
  h.conf_b = {0.0};
  return h;
}

StackParams StackParams::init(const StackConfig& cfg, RngState& rng) {
  cfg.validate();
  StackParams p;
  double scale = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  p.embed_w = random_matrix(rng, cfg.model_dim, cfg.feature_dim, scale);
  p.embed_b.assign(cfg.model_dim, 0.0);
  for (std::size_t b = 1; b <= cfg.n_blocks; ++b) {
    BlockParams bp;
    bp.frame_attn = AttentionParams::init(cfg.model_dim, cfg.heads, rng);
    if (std::count(cfg.swa_depths.begin(), cfg.swa_depths.end(), b) > 0) {
      bp.swa = SwaLayerParams::init(cfg.model_dim, cfg.heads, rng);
    }
    bp.ttt.proj = TttProjections::init(cfg.model_dim, cfg.ttt, rng);
    bp.ttt.ln = LayerNormParams::identity(cfg.model_dim);
    bp.chunk_attn = AttentionParams::init(cfg.model_dim, cfg.heads, rng);
    p.blocks.push_back(std::move(bp));
    p.fast_init.push_back(FastWeightState::init(cfg.ttt, rng));
  }
  p.heads = PredictionHeads::init(cfg.model_dim, rng);
  return p;
}

StreamState StreamState::fresh(const StackParams& params) {
  StreamState s;
  for (const FastWeightState& f : params.fast_init) {
    BlockState b;
    b.fast = f;
    s.blocks.push_back(std::move(b));
  }
  return s;
}

void StreamState::reset_memory() {
  for (BlockState& b : blocks) {
    reset_state(b.fast);
    b.cache.clear();
    b.prev_tokens.reset();
  }
  prev_meta.reset();
}

std::size_t StreamState::state_bytes() const {
  std::size_t total = 0;
  for (const BlockState& b : blocks) {
    total += fast_weight_bytes(b.fast);
    total += b.cache.bytes();
    if (b.prev_tokens) total += b.prev_tokens->size() * 8;
  }
  if (prev_meta) total += prev_meta->frames() * 9;
  return total;
}

Tensor block_forward(const BlockParams& bp, const StackConfig& cfg,
                     const TokenBlock& cur, std::int64_t chunk_index,
                     BlockState& state,
                     const std::optional<FrameMeta>& prev_meta) {
  cur.validate();
  if (cur.tokens.cols() != cfg.model_dim) {
    throw ShapeError("block: token dim != model_dim");
  }

  std::vector<std::size_t> frame_sizes(cur.frames, cur.tokens_per_frame);
  Tensor tokens = attention_sublayer(
      cur.tokens, bp.frame_attn, AttentionMask::block_diagonal(frame_sizes));

  if (bp.swa && cfg.enable_swa) {
    ChunkWindow window;
    window.cur = cur;
    window.cur.tokens = tokens;
    window.chunk_index = chunk_index;
    if (!cfg.use_kv_cache && state.prev_tokens && prev_meta) {
      TokenBlock prev;
      prev.tokens = *state.prev_tokens;
      prev.frames = prev_meta->frames();
      prev.tokens_per_frame = cur.tokens_per_frame;
      prev.frame_ids = prev_meta->frame_ids;
      prev.status = prev_meta->status;
      window.prev = std::move(prev);
    }
    SwaResult r = swa_forward(window,
                              cfg.use_kv_cache ? state.cache : SwaCache{},
                              *bp.swa);
    if (cfg.use_kv_cache) {
      state.cache = std::move(r.cache);
    } else {
      state.prev_tokens = std::move(window.cur.tokens);
    }
    tokens = std::move(r.tokens);
  }

  Tensor normed = layer_norm(tokens, bp.ttt.ln);
  if (cfg.enable_ttt) {
    tokens = add(tokens, ttt_apply(state.fast, bp.ttt.proj, normed));
    ttt_update(state.fast, bp.ttt.proj, normed, cfg.ttt);
  }

  std::size_t n = tokens.rows();
  return attention_sublayer(tokens, bp.chunk_attn,
                            AttentionMask::all_allowed(n, n));
}

ChunkOutput stack_forward(const StackParams& params, const StackConfig& cfg,
                          const Tensor& features, const FrameMeta& meta,
                          StreamState& state) {
  std::size_t tpf = cfg.tokens_per_frame();
  std::size_t frames = meta.frames();
  if (frames == 0 || meta.status.size() != frames) {
    throw ShapeError("stack: one id and one status per frame required");
  }
  if (features.rank() != 2 || features.rows() != frames * tpf ||
      features.cols() != cfg.feature_dim) {
    throw ShapeError("stack: features must be [frames*tokens_per_frame x "
                     "feature_dim]");
  }
  if (state.blocks.size() != params.blocks.size()) {
    throw ConfigError("stack: stream state from a different stack");
  }

  ChunkOutput out;
  if (cfg.ttt.reset_period > 0 && state.chunks_processed > 0 &&
      state.chunks_processed % cfg.ttt.reset_period == 0) {
    state.reset_memory();
    out.reset_applied = true;
  }

  Tensor tokens = linear(features, params.embed_w);
  for (std::size_t r = 0; r < tokens.rows(); ++r) {
    for (std::size_t c = 0; c < tokens.cols(); ++c) {
      tokens.at(r, c) += params.embed_b[c];
    }
  }

  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    TokenBlock cur;
    cur.tokens = std::move(tokens);
    cur.frames = frames;
    cur.tokens_per_frame = tpf;
    cur.frame_ids = meta.frame_ids;
    cur.status = meta.status;
    tokens = block_forward(params.blocks[i], cfg, cur,
                           state.chunks_processed, state.blocks[i],
                           state.prev_meta);
  }

  out.confidence = Tensor::matrix(frames, tpf);
  auto grid = std::pair<std::size_t, std::size_t>{cfg.patch_rows,
                                                  cfg.patch_cols};
  for (std::size_t f = 0; f < frames; ++f) {
    Pointmap pm(grid.first, grid.second);
    for (std::size_t p = 0; p < tpf; ++p) {
      std::size_t row = f * tpf + p;
      std::vector<double> xyz =
          affine_row(params.heads.pointmap_w, params.heads.pointmap_b,
                     tokens, row);
      pm.points[p] = Vec3{xyz[0], xyz[1], softplus(xyz[2]) + 0.05};
      std::vector<double> conf =
          affine_row(params.heads.conf_w, params.heads.conf_b, tokens, row);
      out.confidence.at(f, p) = 1.0 / (1.0 + std::exp(-conf[0]));
    }
    out.pointmaps.push_back(std::move(pm));

    std::vector<double> pooled(cfg.model_dim, 0.0);
    for (std::size_t p = 0; p < tpf; ++p) {
      for (std::size_t c = 0; c < cfg.model_dim; ++c) {
        pooled[c] += tokens.at(f * tpf + p, c) / static_cast<double>(tpf);
      }
    }
    std::vector<double> nine(9);
    for (std::size_t o = 0; o < 9; ++o) {
      double acc = params.heads.pose_b[o];
      for (std::size_t c = 0; c < cfg.model_dim; ++c) {
        acc += params.heads.pose_w.at(o, c) * pooled[c];
      }
      nine[o] = acc;
    }
    PoseSE3 pose;
    pose.R = rotation_from_6d(
        {nine[0], nine[1], nine[2], nine[3], nine[4], nine[5]});
    pose.t = Vec3{nine[6], nine[7], nine[8]};
    out.poses.push_back(pose);
  }

  state.chunks_processed += 1;
  state.prev_meta = meta;
  return out;
}

}  // namespace geostream
