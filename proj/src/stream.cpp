#include "geostream/stream.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>

#include "geostream/errors.hpp"

namespace geostream {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Smooth random height field mapped strictly inside [z_min, z_max].
Pointmap synth_pointmap(RngState& rng, const SceneOptions& opts) {
  Pointmap pm(opts.map_rows, opts.map_cols);
  std::fill(pm.valid.begin(), pm.valid.end(), 1);
  double a1 = rng.uniform(0.0, 2.0 * kPi);
  double a2 = rng.uniform(0.0, 2.0 * kPi);
  double a3 = rng.uniform(0.0, 2.0 * kPi);
  for (std::size_t r = 0; r < opts.map_rows; ++r) {
    for (std::size_t c = 0; c < opts.map_cols; ++c) {
      double u =
          (static_cast<double>(c) + 0.5) / static_cast<double>(opts.map_cols) -
          0.5;
      double v =
          (static_cast<double>(r) + 0.5) / static_cast<double>(opts.map_rows) -
          0.5;
      double frac =
          0.5 + 0.45 * std::sin(a1 + 3.0 * u + 2.0 * v +
                                0.8 * std::sin(a2 + 5.0 * u - 4.0 * v + a3));
      double z = opts.z_min + (opts.z_max - opts.z_min) * frac;
      pm.at(r, c) = {0.8 * u * z, 0.8 * v * z, z};
    }
  }
  return pm;
}

}  // namespace

PartitionPlan partition_chunks(std::size_t n_frames, std::size_t chunk_size,
                               std::size_t overlap) {
  if (n_frames < 1) throw ConfigError("partition: need at least one frame");
  if (overlap < 1) throw ConfigError("partition: overlap must be >= 1");
  if (overlap >= chunk_size) {
    throw ConfigError("partition: overlap must be smaller than chunk_size");
  }

  PartitionPlan plan;
  plan.n_frames = n_frames;
  plan.chunk_size = chunk_size;
  plan.overlap = overlap;

  std::size_t stride = chunk_size - overlap;
  std::size_t m = 0;
  while (true) {
    std::size_t begin = m * stride;
    std::size_t end = begin + chunk_size;
    if (end >= n_frames) {
      plan.chunks.push_back({begin, n_frames});
      break;
    }
    plan.chunks.push_back({begin, end});
    ++m;
  }
  return plan;
}

void SceneOptions::validate() const {
  if (!(step >= 0.0) || !(jitter >= 0.0)) {
    throw ConfigError("scene: step and jitter must be non-negative");
  }
  if (!(z_min > 0.0) || !(z_max > z_min)) {
    throw ConfigError("scene: need 0 < z_min < z_max");
  }
  if (map_rows < 1 || map_cols < 1) {
    throw ConfigError("scene: pointmap grid must be at least 1x1");
  }
}

SyntheticScene generate_scene(std::size_t n_frames, const SceneOptions& opts,
                              std::uint64_t seed) {
  if (n_frames < 1) throw ConfigError("scene: need at least one frame");
  opts.validate();

  SyntheticScene scene;
  scene.seed = seed;
  RngState rng(seed);

  // Turn rate per frame. The loop rate traverses exactly one full circle,
  // so the discrete position sum closes on itself up to the jitter.
  double loop_rate =
      n_frames > 1 ? 2.0 * kPi / static_cast<double>(n_frames - 1) : 0.0;

  double psi = 0.0;
  Vec3 pos{0.0, 0.0, 0.0};
  for (std::size_t f = 0; f < n_frames; ++f) {
    PoseSE3 p;
    p.R = axis_angle({0.0, 1.0, 0.0}, psi);
    p.t = pos;
    scene.trajectory.push(static_cast<std::int64_t>(f), p);
    scene.pointmaps.push_back(synth_pointmap(rng, opts));

    double omega = 0.0;
    switch (opts.motion) {
      case MotionModel::straight:
        break;
      case MotionModel::turn:
        omega = opts.turn_rate;
        break;
      case MotionModel::loop:
        omega = loop_rate;
        break;
      case MotionModel::mixed:
        if (f >= n_frames / 3 && f < 2 * n_frames / 3) omega = opts.turn_rate;
        break;
    }
    Vec3 jitter{opts.jitter * rng.normal(), opts.jitter * rng.normal(),
                opts.jitter * rng.normal()};
    pos = pos + opts.step * Vec3{std::sin(psi), 0.0, std::cos(psi)} + jitter;
    psi += omega;
  }
  return scene;
}

SyntheticScene scene_from_trajectory(const Trajectory& traj,
                                     const SceneOptions& opts,
                                     std::uint64_t seed) {
  if (traj.size() < 1) throw ConfigError("scene: need at least one frame");
  opts.validate();
  traj.check();

  SyntheticScene scene;
  scene.seed = seed;
  scene.trajectory = traj;
  RngState rng(seed);
  for (std::size_t f = 0; f < traj.size(); ++f) {
    scene.pointmaps.push_back(synth_pointmap(rng, opts));
  }
  return scene;
}

void OracleConfig::validate() const {
  if (sigma_t < 0.0 || sigma_r < 0.0 || sigma_s < 0.0) {
    throw ConfigError("oracle: noise sigmas must be non-negative");
  }
}

std::vector<ChunkPrediction> oracle_predict(const SyntheticScene& scene,
                                            const PartitionPlan& plan,
                                            const OracleConfig& cfg) {
  cfg.validate();
  if (scene.frames() != plan.n_frames) {
    throw ConfigError("oracle: plan frame count does not match the scene");
  }

  RngState rng(cfg.seed);
  std::vector<ChunkPrediction> preds;
  for (std::size_t m = 0; m < plan.n_chunks(); ++m) {
    const ChunkSpan& span = plan.chunks[m];

    SimilaritySim3 g = SimilaritySim3::identity();
    if (cfg.gauge_mode != GaugeMode::none) {
      Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
      g.R = axis_angle(axis, rng.uniform(-3.0, 3.0));
      g.t = {1.5 * rng.normal(), 1.5 * rng.normal(), 1.5 * rng.normal()};
      if (cfg.gauge_mode == GaugeMode::per_chunk_sim3) {
        g.s = std::exp(0.4 * rng.normal());
      }
    }
    // exp(0) == 1 exactly, so zero-noise streams stay bitwise gauge-exact.
    double eps = std::exp(cfg.sigma_s * rng.normal());

    ChunkPrediction pred;
    pred.chunk_index = m;
    for (std::size_t f = span.begin; f < span.end; ++f) {
      std::size_t i = f - span.begin;
      pred.frame_ids.push_back(static_cast<std::int64_t>(f));

      PoseSE3 p = sim3_apply(g, scene.trajectory.poses[f]);
      Vec3 dt{rng.normal(), rng.normal(), rng.normal()};
      p.t = p.t + cfg.sigma_t * dt;
      Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
      p.R = p.R * axis_angle(axis, cfg.sigma_r * rng.normal());
      pred.poses.push_back(p);

      bool seam = m > 0 && i < plan.overlap;
      double factor = seam ? g.s * eps : g.s;
      pred.pointmaps.push_back(scale_pointmap(scene.pointmaps[f], factor));
    }
    preds.push_back(std::move(pred));
  }
  return preds;
}

Tensor frame_features(const SyntheticScene& scene, std::size_t frame,
                      std::size_t tokens_per_frame, std::size_t feature_dim) {
  if (frame >= scene.frames()) throw ShapeError("features: frame out of range");
  const Pointmap& pm = scene.pointmaps[frame];
  Tensor out = Tensor::matrix(tokens_per_frame, feature_dim);
  for (std::size_t p = 0; p < tokens_per_frame; ++p) {
    const Vec3& x = pm.points[p % pm.size()];
    for (std::size_t k = 0; k < feature_dim; ++k) {
      double kd = static_cast<double>(k);
      switch (k) {
        case 0: out.at(p, k) = x[0]; break;
        case 1: out.at(p, k) = x[1]; break;
        case 2: out.at(p, k) = x[2]; break;
        case 3: out.at(p, k) = 1.0 / x[2]; break;
        default:
          out.at(p, k) = std::sin(0.9 * kd + x[0] + 0.7 * x[2]) +
                         0.5 * std::cos(0.4 * kd + x[1]);
      }
    }
  }
  return out;
}

StreamResult run_stream(const StackParams& params, const StackConfig& cfg,
                        const SyntheticScene& scene, const PartitionPlan& plan,
                        const StreamOptions& opts, StreamState* state) {
  if (scene.frames() != plan.n_frames) {
    throw ConfigError("stream: plan frame count does not match the scene");
  }
  StackConfig run_cfg = cfg;
  run_cfg.ttt.reset_period = opts.reset_period;
  run_cfg.validate();

  StreamState own = StreamState::fresh(params);
  StreamState& st = state != nullptr ? *state : own;

  std::size_t tpf = run_cfg.tokens_per_frame();
  std::vector<ChunkPrediction> preds;
  StreamResult result;

  for (std::size_t m = 0; m < plan.n_chunks(); ++m) {
    const ChunkSpan& span = plan.chunks[m];
    std::size_t frames = span.frames();

    Tensor features = Tensor::matrix(frames * tpf, run_cfg.feature_dim);
    FrameMeta meta;
    for (std::size_t i = 0; i < frames; ++i) {
      std::size_t f = span.begin + i;
      Tensor ff = frame_features(scene, f, tpf, run_cfg.feature_dim);
      for (std::size_t p = 0; p < tpf; ++p) {
        for (std::size_t k = 0; k < run_cfg.feature_dim; ++k) {
          features.at(i * tpf + p, k) = ff.at(p, k);
        }
      }
      meta.frame_ids.push_back(scene.trajectory.frame_ids[f]);
      if (m > 0 && i < plan.overlap) {
        meta.status.push_back(OverlapStatus::overlaps_previous);
      } else if (m + 1 < plan.n_chunks() && i + plan.overlap >= frames) {
        meta.status.push_back(OverlapStatus::overlaps_next);
      } else {
        meta.status.push_back(OverlapStatus::no_overlap);
      }
    }

    auto t0 = std::chrono::steady_clock::now();
    ChunkOutput out = stack_forward(params, run_cfg, features, meta, st);
    auto t1 = std::chrono::steady_clock::now();

    ChunkDiagnostics diag;
    diag.chunk_index = m;
    diag.frames = frames;
    diag.seconds = std::chrono::duration<double>(t1 - t0).count();
    diag.state_bytes = st.state_bytes();
    diag.reset_applied = out.reset_applied;
    result.per_chunk.push_back(diag);

    ChunkPrediction pred;
    pred.chunk_index = m;
    pred.frame_ids = meta.frame_ids;
    pred.poses = std::move(out.poses);
    pred.pointmaps = std::move(out.pointmaps);
    preds.push_back(std::move(pred));

    // Per-frame confidence, first chunk to mention a frame wins, matching
    // the stitcher's dedup rule.
    for (std::size_t i = 0; i < frames; ++i) {
      if (m > 0 && i < plan.overlap) continue;
      double acc = 0.0;
      for (std::size_t p = 0; p < tpf; ++p) acc += out.confidence.at(i, p);
      result.confidence.push_back(acc / static_cast<double>(tpf));
    }
  }

  if (!opts.stitch) {
    for (std::size_t m = 0; m < preds.size(); ++m) {
      for (std::size_t i = m > 0 ? plan.overlap : 0; i < preds[m].frames();
           ++i) {
        result.frame_ids.push_back(preds[m].frame_ids[i]);
        result.poses.push_back(preds[m].poses[i]);
        result.pointmaps.push_back(preds[m].pointmaps[i]);
      }
      result.chunk_transforms.push_back(PoseSE3::identity());
      result.chunk_scales.push_back(1.0);
    }
    return result;
  }

  AlignedStream stitched = stitch_stream(preds, {.mode = opts.align_mode});
  result.frame_ids = std::move(stitched.frame_ids);
  result.poses = std::move(stitched.poses);
  result.pointmaps = std::move(stitched.pointmaps);
  result.chunk_transforms = std::move(stitched.chunk_transforms);
  result.chunk_scales = std::move(stitched.chunk_scales);
  return result;
}

RecallResult recall_task(std::size_t n_pairs, std::size_t dims,
                         std::uint64_t seed, double learning_rate,
                         std::size_t pairs_per_chunk) {
  if (n_pairs < 1) throw ConfigError("recall: need at least one pair");
  if (pairs_per_chunk < 1) throw ConfigError("recall: empty chunks");

  TttConfig cfg;
  cfg.n_heads = 1;
  cfg.head_dim = dims;
  cfg.expansion = 4;
  cfg.learning_rate = learning_rate;
  cfg.reset_period = 0;
  cfg.validate();

  RngState rng(seed);
  RecallResult res;
  res.keys = Tensor::matrix(n_pairs, dims);
  res.values = Tensor::matrix(n_pairs, dims);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    double len = 0.0;
    for (std::size_t c = 0; c < dims; ++c) {
      res.keys.at(i, c) = rng.normal();
      len += res.keys.at(i, c) * res.keys.at(i, c);
    }
    len = std::sqrt(len);
    for (std::size_t c = 0; c < dims; ++c) res.keys.at(i, c) /= len;
    double vlen = 0.0;
    for (std::size_t c = 0; c < dims; ++c) {
      res.values.at(i, c) = rng.normal();
      vlen += res.values.at(i, c) * res.values.at(i, c);
    }
    vlen = std::sqrt(vlen);
    for (std::size_t c = 0; c < dims; ++c) res.values.at(i, c) /= vlen;
  }

  FastWeightState state = FastWeightState::init(cfg, rng);
  auto retrieval_error = [&]() {
    Tensor got = fastweight_apply(state, res.keys);
    double acc = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      double d = got[i] - res.values[i];
      acc += d * d;
    }
    return acc / static_cast<double>(n_pairs);
  };

  res.report.n_pairs = n_pairs;
  res.report.dims = dims;
  res.report.before = retrieval_error();
  for (std::size_t start = 0; start < n_pairs; start += pairs_per_chunk) {
    std::size_t end = std::min(start + pairs_per_chunk, n_pairs);
    Tensor k = slice_rows(res.keys, start, end);
    Tensor v = slice_rows(res.values, start, end);
    fastweight_update(state, k, v, cfg);
  }
  res.report.after = retrieval_error();
  return res;
}

void write_pose_jsonl(std::ostream& os, std::span<const std::int64_t> ids,
                      std::span<const PoseSE3> poses) {
  if (ids.size() != poses.size()) {
    throw ShapeError("pose dump: id and pose counts differ");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const PoseSE3& p = poses[i];
    nlohmann::ordered_json j;
    j["frame_id"] = ids[i];
    std::vector<double> flat;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) flat.push_back(p.R.at(r, c));
      flat.push_back(p.t[r]);
    }
    j["pose"] = flat;
    os << j.dump() << '\n';
  }
}

Trajectory read_pose_jsonl(std::istream& is) {
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("frame_id") ||
        !j.contains("pose") || !j["pose"].is_array() ||
        j["pose"].size() != 12) {
      throw ParseError("pose dump: bad record at line " +
                       std::to_string(line_no));
    }
    PoseSE3 p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        p.R.at(r, c) = j["pose"][4 * r + c].get<double>();
      }
      p.t[r] = j["pose"][4 * r + 3].get<double>();
    }
    validate_pose(p);
    traj.push(j["frame_id"].get<std::int64_t>(), p);
  }
  traj.check();
  return traj;
}

}  // namespace geostream
