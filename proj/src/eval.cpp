#include "geostream/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "geostream/errors.hpp"
#include "geostream/losses.hpp"
#include "geostream/numerics.hpp"
#include "geostream/rng.hpp"
#include "geostream/stream.hpp"

namespace geostream {

std::string ate_alignment_name(AteAlignment a) {
  switch (a) {
    case AteAlignment::sim3: return "sim3";
    case AteAlignment::se3: return "se3";
    case AteAlignment::none: return "none";
  }
  throw ConfigError("ate: unknown alignment");
}

AteAlignment ate_alignment_from_name(const std::string& name) {
  if (name == "sim3") return AteAlignment::sim3;
  if (name == "se3") return AteAlignment::se3;
  if (name == "none") return AteAlignment::none;
  throw ConfigError("ate: unknown alignment '" + name + "'");
}

AteReport compute_ate(const Trajectory& pred, const Trajectory& gt,
                      AteAlignment alignment) {
  pred.check();
  gt.check();
  if (pred.size() != gt.size() || pred.frame_ids != gt.frame_ids) {
    throw AlignmentError("ate: predicted and ground-truth frame ids differ");
  }
  if (gt.size() < 3) throw DegenerateError("ate: need at least 3 frames");

  std::vector<Vec3> src, dst;
  src.reserve(pred.size());
  dst.reserve(gt.size());
  for (const PoseSE3& p : pred.poses) src.push_back(p.t);
  for (const PoseSE3& p : gt.poses) dst.push_back(p.t);

  AteReport report;
  report.alignment = alignment;
  report.n_frames = gt.size();
  if (alignment != AteAlignment::none) {
    report.transform =
        umeyama_align(src, dst, alignment == AteAlignment::sim3);
  }

  double acc = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    double e = norm(dst[i] - sim3_apply_point(report.transform, src[i]));
    report.per_frame.push_back(e);
    acc += e * e;
  }
  report.rmse = std::sqrt(acc / static_cast<double>(src.size()));
  return report;
}

namespace {

bool blank_line(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

PoseFile parse_pose_file(std::istream& is) {
  PoseFile out;
  std::string line;
  std::size_t line_no = 0;
  std::int64_t frame = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank_line(line)) continue;

    std::istringstream ls(line);
    std::vector<double> v;
    double x = 0.0;
    while (ls >> x) v.push_back(x);
    if (!ls.eof() || v.size() != 12) {
      throw ParseError("pose file: expected 12 values at line " +
                       std::to_string(line_no));
    }

    PoseSE3 p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.R.at(r, c) = v[4 * r + c];
      p.t[r] = v[4 * r + 3];
    }
    if (!all_finite(p.R) || !std::isfinite(p.t[0]) || !std::isfinite(p.t[1]) ||
        !std::isfinite(p.t[2])) {
      throw PoseError("pose file: non-finite pose at line " +
                      std::to_string(line_no));
    }
    double defect = frobenius_norm(transpose(p.R) * p.R - Mat3::identity());
    if (defect > 1e-3 || det(p.R) <= 0.0) {
      throw PoseError("pose file: rotation block is not a rotation at line " +
                      std::to_string(line_no));
    }
    if (defect > 1e-9) {
      p.R = orthonormalize_rotation(p.R);
      ++out.reorthonormalized;
    }
    out.trajectory.push(frame++, p);
  }
  return out;
}

PoseFile parse_pose_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open pose file '" + path + "'");
  return parse_pose_file(f);
}

void write_pose_file(std::ostream& os, const Trajectory& traj) {
  char buf[32];
  for (const PoseSE3& p : traj.poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        double v = c < 3 ? p.R.at(r, c) : p.t[r];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf << (r == 2 && c == 3 ? '\n' : ' ');
      }
    }
  }
}

void write_pose_file(const std::string& path, const Trajectory& traj) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_pose_file(f, traj);
}

namespace {

nlohmann::ordered_json pose_to_json(const PoseSE3& p) {
  std::vector<double> flat;
  flat.reserve(12);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) flat.push_back(p.R.at(r, c));
    flat.push_back(p.t[r]);
  }
  return flat;
}

PoseSE3 pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 12) {
    throw ParseError("chunk file: pose must be 12 numbers");
  }
  PoseSE3 p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.R.at(r, c) = j[4 * r + c].get<double>();
    p.t[r] = j[4 * r + 3].get<double>();
  }
  return p;
}

}  // namespace

void write_chunks_json(std::ostream& os,
                       std::span<const ChunkPrediction> chunks) {
  nlohmann::ordered_json root;
  root["chunks"] = nlohmann::ordered_json::array();
  for (const ChunkPrediction& c : chunks) {
    nlohmann::ordered_json jc;
    jc["chunk_index"] = c.chunk_index;
    jc["frame_ids"] = c.frame_ids;
    jc["poses"] = nlohmann::ordered_json::array();
    for (const PoseSE3& p : c.poses) jc["poses"].push_back(pose_to_json(p));
    jc["pointmaps"] = nlohmann::ordered_json::array();
    for (const Pointmap& pm : c.pointmaps) {
      nlohmann::ordered_json jm;
      jm["height"] = pm.height;
      jm["width"] = pm.width;
      std::vector<double> flat;
      flat.reserve(3 * pm.size());
      for (const Vec3& x : pm.points) {
        flat.push_back(x[0]);
        flat.push_back(x[1]);
        flat.push_back(x[2]);
      }
      jm["points"] = flat;
      jm["valid"] = pm.valid;
      jc["pointmaps"].push_back(std::move(jm));
    }
    root["chunks"].push_back(std::move(jc));
  }
  os << root.dump() << '\n';
}

void write_chunks_json(const std::string& path,
                       std::span<const ChunkPrediction> chunks) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_chunks_json(f, chunks);
}

std::vector<ChunkPrediction> read_chunks_json(std::istream& is) {
  nlohmann::json root = nlohmann::json::parse(is, nullptr, false);
  if (root.is_discarded() || !root.is_object() || !root.contains("chunks") ||
      !root["chunks"].is_array()) {
    throw ParseError("chunk file: expected an object with a 'chunks' array");
  }

  std::vector<ChunkPrediction> chunks;
  for (const nlohmann::json& jc : root["chunks"]) {
    std::string where = "chunk file: chunk " + std::to_string(chunks.size());
    if (!jc.is_object() || !jc.contains("chunk_index") ||
        !jc.contains("frame_ids") || !jc.contains("poses") ||
        !jc.contains("pointmaps")) {
      throw ParseError(where + " is missing fields");
    }
    ChunkPrediction c;
    try {
      c.chunk_index = jc["chunk_index"].get<std::size_t>();
      c.frame_ids = jc["frame_ids"].get<std::vector<std::int64_t>>();
      for (const nlohmann::json& jp : jc["poses"]) {
        c.poses.push_back(pose_from_json(jp));
      }
      for (const nlohmann::json& jm : jc["pointmaps"]) {
        if (!jm.is_object() || !jm.contains("height") ||
            !jm.contains("width") || !jm.contains("points") ||
            !jm.contains("valid")) {
          throw ParseError(where + " has a malformed pointmap");
        }
        Pointmap pm(jm["height"].get<std::size_t>(),
                    jm["width"].get<std::size_t>());
        std::vector<double> flat = jm["points"].get<std::vector<double>>();
        if (flat.size() != 3 * pm.size()) {
          throw ParseError(where + " pointmap has the wrong point count");
        }
        for (std::size_t i = 0; i < pm.size(); ++i) {
          pm.points[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
        }
        pm.valid = jm["valid"].get<std::vector<std::uint8_t>>();
        pm.check();
        c.pointmaps.push_back(std::move(pm));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    c.validate();
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<ChunkPrediction> read_chunks_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open chunk file '" + path + "'");
  return read_chunks_json(f);
}

std::string bench_kind_name(BenchKind kind) {
  switch (kind) {
    case BenchKind::hybrid: return "hybrid";
    case BenchKind::swa_only: return "swa_only";
    case BenchKind::ttt_only: return "ttt_only";
    case BenchKind::full_attention: return "full_attention";
  }
  throw ConfigError("bench: unknown configuration");
}

BenchKind bench_kind_from_name(const std::string& name) {
  if (name == "hybrid") return BenchKind::hybrid;
  if (name == "swa_only") return BenchKind::swa_only;
  if (name == "ttt_only") return BenchKind::ttt_only;
  if (name == "full_attention") return BenchKind::full_attention;
  throw ConfigError("bench: unknown configuration '" + name + "'");
}

StackConfig bench_config(BenchKind kind, const StackConfig& base) {
  StackConfig cfg = base;
  switch (kind) {
    case BenchKind::hybrid:
      break;
    case BenchKind::swa_only:
      cfg.ttt.learning_rate = 0.0;
      break;
    case BenchKind::ttt_only:
      cfg.swa_depths.clear();
      break;
    case BenchKind::full_attention:
      cfg.swa_depths.clear();
      cfg.ttt.learning_rate = 0.0;
      break;
  }
  return cfg;
}

StackConfig bench_default_config() {
  StackConfig cfg;
  // Per-token projection work grows with model_dim^2, pairwise attention
  // with tokens^2 * model_dim. Narrow channels and a denser patch grid tip
  // the balance toward attention, so full_attention's quadratic term
  // dominates already at 64 frames instead of far past 512.
  cfg.model_dim = 32;
  cfg.patch_rows = 4;
  cfg.patch_cols = 2;
  cfg.ttt.head_dim = 16;
  return cfg;
}

double fit_log_log_slope(std::span<const std::size_t> lengths,
                         std::span<const double> seconds) {
  if (lengths.size() != seconds.size() || lengths.size() < 2) {
    throw ConfigError("slope fit: need matching series of length >= 2");
  }
  double mx = 0.0, my = 0.0;
  std::size_t n = lengths.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (lengths[i] == 0 || !(seconds[i] > 0.0)) {
      throw ConfigError("slope fit: lengths and times must be positive");
    }
    mx += std::log(static_cast<double>(lengths[i]));
    my += std::log(seconds[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = std::log(static_cast<double>(lengths[i])) - mx;
    sxy += dx * (std::log(seconds[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

BenchReport bench_scaling(const std::vector<BenchKind>& kinds,
                          const std::vector<std::size_t>& lengths,
                          const StackConfig& base, std::size_t chunk_size,
                          std::size_t overlap, std::uint64_t seed) {
  if (kinds.empty()) throw ConfigError("bench: no configurations given");
  if (lengths.size() < 3) throw ConfigError("bench: need at least 3 lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] <= lengths[i - 1]) {
      throw ConfigError("bench: lengths must strictly increase");
    }
  }
  if (lengths.back() < 4 * lengths.front()) {
    throw ConfigError("bench: lengths must span at least a 4x range");
  }

  BenchReport report;
  report.lengths = lengths;
  report.chunk_size = chunk_size;
  report.overlap = overlap;

  std::vector<SyntheticScene> scenes;
  for (std::size_t len : lengths) {
    SceneOptions sopts;
    scenes.push_back(generate_scene(len, sopts, seed + len));
  }

  for (BenchKind kind : kinds) {
    StackConfig cfg = bench_config(kind, base);
    cfg.validate();
    RngState rng(seed);
    StackParams params = StackParams::init(cfg, rng);

    BenchConfigResult res;
    res.name = bench_kind_name(kind);
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      std::size_t len = lengths[li];
      PartitionPlan plan =
          kind == BenchKind::full_attention
              ? partition_chunks(len, len, std::min(overlap, len - 1))
              : partition_chunks(len, chunk_size, overlap);

      // Warm-up run discarded, then the median wall time of 3 timed runs.
      std::vector<double> times;
      StreamResult last;
      for (int run = 0; run < 4; ++run) {
        auto t0 = std::chrono::steady_clock::now();
        StreamResult r = run_stream(params, cfg, scenes[li], plan, {});
        auto t1 = std::chrono::steady_clock::now();
        if (run > 0) {
          times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        last = std::move(r);
      }
      std::sort(times.begin(), times.end());
      res.seconds.push_back(times[1]);

      std::size_t peak = 0;
      std::vector<double> series;
      for (const ChunkDiagnostics& d : last.per_chunk) {
        peak = std::max(peak, d.state_bytes);
        series.push_back(d.seconds);
      }
      res.state_bytes.push_back(peak);
      res.per_chunk_seconds.push_back(std::move(series));
    }
    res.slope = fit_log_log_slope(report.lengths, res.seconds);
    report.configs.push_back(std::move(res));
  }
  return report;
}

void write_bench_csv(std::ostream& os, const BenchReport& report) {
  os << "length,config,seconds,state_bytes\n";
  char buf[32];
  for (std::size_t li = 0; li < report.lengths.size(); ++li) {
    for (const BenchConfigResult& cfg : report.configs) {
      std::snprintf(buf, sizeof buf, "%.9g", cfg.seconds[li]);
      os << report.lengths[li] << ',' << cfg.name << ',' << buf << ','
         << cfg.state_bytes[li] << '\n';
    }
  }
}

namespace {

// One seed of the gated-MLP inner-loss check: analytic parameter gradients
// against central differences over every weight.
void gradcheck_swiglu_seed(std::uint64_t seed, double& max_err,
                           std::size_t& coords) {
  RngState rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  const std::size_t dim = 5, hidden = 10, n = 4;
  SwigluParams p;
  p.w_gate = random_matrix(rng, hidden, dim, 0.6);
  p.w_up = random_matrix(rng, hidden, dim, 0.6);
  p.w_down = random_matrix(rng, dim, hidden, 0.6);
  Tensor x = random_matrix(rng, n, dim, 1.0);
  Tensor target = random_matrix(rng, n, dim, 1.0);

  SwigluGradients g = swiglu_grad(p, x, target);
  std::vector<double> analytic;
  for (std::size_t i = 0; i < g.d_gate.size(); ++i) {
    analytic.push_back(g.d_gate[i]);
  }
  for (std::size_t i = 0; i < g.d_up.size(); ++i) analytic.push_back(g.d_up[i]);
  for (std::size_t i = 0; i < g.d_down.size(); ++i) {
    analytic.push_back(g.d_down[i]);
  }

  std::vector<double> theta;
  for (std::size_t i = 0; i < p.w_gate.size(); ++i) theta.push_back(p.w_gate[i]);
  for (std::size_t i = 0; i < p.w_up.size(); ++i) theta.push_back(p.w_up[i]);
  for (std::size_t i = 0; i < p.w_down.size(); ++i) theta.push_back(p.w_down[i]);

  auto objective = [&](const std::vector<double>& th) {
    SwigluParams q = p;
    std::size_t at = 0;
    for (std::size_t i = 0; i < q.w_gate.size(); ++i) q.w_gate[i] = th[at++];
    for (std::size_t i = 0; i < q.w_up.size(); ++i) q.w_up[i] = th[at++];
    for (std::size_t i = 0; i < q.w_down.size(); ++i) q.w_down[i] = th[at++];
    Tensor out = swiglu_forward(q, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      double d = out[i] - target[i];
      acc += d * d;
    }
    return acc / static_cast<double>(out.size());
  };

  std::vector<double> fd = finite_diff_grad(objective, theta, 1e-6);
  max_err = std::max(max_err, max_rel_error(analytic, fd));
  coords += analytic.size();
}

SupervisionBatch gradcheck_batch(RngState& rng) {
  SupervisionBatch b;
  for (std::size_t i = 0; i < 3; ++i) {
    Pointmap gt(2, 3);
    for (Vec3& p : gt.points) {
      p = Vec3{rng.normal(), rng.normal(), 1.0 + rng.uniform(0.0, 2.5)};
    }
    std::fill(gt.valid.begin(), gt.valid.end(), 1);
    Pointmap pred = gt;
    for (Vec3& p : pred.points) {
      p = p + Vec3{0.25 * rng.normal(), 0.25 * rng.normal(),
                   0.25 * rng.normal()};
    }
    b.gt.push_back(gt);
    b.pred.push_back(pred);

    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    PoseSE3 gp;
    gp.R = axis_angle(normalized(axis), rng.uniform(-2.5, 2.5));
    gp.t = Vec3{rng.normal(), rng.normal(), rng.normal()};
    PoseSE3 pp = gp;
    pp.t = pp.t + Vec3{0.25 * rng.normal(), 0.25 * rng.normal(),
                       0.25 * rng.normal()};
    b.gt_poses.push_back(gp);
    b.pred_poses.push_back(pp);
    if (i > 0) b.pairs.push_back({i - 1, i});
  }
  return b;
}

// One seed of the training-loss pointmap subgradient check. Coordinates
// whose L1 residual (local or any world-frame component) sits within 1e-3
// of a kink are skipped.
void gradcheck_loss_seed(std::uint64_t seed, double& max_err,
                         std::size_t& coords) {
  RngState rng(seed * 0x9e3779b97f4a7c15ULL + 2);
  SupervisionBatch b = gradcheck_batch(rng);
  LossWeights w;
  double s = solve_sequence_scale(b);
  std::vector<Tensor> grads = total_loss_pointmap_grad(b, w, s);

  auto objective = [&](const SupervisionBatch& batch) {
    return local_pointmap_loss(batch, s) + pose_loss(batch, s, w) +
           w.lambda_global * global_pointmap_loss(batch, s);
  };

  const double h = 1e-6;
  for (std::size_t i = 0; i < b.frames(); ++i) {
    for (std::size_t p = 0; p < b.gt[i].size(); ++p) {
      Vec3 pw = b.pred_poses[i].R * (s * b.pred[i].points[p]) +
                s * b.pred_poses[i].t;
      Vec3 gw = b.gt_poses[i].R * b.gt[i].points[p] + b.gt_poses[i].t;
      if (std::fabs(pw[0] - gw[0]) < 1e-3 || std::fabs(pw[1] - gw[1]) < 1e-3 ||
          std::fabs(pw[2] - gw[2]) < 1e-3) {
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        double local_res = s * b.pred[i].points[p][c] - b.gt[i].points[p][c];
        if (std::fabs(local_res) < 1e-3) continue;

        SupervisionBatch plus = b;
        plus.pred[i].points[p][c] += h;
        SupervisionBatch minus = b;
        minus.pred[i].points[p][c] -= h;
        double fd = (objective(plus) - objective(minus)) / (2.0 * h);
        double an = grads[i].at(p, c);
        double scale = std::max({1.0, std::fabs(fd), std::fabs(an)});
        max_err = std::max(max_err, std::fabs(fd - an) / scale);
        ++coords;
      }
    }
  }
}

// Fan the seed sweep out to a worker pool; max/sum reduction keeps the
// result independent of scheduling.
GradcheckEntry run_seed_sweep(const std::string& name, std::size_t n_seeds,
                              double tolerance,
                              void (*seed_fn)(std::uint64_t, double&,
                                              std::size_t&)) {
  std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(std::thread::hardware_concurrency(), n_seeds));
  std::vector<double> errs(n_seeds, 0.0);
  std::vector<std::size_t> counts(n_seeds, 0);

  std::vector<std::thread> pool;
  for (std::size_t wi = 0; wi < workers; ++wi) {
    pool.emplace_back([&, wi]() {
      for (std::size_t s = wi; s < n_seeds; s += workers) {
        seed_fn(s, errs[s], counts[s]);
      }
    });
  }
  for (std::thread& t : pool) t.join();

  GradcheckEntry entry;
  entry.name = name;
  entry.seeds = n_seeds;
  entry.tolerance = tolerance;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    entry.max_rel_error = std::max(entry.max_rel_error, errs[s]);
    entry.coords += counts[s];
  }
  entry.pass = entry.coords > 0 && entry.max_rel_error < tolerance;
  return entry;
}

}  // namespace

GradcheckReport gradcheck_suite(std::size_t n_seeds, double tolerance) {
  if (n_seeds < 1) throw ConfigError("gradcheck: need at least one seed");
  if (!(tolerance > 0.0)) throw ConfigError("gradcheck: tolerance must be > 0");

  GradcheckReport report;
  report.checks.push_back(run_seed_sweep("fast-weight inner-loss gradient",
                                         n_seeds, tolerance,
                                         gradcheck_swiglu_seed));
  report.checks.push_back(run_seed_sweep("training-loss pointmap subgradient",
                                         n_seeds, tolerance,
                                         gradcheck_loss_seed));
  report.pass = true;
  for (const GradcheckEntry& e : report.checks) report.pass &= e.pass;
  return report;
}

namespace {

bool type_matches(const nlohmann::json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") return value.is_number_integer();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  throw DataError("report schema: unknown type '" + type + "'");
}

}  // namespace

void schema_validate(const nlohmann::json& value, const nlohmann::json& schema,
                     const nlohmann::json& root, const std::string& path) {
  if (!schema.is_object()) {
    throw DataError("report schema: schema node at " + path +
                    " must be an object");
  }

  if (schema.contains("$ref")) {
    std::string ref = schema["$ref"].get<std::string>();
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0 || !root.contains("$defs") ||
        !root["$defs"].contains(ref.substr(prefix.size()))) {
      throw DataError("report schema: unresolved $ref '" + ref + "'");
    }
    schema_validate(value, root["$defs"][ref.substr(prefix.size())], root,
                    path);
    return;
  }

  if (schema.contains("type")) {
    const nlohmann::json& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(value, t.get<std::string>());
    } else {
      for (const nlohmann::json& one : t) {
        ok = ok || type_matches(value, one.get<std::string>());
      }
    }
    if (!ok) throw DataError("report schema: wrong type at " + path);
  }

  if (schema.contains("enum")) {
    bool ok = false;
    for (const nlohmann::json& cand : schema["enum"]) ok = ok || value == cand;
    if (!ok) {
      throw DataError("report schema: value at " + path +
                      " is not in the enum");
    }
  }

  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const nlohmann::json& key : schema["required"]) {
        if (!value.contains(key.get<std::string>())) {
          throw DataError("report schema: missing '" + key.get<std::string>() +
                          "' at " + path);
        }
      }
    }
    const nlohmann::json* props =
        schema.contains("properties") ? &schema["properties"] : nullptr;
    if (props != nullptr) {
      for (const auto& [key, sub] : props->items()) {
        if (value.contains(key)) {
          schema_validate(value[key], sub, root, path + "." + key);
        }
      }
    }
    if (schema.contains("additionalProperties") &&
        schema["additionalProperties"] == false) {
      for (const auto& [key, sub] : value.items()) {
        (void)sub;
        if (props == nullptr || !props->contains(key)) {
          throw DataError("report schema: unexpected key '" + key + "' at " +
                          path);
        }
      }
    }
  }

  if (value.is_array()) {
    if (schema.contains("minItems") &&
        value.size() < schema["minItems"].get<std::size_t>()) {
      throw DataError("report schema: too few items at " + path);
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        schema_validate(value[i], schema["items"], root,
                        path + "[" + std::to_string(i) + "]");
      }
    }
  }
}

void validate_report(const nlohmann::json& envelope,
                     const nlohmann::json& schema) {
  schema_validate(envelope, schema, schema, "$");
  std::string command = envelope["command"].get<std::string>();
  if (!schema.contains("$defs") || !schema["$defs"].contains(command)) {
    throw DataError("report schema: no $defs entry for command '" + command +
                    "'");
  }
  schema_validate(envelope["report"], schema["$defs"][command], schema,
                  "$.report");
}

}  // namespace geostream
