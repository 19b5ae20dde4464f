#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "geostream/errors.hpp"
#include "geostream/eval.hpp"
#include "geostream/stream.hpp"

namespace geostream {

namespace {

nlohmann::ordered_json pose12(const PoseSE3& p) {
  std::vector<double> flat;
  flat.reserve(12);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) flat.push_back(p.R.at(r, c));
    flat.push_back(p.t[r]);
  }
  return flat;
}

nlohmann::ordered_json transform_json(const SimilaritySim3& g) {
  nlohmann::ordered_json j;
  j["s"] = g.s;
  j["R"] = std::vector<double>(g.R.m.begin(), g.R.m.end());
  j["t"] = std::vector<double>{g.t[0], g.t[1], g.t[2]};
  return j;
}

void emit_report(const nlohmann::ordered_json& envelope,
                 const std::string& out_path) {
  if (out_path.empty()) return;
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot open '" + out_path + "' for writing");
  f << envelope.dump(2) << '\n';
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::uint64_t env_default_seed() {
  const char* ev = std::getenv("GEOSTREAM_SEED");
  if (ev == nullptr || *ev == '\0') return 0;
  char* end = nullptr;
  unsigned long long v = std::strtoull(ev, &end, 10);
  if (end == ev || *end != '\0') {
    throw ConfigError("GEOSTREAM_SEED must be a non-negative integer");
  }
  return v;
}

MotionModel motion_from_name(const std::string& name) {
  if (name == "straight") return MotionModel::straight;
  if (name == "turn") return MotionModel::turn;
  if (name == "loop") return MotionModel::loop;
  if (name == "mixed") return MotionModel::mixed;
  throw ConfigError("stream: unknown motion model '" + name + "'");
}

StackConfig load_stack_config(const std::string& path) {
  if (path.empty()) return StackConfig{};
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return StackConfig::from_json_text(ss.str());
}

struct StreamArgs {
  std::size_t frames = 128;
  std::size_t chunk_size = 16;
  std::size_t overlap = 2;
  std::int64_t reset_period = 5;
  std::string align = "rigid";
  std::string motion = "turn";
  std::string config_path;
  std::string traj_path;
  std::string dump_poses;
  std::string out;
  std::uint64_t seed = 0;
};

int run_stream_cmd(const StreamArgs& a) {
  StackConfig cfg = load_stack_config(a.config_path);
  RngState rng(a.seed);
  StackParams params = StackParams::init(cfg, rng);

  SceneOptions sopts;
  sopts.motion = motion_from_name(a.motion);
  SyntheticScene scene =
      a.traj_path.empty()
          ? generate_scene(a.frames, sopts, a.seed)
          : scene_from_trajectory(parse_pose_file(a.traj_path).trajectory,
                                  sopts, a.seed);
  PartitionPlan plan =
      partition_chunks(scene.frames(), a.chunk_size, a.overlap);

  StreamOptions opts;
  opts.reset_period = a.reset_period;
  if (a.align == "rigid") {
    opts.align_mode = StitchMode::rigid;
  } else if (a.align == "sim3") {
    opts.align_mode = StitchMode::similarity;
  } else if (a.align == "none") {
    opts.stitch = false;
  } else {
    throw ConfigError("stream: unknown alignment '" + a.align + "'");
  }

  StreamResult res = run_stream(params, cfg, scene, plan, opts);

  nlohmann::ordered_json report;
  report["frames"] = scene.frames();
  report["chunks"] = plan.n_chunks();
  report["chunk_size"] = a.chunk_size;
  report["overlap"] = a.overlap;
  report["reset_period"] = a.reset_period;
  report["align"] = a.align;
  if (a.traj_path.empty()) {
    report["motion"] = a.motion;
  } else {
    report["trajectory_file"] = a.traj_path;
  }
  if (opts.stitch && res.poses.size() >= 3) {
    Trajectory est;
    for (std::size_t i = 0; i < res.poses.size(); ++i) {
      est.push(res.frame_ids[i], res.poses[i]);
    }
    report["ate_vs_truth"] =
        compute_ate(est, scene.trajectory, AteAlignment::sim3).rmse;
  } else {
    report["ate_vs_truth"] = nullptr;
  }
  report["frame_ids"] = res.frame_ids;
  report["poses"] = nlohmann::ordered_json::array();
  for (const PoseSE3& p : res.poses) report["poses"].push_back(pose12(p));
  report["chunk_scales"] = res.chunk_scales;
  report["per_chunk"] = nlohmann::ordered_json::array();
  for (const ChunkDiagnostics& d : res.per_chunk) {
    nlohmann::ordered_json jd;
    jd["chunk"] = d.chunk_index;
    jd["frames"] = d.frames;
    jd["seconds"] = d.seconds;
    jd["state_bytes"] = d.state_bytes;
    jd["reset"] = d.reset_applied;
    report["per_chunk"].push_back(std::move(jd));
  }

  if (!a.dump_poses.empty()) {
    std::ofstream f(a.dump_poses);
    if (!f) throw IoError("cannot open '" + a.dump_poses + "' for writing");
    write_pose_jsonl(f, res.frame_ids, res.poses);
  }

  nlohmann::ordered_json envelope;
  envelope["command"] = "stream";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  std::cout << "streamed " << scene.frames() << " frames in " << plan.n_chunks()
            << " chunks (" << a.align << " alignment)";
  if (envelope["report"]["ate_vs_truth"].is_number()) {
    std::cout << ", ATE vs truth "
              << fmt(envelope["report"]["ate_vs_truth"].get<double>());
  }
  std::cout << "\n";
  return 0;
}

struct AteArgs {
  std::string pred;
  std::string gt;
  std::string alignment = "sim3";
  std::string out;
  std::uint64_t seed = 0;
};

int run_ate_cmd(const AteArgs& a) {
  PoseFile pred = parse_pose_file(a.pred);
  PoseFile gt = parse_pose_file(a.gt);
  AteReport r =
      compute_ate(pred.trajectory, gt.trajectory,
                  ate_alignment_from_name(a.alignment));

  nlohmann::ordered_json report;
  report["alignment"] = a.alignment;
  report["n_frames"] = r.n_frames;
  report["rmse"] = r.rmse;
  report["per_frame"] = r.per_frame;
  report["transform"] = transform_json(r.transform);
  report["reorthonormalized_pred"] = pred.reorthonormalized;
  report["reorthonormalized_gt"] = gt.reorthonormalized;

  nlohmann::ordered_json envelope;
  envelope["command"] = "ate";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  std::cout << "ATE RMSE over " << r.n_frames << " frames: " << fmt(r.rmse)
            << " (" << a.alignment << " alignment)";
  if (pred.reorthonormalized + gt.reorthonormalized > 0) {
    std::cout << "; reorthonormalized "
              << pred.reorthonormalized + gt.reorthonormalized << " poses";
  }
  std::cout << "\n";
  return 0;
}

struct StitchArgs {
  std::string chunks;
  std::string mode = "rigid";
  std::string out;
  std::uint64_t seed = 0;
};

int run_stitch_cmd(const StitchArgs& a) {
  std::vector<ChunkPrediction> chunks = read_chunks_json(a.chunks);
  StitchOptions opts;
  if (a.mode == "rigid") {
    opts.mode = StitchMode::rigid;
  } else if (a.mode == "sim3") {
    opts.mode = StitchMode::similarity;
  } else {
    throw ConfigError("stitch: unknown mode '" + a.mode + "'");
  }
  AlignedStream out = stitch_stream(chunks, opts);

  nlohmann::ordered_json report;
  report["mode"] = a.mode;
  report["n_chunks"] = chunks.size();
  report["frames"] = out.poses.size();
  report["frame_ids"] = out.frame_ids;
  report["poses"] = nlohmann::ordered_json::array();
  for (const PoseSE3& p : out.poses) report["poses"].push_back(pose12(p));
  report["chunk_scales"] = out.chunk_scales;

  nlohmann::ordered_json envelope;
  envelope["command"] = "stitch";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  std::cout << "stitched " << chunks.size() << " chunks into "
            << out.poses.size() << " frames (" << a.mode << " mode)\n";
  return 0;
}

struct BenchArgs {
  std::vector<std::size_t> lengths{64, 128, 256, 512};
  std::vector<std::string> configs{"hybrid", "swa_only", "ttt_only",
                                   "full_attention"};
  std::size_t chunk_size = 16;
  std::size_t overlap = 2;
  std::string csv;
  std::string out;
  std::uint64_t seed = 0;
};

int run_bench_cmd(const BenchArgs& a) {
  std::vector<BenchKind> kinds;
  for (const std::string& name : a.configs) {
    kinds.push_back(bench_kind_from_name(name));
  }
  BenchReport r = bench_scaling(kinds, a.lengths, bench_default_config(),
                                a.chunk_size, a.overlap, a.seed);

  nlohmann::ordered_json report;
  report["lengths"] = r.lengths;
  report["chunk_size"] = r.chunk_size;
  report["overlap"] = r.overlap;
  report["configs"] = nlohmann::ordered_json::array();
  for (const BenchConfigResult& c : r.configs) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["seconds"] = c.seconds;
    jc["state_bytes"] = c.state_bytes;
    jc["per_chunk_seconds"] = c.per_chunk_seconds;
    jc["slope"] = c.slope;
    report["configs"].push_back(std::move(jc));
  }

  nlohmann::ordered_json envelope;
  envelope["command"] = "bench";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    if (!f) throw IoError("cannot open '" + a.csv + "' for writing");
    write_bench_csv(f, r);
  }

  for (const BenchConfigResult& c : r.configs) {
    std::cout << c.name << ": log-log slope " << fmt(c.slope)
              << ", peak state bytes " << c.state_bytes.back() << " at "
              << r.lengths.back() << " frames\n";
  }
  return 0;
}

struct GradcheckArgs {
  std::size_t seeds = 20;
  double tolerance = 1e-5;
  std::string out;
  std::uint64_t seed = 0;
};

int run_gradcheck_cmd(const GradcheckArgs& a) {
  GradcheckReport r = gradcheck_suite(a.seeds, a.tolerance);

  nlohmann::ordered_json report;
  report["n_seeds"] = a.seeds;
  report["tolerance"] = a.tolerance;
  report["pass"] = r.pass;
  report["checks"] = nlohmann::ordered_json::array();
  for (const GradcheckEntry& e : r.checks) {
    nlohmann::ordered_json je;
    je["name"] = e.name;
    je["seeds"] = e.seeds;
    je["coords"] = e.coords;
    je["max_rel_error"] = e.max_rel_error;
    je["tolerance"] = e.tolerance;
    je["pass"] = e.pass;
    report["checks"].push_back(std::move(je));
  }

  nlohmann::ordered_json envelope;
  envelope["command"] = "gradcheck";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  for (const GradcheckEntry& e : r.checks) {
    std::cout << e.name << ": max rel error " << fmt(e.max_rel_error)
              << " over " << e.coords << " coordinates (tol "
              << fmt(e.tolerance) << ") " << (e.pass ? "PASS" : "FAIL")
              << "\n";
  }
  return r.pass ? 0 : 2;
}

struct RecallArgs {
  std::size_t pairs = 8;
  std::size_t dims = 16;
  double learning_rate = 0.2;
  std::size_t pairs_per_chunk = 8;
  std::string out;
  std::uint64_t seed = 0;
};

int run_recall_cmd(const RecallArgs& a) {
  RecallResult r =
      recall_task(a.pairs, a.dims, a.seed, a.learning_rate, a.pairs_per_chunk);

  nlohmann::ordered_json report;
  report["n_pairs"] = r.report.n_pairs;
  report["dims"] = r.report.dims;
  report["learning_rate"] = a.learning_rate;
  report["pairs_per_chunk"] = a.pairs_per_chunk;
  report["before"] = r.report.before;
  report["after"] = r.report.after;

  nlohmann::ordered_json envelope;
  envelope["command"] = "recall";
  envelope["seed"] = a.seed;
  envelope["report"] = std::move(report);
  emit_report(envelope, a.out);

  std::cout << "recall over " << a.pairs << " pairs in " << a.dims
            << " dims: error " << fmt(r.report.before) << " -> "
            << fmt(r.report.after) << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  try {
    std::uint64_t default_seed = env_default_seed();

    CLI::App app{"streaming geometric reconstruction toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    StreamArgs stream_args;
    stream_args.seed = default_seed;
    CLI::App* stream_cmd =
        app.add_subcommand("stream", "run a synthetic or file-fed stream");
    stream_cmd->add_option("--frames", stream_args.frames,
                           "synthetic stream length");
    stream_cmd->add_option("--chunk-size", stream_args.chunk_size,
                           "frames per chunk");
    stream_cmd->add_option("--overlap", stream_args.overlap,
                           "frames shared by consecutive chunks");
    stream_cmd->add_option("--reset-period", stream_args.reset_period,
                           "fast-weight reset period in chunks, 0 disables");
    stream_cmd->add_option("--align", stream_args.align,
                           "stitching mode: rigid, sim3, or none");
    stream_cmd->add_option("--motion", stream_args.motion,
                           "synthetic motion: straight, turn, loop, mixed");
    stream_cmd->add_option("--config", stream_args.config_path,
                           "JSON model config file");
    stream_cmd->add_option("--traj", stream_args.traj_path,
                           "drive the scene from a pose file");
    stream_cmd->add_option("--dump-poses", stream_args.dump_poses,
                           "write the stitched trajectory as JSON lines");
    stream_cmd->add_option("--out", stream_args.out, "JSON report path");
    stream_cmd->add_option("--seed", stream_args.seed, "random seed");
    stream_cmd->callback([&]() { exit_code = run_stream_cmd(stream_args); });

    AteArgs ate_args;
    ate_args.seed = default_seed;
    CLI::App* ate_cmd =
        app.add_subcommand("ate", "absolute trajectory error between pose files");
    ate_cmd->add_option("--pred", ate_args.pred, "predicted pose file")
        ->required();
    ate_cmd->add_option("--gt", ate_args.gt, "ground-truth pose file")
        ->required();
    ate_cmd->add_option("--alignment", ate_args.alignment,
                        "alignment: sim3, se3, or none");
    ate_cmd->add_option("--out", ate_args.out, "JSON report path");
    ate_cmd->add_option("--seed", ate_args.seed, "random seed");
    ate_cmd->callback([&]() { exit_code = run_ate_cmd(ate_args); });

    StitchArgs stitch_args;
    stitch_args.seed = default_seed;
    CLI::App* stitch_cmd =
        app.add_subcommand("stitch", "align chunk predictions from a file");
    stitch_cmd->add_option("--chunks", stitch_args.chunks,
                           "chunk prediction JSON file")
        ->required();
    stitch_cmd->add_option("--mode", stitch_args.mode, "rigid or sim3");
    stitch_cmd->add_option("--out", stitch_args.out, "JSON report path");
    stitch_cmd->add_option("--seed", stitch_args.seed, "random seed");
    stitch_cmd->callback([&]() { exit_code = run_stitch_cmd(stitch_args); });

    BenchArgs bench_args;
    bench_args.seed = default_seed;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "sequence-length scaling benchmark");
    bench_cmd->add_option("--lengths", bench_args.lengths,
                          "comma-separated frame counts")
        ->delimiter(',');
    bench_cmd->add_option("--configs", bench_args.configs,
                          "comma-separated configuration names")
        ->delimiter(',');
    bench_cmd->add_option("--chunk-size", bench_args.chunk_size,
                          "frames per chunk for the chunked configs");
    bench_cmd->add_option("--overlap", bench_args.overlap,
                          "frames shared by consecutive chunks");
    bench_cmd->add_option("--csv", bench_args.csv, "plot-ready CSV path");
    bench_cmd->add_option("--out", bench_args.out, "JSON report path");
    bench_cmd->add_option("--seed", bench_args.seed, "random seed");
    bench_cmd->callback([&]() { exit_code = run_bench_cmd(bench_args); });

    GradcheckArgs grad_args;
    grad_args.seed = default_seed;
    CLI::App* grad_cmd = app.add_subcommand(
        "gradcheck", "finite-difference verification of analytic gradients");
    grad_cmd->add_option("--seeds", grad_args.seeds, "random seeds per check");
    grad_cmd->add_option("--tol", grad_args.tolerance,
                         "relative error tolerance");
    grad_cmd->add_option("--out", grad_args.out, "JSON report path");
    grad_cmd->add_option("--seed", grad_args.seed, "random seed");
    grad_cmd->callback([&]() { exit_code = run_gradcheck_cmd(grad_args); });

    RecallArgs recall_args;
    recall_args.seed = default_seed;
    CLI::App* recall_cmd =
        app.add_subcommand("recall", "key-value recall through the fast weights");
    recall_cmd->add_option("--pairs", recall_args.pairs, "key-value pairs");
    recall_cmd->add_option("--dims", recall_args.dims, "key and value width");
    recall_cmd->add_option("--lr", recall_args.learning_rate,
                           "fast-weight learning rate");
    recall_cmd->add_option("--pairs-per-chunk", recall_args.pairs_per_chunk,
                           "pairs folded into each update");
    recall_cmd->add_option("--out", recall_args.out, "JSON report path");
    recall_cmd->add_option("--seed", recall_args.seed, "random seed");
    recall_cmd->callback([&]() { exit_code = run_recall_cmd(recall_args); });

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      int code = app.exit(e);
      return code == 0 ? 0 : 1;
    }
    return exit_code;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace geostream
