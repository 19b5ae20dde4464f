#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geostream/alignment.hpp"
#include "geostream/block.hpp"
#include "geostream/geometry.hpp"

namespace geostream {

enum class AteAlignment : std::uint8_t { sim3, se3, none };

std::string ate_alignment_name(AteAlignment a);
AteAlignment ate_alignment_from_name(const std::string& name);  // ConfigError

struct AteReport {
  AteAlignment alignment = AteAlignment::sim3;
  std::size_t n_frames = 0;
  double rmse = 0.0;
  std::vector<double> per_frame;  // center distance per frame, post-alignment
  SimilaritySim3 transform;       // map applied to the predicted centers
};

// Translation RMSE between camera centers after aligning pred onto gt:
// Umeyama with scale (sim3), without (se3), or the identity map (none).
// Frame ids must match exactly; fewer than 3 frames or degenerate centers
// raise DegenerateError, id mismatches AlignmentError.
AteReport compute_ate(const Trajectory& pred, const Trajectory& gt,
                      AteAlignment alignment = AteAlignment::sim3);

// Plain-text pose files, one frame per line: the 12 entries of the 3x4
// [R|t] matrix, row-major, 17 significant digits on write. Lines carry no
// frame ids; frames are numbered 0..n-1 in file order. A rotation block
// off orthonormal by more than 1e-3 (Frobenius) is an error; defects
// between 1e-9 and 1e-3 are projected back to the nearest rotation and
// counted, anything below is kept bit for bit so round-trips stay exact.
struct PoseFile {
  Trajectory trajectory;
  std::size_t reorthonormalized = 0;
};

PoseFile parse_pose_file(std::istream& is);
PoseFile parse_pose_file(const std::string& path);  // IoError if unreadable
void write_pose_file(std::ostream& os, const Trajectory& traj);
void write_pose_file(const std::string& path, const Trajectory& traj);

// Chunk prediction files: a JSON object {"chunks": [...]} with poses as 12
// row-major [R|t] floats and pointmaps as flat xyz triples plus a validity
// mask. Round-trips bitwise through nlohmann's shortest-digit doubles.
void write_chunks_json(std::ostream& os, std::span<const ChunkPrediction> chunks);
void write_chunks_json(const std::string& path,
                       std::span<const ChunkPrediction> chunks);
std::vector<ChunkPrediction> read_chunks_json(std::istream& is);  // ParseError
std::vector<ChunkPrediction> read_chunks_json(const std::string& path);

// Scaling benchmark over the four memory configurations. hybrid keeps the
// base config; swa_only freezes the fast weights (learning rate 0);
// ttt_only drops the sliding-window layers; full_attention does both and
// processes the whole sequence as one chunk.
enum class BenchKind : std::uint8_t { hybrid, swa_only, ttt_only, full_attention };

std::string bench_kind_name(BenchKind kind);
BenchKind bench_kind_from_name(const std::string& name);  // ConfigError
StackConfig bench_config(BenchKind kind, const StackConfig& base);

// Benchmark profile: a deliberately attention-heavy desk-scale stack (more
// tokens per frame, narrower channels) so the asymptotic cost regimes are
// visible inside the measured length window rather than past it.
StackConfig bench_default_config();

struct BenchConfigResult {
  std::string name;
  std::vector<double> seconds;           // per length, median of 3 timed runs
  std::vector<std::size_t> state_bytes;  // per length, peak over chunks
  std::vector<std::vector<double>> per_chunk_seconds;  // per length
  double slope = 0.0;  // OLS slope of log seconds vs log length
};

struct BenchReport {
  std::vector<std::size_t> lengths;
  std::size_t chunk_size = 0;
  std::size_t overlap = 0;
  std::vector<BenchConfigResult> configs;
};

// Requires >= 3 strictly increasing lengths spanning at least a 4x range.
// Each (config, length) cell streams a synthetic scene 4 times: one warm-up
// run discarded, wall time the median of the remaining 3. Timed regions
// are single-threaded.
BenchReport bench_scaling(const std::vector<BenchKind>& kinds,
                          const std::vector<std::size_t>& lengths,
                          const StackConfig& base, std::size_t chunk_size,
                          std::size_t overlap, std::uint64_t seed);

// header: length,config,seconds,state_bytes
void write_bench_csv(std::ostream& os, const BenchReport& report);

double fit_log_log_slope(std::span<const std::size_t> lengths,
                         std::span<const double> seconds);

// Finite-difference verification of every analytic gradient in the library:
// the gated-MLP fast-weight inner loss and the training-loss pointmap
// subgradients (coordinates near an L1 kink are skipped). Seeds fan out to
// a small worker pool; results are reduced by max, so the report is
// deterministic.
struct GradcheckEntry {
  std::string name;
  std::size_t seeds = 0;
  std::size_t coords = 0;  // coordinates compared across all seeds
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> checks;
  bool pass = false;
};

GradcheckReport gradcheck_suite(std::size_t n_seeds = 20,
                                double tolerance = 1e-5);

// Validates a value against the subset of JSON Schema the report schema
// uses: type, enum, required, properties, additionalProperties, items,
// minItems, and $ref into #/$defs. Throws DataError naming the offending
// path. validate_report additionally checks the envelope and dispatches
// the "report" member against $defs[command].
void schema_validate(const nlohmann::json& value, const nlohmann::json& schema,
                     const nlohmann::json& root, const std::string& path);
void validate_report(const nlohmann::json& envelope,
                     const nlohmann::json& schema);

// Command-line entry point. Subcommands: stream, ate, stitch, bench,
// gradcheck, recall. JSON report to --out, human summary to stdout.
// GEOSTREAM_SEED supplies the default --seed. Exit 0 success, 1 validation
// or usage error, 2 numerical failure.
int cli_main(int argc, const char* const* argv);

}  // namespace geostream
