#pragma once

#include <stdexcept>
#include <string>

namespace geostream {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed dimensions or incompatible operands.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad configuration values (non-positive sizes, overlap >= chunk size, ...).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf or other numerical breakdown detected mid-computation.
struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// A query row whose mask admits no key at all.
struct MaskedOutError : Error {
  explicit MaskedOutError(const std::string& msg) : Error(msg) {}
};

// A pose failed validation (non-rotation R, non-finite entries).
struct PoseError : Error {
  explicit PoseError(const std::string& msg) : Error(msg) {}
};

// Inputs that are structurally valid but semantically unusable
// (non-positive depth on a valid pixel, empty correspondence set, ...).
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Degenerate estimation problem (zero spread in Umeyama, scale <= 0, ...).
struct DegenerateError : Error {
  explicit DegenerateError(const std::string& msg) : Error(msg) {}
};

// Chunk streams that violate the stitching contract (missing overlap,
// non-contiguous chunk indices, frame id mismatch).
struct StitchError : Error {
  explicit StitchError(const std::string& msg) : Error(msg) {}
};

// Trajectory pairs that cannot be compared (frame id mismatch).
struct AlignmentError : Error {
  explicit AlignmentError(const std::string& msg) : Error(msg) {}
};

// Stale or inconsistent sliding-window KV cache.
struct CacheError : Error {
  explicit CacheError(const std::string& msg) : Error(msg) {}
};

// Unparseable external input (pose files, JSON, CLI payloads).
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// I/O failure distinct from parse failure.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace geostream
