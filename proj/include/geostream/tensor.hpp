#pragma once

#include <cstddef>
#include <vector>

#include "geostream/rng.hpp"

namespace geostream {

// Dense row-major tensor of doubles. Rank is dynamic but almost everything
// in this library is rank 2; rows()/cols() enforce that where it matters.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // 1 x n row vector.
  static Tensor row(std::vector<double> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors; throw ShapeError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// a [m x k] times b [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a [m x k] times b^T where b is [n x k]. Used for x . W^T projections.
Tensor matmul_abt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, double s);
Tensor scaled(const Tensor& a, double s);

double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Rows [row_begin, row_end) as a new tensor.
Tensor slice_rows(const Tensor& a, std::size_t row_begin, std::size_t row_end);
// Columns [col_begin, col_end) as a new tensor.
Tensor slice_cols(const Tensor& a, std::size_t col_begin, std::size_t col_end);
// Stack a on top of b (same column count).
Tensor vstack(const Tensor& a, const Tensor& b);
// Place b into a starting at column col_begin (row counts must match).
void paste_cols(Tensor& a, std::size_t col_begin, const Tensor& b);

void fill_normal(RngState& rng, Tensor& t, double stddev);
Tensor random_matrix(RngState& rng, std::size_t rows, std::size_t cols,
                     double stddev);

// Per-query-key admission matrix for attention. Stored densely; these masks
// are small (a handful of frames times a handful of tokens).
class AttentionMask {
 public:
  AttentionMask(std::size_t n_query, std::size_t n_key, bool allowed = false);

  static AttentionMask all_allowed(std::size_t n_query, std::size_t n_key);
  // Square mask where query i may see key j iff they fall in the same block.
  static AttentionMask block_diagonal(const std::vector<std::size_t>& sizes);

  std::size_t n_query() const { return n_query_; }
  std::size_t n_key() const { return n_key_; }

  bool allowed(std::size_t q, std::size_t k) const {
    return allowed_[q * n_key_ + k] != 0;
  }
  void set(std::size_t q, std::size_t k, bool allowed) {
    allowed_[q * n_key_ + k] = allowed ? 1 : 0;
  }

  // Every query must be allowed at least one key or softmax has no support.
  bool every_query_has_key() const;

 private:
  std::size_t n_query_ = 0;
  std::size_t n_key_ = 0;
  std::vector<std::uint8_t> allowed_;
};

}  // namespace geostream
