#include "geostream/tensor.hpp"

#include <cmath>
#include <utility>

#include "geostream/errors.hpp"

namespace geostream {

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t extent : shape_) {
    if (extent == 0) throw ShapeError("tensor extent must be positive");
    n *= extent;
  }
  if (shape_.empty()) n = 0;
  data_.assign(n, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t({1, values.size()});
  t.data_ = std::move(values);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires a rank-2 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires a rank-2 tensor");
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  if (rank() != 2) throw ShapeError("at(r,c) requires a rank-2 tensor");
  if (r >= shape_[0] || c >= shape_[1]) throw ShapeError("index out of range");
  return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return const_cast<Tensor*>(this)->at(r, c);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dims differ");
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return out;
}

Tensor matmul_abt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_abt: inner dims differ");
  Tensor out = Tensor::matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        acc += a.at(i, k) * b.at(j, k);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out.at(j, i) = a.at(i, j);
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& a, double s) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= s;
}

Tensor scaled(const Tensor& a, double s) {
  Tensor out = a;
  scale_inplace(out, s);
  return out;
}

double frobenius_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = std::fabs(a[i] - b[i]);
    if (d > worst) worst = d;
  }
  return worst;
}

Tensor slice_rows(const Tensor& a, std::size_t row_begin, std::size_t row_end) {
  if (row_begin > row_end || row_end > a.rows()) {
    throw ShapeError("slice_rows: bad range");
  }
  Tensor out = Tensor::matrix(row_end - row_begin, a.cols());
  for (std::size_t i = row_begin; i < row_end; ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out.at(i - row_begin, j) = a.at(i, j);
    }
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t col_begin, std::size_t col_end) {
  if (col_begin > col_end || col_end > a.cols()) {
    throw ShapeError("slice_cols: bad range");
  }
  Tensor out = Tensor::matrix(a.rows(), col_end - col_begin);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = col_begin; j < col_end; ++j) {
      out.at(i, j - col_begin) = a.at(i, j);
    }
  }
  return out;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("vstack: column mismatch");
  Tensor out = Tensor::matrix(a.rows() + b.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
  }
  for (std::size_t i = 0; i < b.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      out.at(a.rows() + i, j) = b.at(i, j);
    }
  }
  return out;
}

void paste_cols(Tensor& a, std::size_t col_begin, const Tensor& b) {
  if (a.rows() != b.rows() || col_begin + b.cols() > a.cols()) {
    throw ShapeError("paste_cols: shape mismatch");
  }
  for (std::size_t i = 0; i < b.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      a.at(i, col_begin + j) = b.at(i, j);
    }
  }
}

void fill_normal(RngState& rng, Tensor& t, double stddev) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
}

Tensor random_matrix(RngState& rng, std::size_t rows, std::size_t cols,
                     double stddev) {
  Tensor t = Tensor::matrix(rows, cols);
  fill_normal(rng, t, stddev);
  return t;
}

AttentionMask::AttentionMask(std::size_t n_query, std::size_t n_key,
                             bool allowed)
    : n_query_(n_query),
      n_key_(n_key),
      allowed_(n_query * n_key, allowed ? 1 : 0) {
  if (n_query == 0 || n_key == 0) {
    throw ShapeError("attention mask must be non-empty");
  }
}

AttentionMask AttentionMask::all_allowed(std::size_t n_query,
                                         std::size_t n_key) {
  return AttentionMask(n_query, n_key, true);
}

AttentionMask AttentionMask::block_diagonal(
    const std::vector<std::size_t>& sizes) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  AttentionMask mask(total, total, false);
  std::size_t offset = 0;
  for (std::size_t s : sizes) {
    for (std::size_t q = offset; q < offset + s; ++q) {
      for (std::size_t k = offset; k < offset + s; ++k) {
        mask.set(q, k, true);
      }
    }
    offset += s;
  }
  return mask;
}

bool AttentionMask::every_query_has_key() const {
  for (std::size_t q = 0; q < n_query_; ++q) {
    bool any = false;
    for (std::size_t k = 0; k < n_key_; ++k) {
      if (allowed(q, k)) {
        any = true;
        break;
      }
    }
    if (!any) return false;
  }
  return true;
}

}  // namespace geostream
