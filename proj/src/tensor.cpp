#include "mose/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mose/error.hpp"

namespace mose {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Matrix::resize(std::size_t rows, std::size_t cols) {
  rows_ = rows;
  cols_ = cols;
  data_.assign(rows * cols, 0.0);
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  require(values.size() == cols_, Errc::shape_mismatch, "append_row: width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix gather_rows(const Matrix& src, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), src.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto from = src.row(indices[k]);
    std::copy(from.begin(), from.end(), out.row(k).begin());
  }
  return out;
}

void scatter_add_rows(Matrix& dst, const Matrix& src, std::span<const std::size_t> indices) {
  require(src.rows() == indices.size() && src.cols() == dst.cols(), Errc::shape_mismatch,
          "scatter_add_rows: shape mismatch");
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto to = dst.row(indices[k]);
    auto from = src.row(k);
    for (std::size_t c = 0; c < to.size(); ++c) to[c] += from[c];
  }
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  require(top.cols() == bottom.cols(), Errc::shape_mismatch, "vstack: width mismatch");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(), out.values().begin() + top.size());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::protocol_violation: return "protocol-violation";
    case Errc::state_error: return "state-error";
    case Errc::label_outside_subset: return "label-outside-subset";
    case Errc::batch_too_small: return "batch-too-small";
    case Errc::empty_buffer: return "empty-buffer";
    case Errc::no_means: return "no-means";
    case Errc::invalid_mode: return "invalid-mode";
    case Errc::incomplete_matrix: return "incomplete-matrix";
    case Errc::undefined_at_zero: return "undefined-at-zero-test-accuracy";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::config_parse: return "config-parse";
    case Errc::validation: return "validation";
  }
  return "unknown";
}

}  // namespace mose
