#include "mose/kernels.hpp"

#include <atomic>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mose/error.hpp"

namespace mose::kernels {
namespace {

std::atomic<Backend> g_backend{Backend::parallel};

void check_forward(const Matrix& in, const Matrix& weight, const Matrix& bias) {
  require(in.cols() == weight.cols(), Errc::shape_mismatch, "linear: input width does not match weight");
  require(bias.rows() == 1 && bias.cols() == weight.rows(), Errc::shape_mismatch, "linear: bias shape");
}

void check_params(const Matrix& grad_out, const Matrix& in, const Matrix& gw, const Matrix& gb) {
  require(grad_out.rows() == in.rows(), Errc::shape_mismatch, "linear backward: batch mismatch");
  require(gw.rows() == grad_out.cols() && gw.cols() == in.cols(), Errc::shape_mismatch,
          "linear backward: weight grad shape");
  require(gb.rows() == 1 && gb.cols() == grad_out.cols(), Errc::shape_mismatch, "linear backward: bias grad shape");
}

}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out) {
  check_forward(in, weight, bias);
  const std::size_t n = in.rows(), k = in.cols(), m = weight.rows();
  if (out.rows() != n || out.cols() != m) out.resize(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < m; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += in(r, i) * weight(o, i);
      out(r, o) = s + bias(0, o);
    }
  }
}

void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias) {
  check_params(grad_out, in, grad_weight, grad_bias);
  const std::size_t n = in.rows(), k = in.cols(), m = grad_out.cols();
  for (std::size_t o = 0; o < m; ++o) {
    double sb = 0.0;
    for (std::size_t r = 0; r < n; ++r) sb += grad_out(r, o);
    grad_bias(0, o) += sb;
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += grad_out(r, o) * in(r, i);
      grad_weight(o, i) += s;
    }
  }
}

void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  require(grad_out.cols() == weight.rows(), Errc::shape_mismatch, "linear backward: grad width");
  const std::size_t n = grad_out.rows(), k = weight.cols(), m = weight.rows();
  if (grad_in.rows() != n || grad_in.cols() != k) grad_in.resize(n, k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < m; ++o) s += grad_out(r, o) * weight(o, i);
      grad_in(r, i) = s;
    }
  }
}

}  // namespace serial

namespace parallel {

void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out) {
  check_forward(in, weight, bias);
  const auto n = static_cast<std::int64_t>(in.rows());
  const std::size_t k = in.cols(), m = weight.rows();
  if (out.rows() != in.rows() || out.cols() != m) out.resize(in.rows(), m);
  const double* x = in.data();
  const double* w = weight.data();
  const double* b = bias.data();
  double* y = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const double* xr = x + r * k;
    double* yr = y + r * m;
    for (std::size_t o = 0; o < m; ++o) {
      const double* wo = w + o * k;
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += xr[i] * wo[i];
      yr[o] = s + b[o];
    }
  }
}

void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias) {
  check_params(grad_out, in, grad_weight, grad_bias);
  const std::size_t n = in.rows(), k = in.cols();
  const auto m = static_cast<std::int64_t>(grad_out.cols());
  const double* g = grad_out.data();
  const double* x = in.data();
  double* gw = grad_weight.data();
  double* gb = grad_bias.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < m; ++o) {
    double sb = 0.0;
    for (std::size_t r = 0; r < n; ++r) sb += g[r * m + o];
    gb[o] += sb;
    double* gwo = gw + o * k;
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += g[r * m + o] * x[r * k + i];
      gwo[i] += s;
    }
  }
}

void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  require(grad_out.cols() == weight.rows(), Errc::shape_mismatch, "linear backward: grad width");
  const auto n = static_cast<std::int64_t>(grad_out.rows());
  const std::size_t k = weight.cols(), m = weight.rows();
  if (grad_in.rows() != grad_out.rows() || grad_in.cols() != k) grad_in.resize(grad_out.rows(), k);
  const double* g = grad_out.data();
  const double* w = weight.data();
  double* gi = grad_in.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const double* gr = g + r * m;
    double* out = gi + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < m; ++o) s += gr[o] * w[o * k + i];
      out[i] = s;
    }
  }
}

}  // namespace parallel

void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out) {
  if (backend() == Backend::serial) serial::linear_forward(in, weight, bias, out);
  else parallel::linear_forward(in, weight, bias, out);
}

void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias) {
  if (backend() == Backend::serial) serial::linear_backward_params(grad_out, in, grad_weight, grad_bias);
  else parallel::linear_backward_params(grad_out, in, grad_weight, grad_bias);
}

void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in) {
  if (backend() == Backend::serial) serial::linear_backward_input(grad_out, weight, grad_in);
  else parallel::linear_backward_input(grad_out, weight, grad_in);
}

}  // namespace mose::kernels
