#pragma once

#include "mose/tensor.hpp"

// Dense-layer kernels. `serial` is the reference implementation kept for
// testing; `parallel` distributes independent output elements over OpenMP
// threads. Both accumulate every output element in the same order, so their
// results agree bit for bit regardless of thread count.
namespace mose::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;
/// Threads the parallel backend will use (1 when built without OpenMP).
int max_threads() noexcept;

namespace serial {
// out = in * weight^T + bias
void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out);
// grad_weight += grad_out^T * in ; grad_bias += column sums of grad_out
void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias);
// grad_in = grad_out * weight
void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in);
}  // namespace serial

namespace parallel {
void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out);
void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias);
void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in);
}  // namespace parallel

// Dispatch on the active backend.
void linear_forward(const Matrix& in, const Matrix& weight, const Matrix& bias, Matrix& out);
void linear_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weight, Matrix& grad_bias);
void linear_backward_input(const Matrix& grad_out, const Matrix& weight, Matrix& grad_in);

}  // namespace mose::kernels
