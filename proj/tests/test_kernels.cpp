#include <doctest.h>

#include <random>

#include "mose/kernels.hpp"
#include "oracles.hpp"

using mose::Matrix;
namespace k = mose::kernels;

namespace {

Matrix naive_forward(const Matrix& in, const Matrix& w, const Matrix& b) {
  Matrix out(in.rows(), w.rows());
  for (std::size_t r = 0; r < in.rows(); ++r)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double s = b(0, o);
      for (std::size_t i = 0; i < in.cols(); ++i) s += in(r, i) * w(o, i);
      out(r, o) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("serial forward agrees with a naive loop") {
  std::mt19937_64 rng(1);
  const Matrix in = oracle::random_matrix(7, 5, rng), w = oracle::random_matrix(3, 5, rng),
               b = oracle::random_matrix(1, 3, rng);
  Matrix out;
  k::serial::linear_forward(in, w, b, out);
  const Matrix want = naive_forward(in, w, b);
  CHECK(oracle::max_rel_error(out, want) < 1e-14);
}

TEST_CASE("parallel kernels are bitwise equal to serial ones") {
  std::mt19937_64 rng(2);
  for (auto [rows, in_w, out_w] : {std::tuple{1, 1, 1}, {3, 7, 5}, {64, 32, 64}, {129, 17, 33}}) {
    const Matrix in = oracle::random_matrix(rows, in_w, rng), w = oracle::random_matrix(out_w, in_w, rng),
                 b = oracle::random_matrix(1, out_w, rng), gout = oracle::random_matrix(rows, out_w, rng);
    Matrix o1, o2;
    k::serial::linear_forward(in, w, b, o1);
    k::parallel::linear_forward(in, w, b, o2);
    CHECK(o1 == o2);

    Matrix gw1(out_w, in_w, 0.5), gb1(1, out_w, 0.25), gw2 = gw1, gb2 = gb1;
    k::serial::linear_backward_params(gout, in, gw1, gb1);
    k::parallel::linear_backward_params(gout, in, gw2, gb2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);

    Matrix gi1, gi2;
    k::serial::linear_backward_input(gout, w, gi1);
    k::parallel::linear_backward_input(gout, w, gi2);
    CHECK(gi1 == gi2);
  }
}

TEST_CASE("backward kernels accumulate the transposed products") {
  const Matrix gout(2, 1, 1.0);
  Matrix in(2, 2);
  in(0, 0) = 1;
  in(0, 1) = 2;
  in(1, 0) = 3;
  in(1, 1) = 4;
  Matrix gw(1, 2, 1.0), gb(1, 1, 0.0);
  k::serial::linear_backward_params(gout, in, gw, gb);
  CHECK(gw(0, 0) == 5.0);
  CHECK(gw(0, 1) == 7.0);
  CHECK(gb(0, 0) == 2.0);
}

TEST_CASE("backend switch selects the implementation") {
  const auto before = k::backend();
  k::set_backend(k::Backend::serial);
  CHECK(k::backend() == k::Backend::serial);
  k::set_backend(k::Backend::parallel);
  CHECK(k::backend() == k::Backend::parallel);
  CHECK(k::max_threads() >= 1);
  k::set_backend(before);
}
