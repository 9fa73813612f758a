#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "gradcheck.hpp"
#include "mose/error.hpp"
#include "mose/eval.hpp"
#include "mose/memory.hpp"

using namespace mose;

namespace {

ClassMeans means_of(std::map<int, std::vector<double>> m) {
  ClassMeans cm;
  for (auto& [k, v] : m) {
    cm.counts[k] = 1;
    cm.means[k] = v;
  }
  return cm;
}

struct Fixture {
  ExpertModel model;
  MemoryBuffer buffer;
  Batch test;
};

Fixture fixture(std::uint64_t seed) {
  Fixture f{init_model(ModelConfig::uniform(5, 4, 2, 6, 6, 3, seed)), MemoryBuffer(40), {}};
  std::mt19937_64 rng(seed);
  Batch b;
  b.features = oracle::random_matrix(40, 5, rng);
  for (std::size_t r = 0; r < 40; ++r) {
    b.labels.push_back(static_cast<int>(r % 4));
    b.ids.push_back(r);
    b.features(r, r % 4) += 3.0;
  }
  Rng brng = make_rng(seed, Substream::buffer);
  f.buffer.reservoir_update(b, brng);
  f.test.features = oracle::random_matrix(30, 5, rng);
  for (std::size_t r = 0; r < 30; ++r) {
    f.test.labels.push_back(static_cast<int>(r % 4));
    f.test.features(r, r % 4) += 3.0;
  }
  return f;
}

std::vector<std::vector<double>> oracle_means(const Matrix& aligned, const std::vector<int>& labels,
                                              const std::vector<int>& classes) {
  std::vector<std::vector<double>> means;
  for (int c : classes) {
    std::vector<double> m(aligned.cols(), 0.0);
    int n = 0;
    for (std::size_t r = 0; r < aligned.rows(); ++r)
      if (labels[r] == c) {
        const auto z = oracle::unit(oracle::row_of(aligned, r));
        for (std::size_t k = 0; k < m.size(); ++k) m[k] += z[k];
        ++n;
      }
    for (auto& v : m) v /= n;
    means.push_back(m);
  }
  return means;
}

}  // namespace

TEST_CASE("ncm picks the nearest normalized mean") {
  const auto cm = means_of({{0, {1.0, 0.0}}, {1, {0.0, 1.0}}});
  const std::vector<double> f = {5.0, 1.0};
  CHECK(ncm_predict(f, cm) == 0);
  const std::vector<double> g = {0.1, 3.0};
  CHECK(ncm_predict(g, cm) == 1);
}

TEST_CASE("ncm ties go to the smallest class id") {
  const auto cm = means_of({{7, {1.0, 0.0}}, {3, {1.0, 0.0}}, {5, {0.0, 1.0}}});
  const std::vector<double> f = {1.0, 0.0};
  CHECK(ncm_predict(f, cm) == 3);
}

TEST_CASE("ncm without means fails") {
  const std::vector<double> f = {1.0};
  try {
    ncm_predict(f, ClassMeans{});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_means);
  }
}

TEST_CASE("ncm agrees with the oracle on random instances") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    std::vector<int> labels = {0, 2, 5, 9};
    std::vector<std::vector<double>> means;
    ClassMeans cm;
    for (int c : labels) {
      means.push_back(oracle::row_of(oracle::random_matrix(1, 4, rng, 0.5), 0));
      cm.means[c] = means.back();
      cm.counts[c] = 1;
    }
    const auto f = oracle::row_of(oracle::random_matrix(1, 4, rng), 0);
    CHECK(ncm_predict(f, cm) == oracle::ncm(f, labels, means));
  }
}

TEST_CASE("class means average normalized aligned features") {
  auto f = fixture(1);
  const Batch ex = f.buffer.contents();
  const auto out = f.model.infer(ex.features);
  for (std::size_t e = 0; e < 2; ++e) {
    const auto cm = compute_class_means(f.model, ex, e);
    const auto want = oracle_means(out.aligned[e], ex.labels, {0, 1, 2, 3});
    for (int c = 0; c < 4; ++c)
      for (std::size_t k = 0; k < want[c].size(); ++k)
        CHECK(cm.means.at(c)[k] == doctest::Approx(want[c][k]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(compute_class_means(f.model, MemoryBuffer(3), 0), Error);
}

TEST_CASE("moe-ncm matches hand-averaged scores") {
  auto f = fixture(2);
  const Batch ex = f.buffer.contents();
  const auto ctx = make_eval_context(f.model, f.buffer, std::vector<int>{0, 1, 2, 3});
  const auto preds = predict(f.model, f.test.features, EvalMode::moe_ncm, ctx);
  const auto out_ex = f.model.infer(ex.features);
  const auto out = f.model.infer(f.test.features);
  std::vector<std::vector<std::vector<double>>> means;
  for (std::size_t e = 0; e < 2; ++e) means.push_back(oracle_means(out_ex.aligned[e], ex.labels, {0, 1, 2, 3}));
  for (std::size_t r = 0; r < f.test.size(); ++r) {
    int best = -1;
    double best_s = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (std::size_t e = 0; e < 2; ++e) {
        const auto z = oracle::unit(oracle::row_of(out.aligned[e], r));
        double d = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) d += (z[k] - means[e][c][k]) * (z[k] - means[e][c][k]);
        s -= std::sqrt(d) / 2.0;
      }
      if (s > best_s) {
        best_s = s;
        best = c;
      }
    }
    CHECK(preds[r] == best);
  }
}

TEST_CASE("evaluation modes produce the documented shapes") {
  auto f = fixture(3);
  std::vector<Batch> sets = {f.test, f.test};
  const std::vector<int> seen = {0, 1, 2, 3};
  CHECK(evaluate(f.model, sets, f.buffer, EvalMode::per_expert_ncm, seen).size() == 2);
  const auto per = evaluate(f.model, sets, f.buffer, EvalMode::per_expert_ncm, seen);
  const auto max = evaluate(f.model, sets, f.buffer, EvalMode::max_oracle, seen);
  REQUIRE(max.size() == 1);
  for (std::size_t t = 0; t < 2; ++t) CHECK(max[0][t] == std::max(per[0][t], per[1][t]));
  const auto fin = evaluate(f.model, sets, f.buffer, EvalMode::final_expert_ncm, seen);
  CHECK(fin[0][0] == per[1][0]);
  for (auto mode : {EvalMode::moe_ncm, EvalMode::final_linear, EvalMode::moe_linear}) {
    const auto r = evaluate(f.model, sets, f.buffer, mode, seen);
    REQUIRE(r.size() == 1);
    CHECK(r[0].size() == 2);
    CHECK(r[0][0] == r[0][1]);
  }
  CHECK_THROWS_AS(evaluate(f.model, sets, MemoryBuffer(2), EvalMode::moe_ncm, seen), Error);
}

TEST_CASE("linear modes only predict seen classes") {
  auto f = fixture(4);
  const std::vector<int> seen = {1, 3};
  const auto ctx = make_eval_context(f.model, f.buffer, seen);
  for (auto mode : {EvalMode::final_linear, EvalMode::moe_linear})
    for (int p : predict(f.model, f.test.features, mode, ctx)) CHECK((p == 1 || p == 3));
}

TEST_CASE("eval mode names round-trip") {
  for (auto m : {EvalMode::final_expert_ncm, EvalMode::per_expert_ncm, EvalMode::moe_ncm, EvalMode::max_oracle,
                 EvalMode::final_linear, EvalMode::moe_linear})
    CHECK(parse_eval_mode(eval_mode_name(m)) == m);
  try {
    parse_eval_mode("best");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_mode);
  }
}

TEST_CASE("acc and af on small matrices") {
  AccuracyMatrix m(2);
  m.set(0, 0, 0.8);
  m.set(0, 1, 0.6);
  m.set(1, 1, 0.7);
  const auto r = acc_af(m);
  CHECK(r.acc == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(r.af == doctest::Approx(0.2).epsilon(1e-15));

  AccuracyMatrix one(1);
  one.set(0, 0, 0.4);
  CHECK(acc_af(one).acc == 0.4);
  CHECK(acc_af(one).af == 0.0);

  AccuracyMatrix three(3);
  three.set(0, 0, 0.9);
  three.set(0, 1, 0.95);
  three.set(0, 2, 0.5);
  three.set(1, 1, 0.8);
  three.set(1, 2, 0.7);
  three.set(2, 2, 0.6);
  // forgetting: task1 0.95-0.5, task2 0.8-0.7
  CHECK(acc_af(three).af == doctest::Approx((0.45 + 0.1) / 2));
}

TEST_CASE("incomplete matrices are refused") {
  AccuracyMatrix m(2);
  m.set(0, 0, 0.5);
  CHECK_FALSE(m.complete());
  CHECK(m.filled() == 1);
  try {
    acc_af(m);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::incomplete_matrix);
  }
  CHECK_THROWS_AS(m.set(1, 0, 0.5), Error);
  CHECK_THROWS_AS(m.set(0, 1, 1.5), Error);
}

TEST_CASE("bof arithmetic and its undefined point") {
  CHECK(bof(0.9, 0.6) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bof(0.5, 0.5) == 0.0);
  try {
    bof(0.5, 0.0);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::undefined_at_zero);
  }
}

TEST_CASE("accuracy matrix csv is lossless") {
  std::mt19937_64 rng(5);
  AccuracyMatrix m(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i; j < 4; ++j) m.set(i, j, std::uniform_real_distribution<double>(0, 1)(rng));
  const auto csv = m.to_csv();
  CHECK(csv.rfind("after_task,task1,task2,task3,task4\n", 0) == 0);
  CHECK(AccuracyMatrix::from_csv(csv) == m);
  AccuracyMatrix partial(3);
  partial.set(0, 0, 1.0);
  CHECK(AccuracyMatrix::from_csv(partial.to_csv()) == partial);
}

TEST_CASE("double formatting round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, 0.6499999999999999, 1e-300, 123456.789})
    CHECK(parse_double(format_double(v)) == v);
  CHECK_THROWS_AS(parse_double("abc"), Error);
}

TEST_CASE("accuracy counts matching labels") {
  const std::vector<int> p = {1, 2, 3, 4}, y = {1, 0, 3, 0};
  CHECK(accuracy(p, y) == 0.5);
}
