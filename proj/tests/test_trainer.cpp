#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mose/error.hpp"
#include "mose/trainer.hpp"

using namespace mose;

namespace {

struct Data {
  DatasetSource train, test;
};

Data data(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
  auto all = generate_synthetic(classes, per_class + 10, dim, spread, seed);
  auto [train, test] = split_train_test(all, 10);
  return {train, test};
}

TrainConfig small_train(Method m) {
  TrainConfig c;
  c.method = m;
  c.memory = 30;
  c.buffer_batch = 8;
  c.batch_size = 5;
  return c;
}

ModelConfig small_model(std::size_t dim, std::size_t classes) {
  return ModelConfig::uniform(dim, classes, 2, 12, 12, 6, 0);
}

}  // namespace

TEST_CASE("adam first step matches the hand computation") {
  auto model = init_model(ModelConfig::uniform(2, 2, 1, 2, 2, 2, 0));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  Adam adam(cfg);
  model.zero_grads();
  std::vector<Matrix> before;
  for (auto& p : model.parameters()) {
    before.push_back(p.value);
    for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad.values()[k] = 0.25 * static_cast<double>(k) - 0.3;
  }
  adam.step(model);
  CHECK(adam.step_count() == 1);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = model.parameters()[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.values()[k] + 0.5 * before[i].values()[k];
      // Bias-corrected first step: m_hat = g, v_hat = g^2.
      const double want = before[i].values()[k] - 0.1 * g / (std::fabs(g) + cfg.eps);
      CHECK(p.value.values()[k] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam second step uses the running moments") {
  auto model = init_model(ModelConfig::uniform(1, 2, 1, 1, 1, 1, 3));
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam adam(cfg);
  auto& p = model.parameters()[0];
  const double w0 = p.value(0, 0);
  model.zero_grads();
  p.grad(0, 0) = 1.0;
  adam.step(model);
  model.zero_grads();
  p.grad(0, 0) = -2.0;
  adam.step(model);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  const double w1 = w0 - 1e-3 * 1.0 / (1.0 + 1e-8);
  CHECK(p.value(0, 0) == doctest::Approx(w1 - 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam refuses to step without gradients") {
  auto model = init_model(ModelConfig::uniform(2, 2, 1, 2, 2, 2, 0));
  Adam adam;
  try {
    adam.step(model);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::state_error);
  }
}

TEST_CASE("a sample is never retrieved in its own arrival step") {
  const auto d = data(4, 20, 6, 1.0, 1);
  std::size_t steps = 0, overlaps = 0;
  std::set<std::size_t> arrived;
  auto on_learner = [&](Learner& l) {
    l.on_step = [&](const StepInfo& s) {
      ++steps;
      for (auto id : s.incoming_ids)
        if (std::find(s.retrieved_ids.begin(), s.retrieved_ids.end(), id) != s.retrieved_ids.end()) ++overlaps;
      for (auto id : s.retrieved_ids) CHECK(arrived.count(id) == 1);
      arrived.insert(s.incoming_ids.begin(), s.incoming_ids.end());
    };
  };
  run_experiment(small_train(Method::mose), small_model(6, 4), d.train, d.test, {2, 2},
                 EvalSchedule::after_every_task, on_learner);
  CHECK(steps == 16);
  CHECK(overlaps == 0);
}

TEST_CASE("with one epoch every stream sample is touched exactly once") {
  const auto d = data(4, 17, 6, 1.0, 2);
  for (auto m : {Method::mose, Method::er, Method::scr}) {
    const auto rec = run_experiment(small_train(m), small_model(6, 4), d.train, d.test, {2, 2});
    CHECK(rec.samples_touched == d.train.size());
    CHECK(rec.max_touches_per_sample == 1);
  }
}

TEST_CASE("extra epochs replay the task but offer it to the buffer once") {
  const auto d = data(4, 10, 6, 1.0, 3);
  auto cfg = small_train(Method::er);
  cfg.epochs = 3;
  std::uint64_t seen = 0;
  const auto rec = run_experiment(cfg, small_model(6, 4), d.train, d.test, {2, 2}, EvalSchedule::after_every_task, {},
                                  [&](const Learner& l) { seen = l.buffer.seen_count(); });
  CHECK(rec.max_touches_per_sample == 3);
  CHECK(rec.samples_touched == 3 * d.train.size());
  CHECK(seen == d.train.size());
}

TEST_CASE("runs are deterministic for a seed") {
  const auto d = data(6, 15, 6, 1.0, 4);
  auto cfg = small_train(Method::mose);
  cfg.eval_modes = {EvalMode::final_expert_ncm, EvalMode::per_expert_ncm, EvalMode::moe_linear};
  const auto a = run_experiment(cfg, small_model(6, 6), d.train, d.test, {3, 2});
  const auto b = run_experiment(cfg, small_model(6, 6), d.train, d.test, {3, 2});
  CHECK(a.matrices == b.matrices);
  CHECK(a.bof == b.bof);
  CHECK(a.primary().to_csv() == b.primary().to_csv());
}

TEST_CASE("evaluation schedule fills the expected cells") {
  const auto d = data(6, 10, 6, 1.0, 5);
  const auto every = run_experiment(small_train(Method::er), small_model(6, 6), d.train, d.test, {3, 2});
  CHECK(every.primary().filled() == 6);
  CHECK(every.new_task_accuracy.size() == 3);
  CHECK(every.bof.size() == 3);
  CHECK_FALSE(every.bof[0].has_value());
  const auto last = run_experiment(small_train(Method::er), small_model(6, 6), d.train, d.test, {3, 2},
                                   EvalSchedule::final_only);
  CHECK(last.primary().filled() == 3);
}

TEST_CASE("methods sharing a seed see the same stream") {
  const auto d = data(4, 12, 6, 1.0, 6);
  std::vector<std::vector<std::size_t>> seen[2];
  int k = 0;
  for (auto m : {Method::mose, Method::er}) {
    run_experiment(small_train(m), small_model(6, 4), d.train, d.test, {2, 2}, EvalSchedule::after_every_task,
                   [&](Learner& l) { l.on_step = [&, k](const StepInfo& s) { seen[k].push_back(s.incoming_ids); }; });
    ++k;
  }
  CHECK(seen[0] == seen[1]);
}

TEST_CASE("repeated MOSE steps on a frozen batch decrease the loss") {
  const auto d = data(4, 20, 6, 1.0, 7);
  auto cfg = small_train(Method::mose);
  cfg.augment = false;
  Learner learner(small_model(6, 4), cfg);
  auto stream = build_task_stream(d.train, 2, 2, 10, 0);
  stream.open_task(0);
  const Batch old = *stream.next_batch(0);
  while (stream.next_batch(0)) {
  }
  stream.open_task(1);
  const Batch incoming = *stream.next_batch(1);
  TaskContext ctx{1, stream.task(1).classes, stream.seen_classes()};
  double prev = training_step(learner, incoming, old, ctx, cfg);
  int decreases = 0;
  for (int s = 0; s < 50; ++s) {
    const double loss = training_step(learner, incoming, old, ctx, cfg);
    decreases += loss < prev;
    prev = loss;
  }
  CHECK(decreases >= 45);
}

TEST_CASE("ER learns an easy two-task stream") {
  const auto d = data(4, 60, 8, 0.3, 8);
  auto cfg = small_train(Method::er);
  cfg.adam.lr = 0.01;
  const auto rec = run_experiment(cfg, small_model(8, 4), d.train, d.test, {2, 2});
  CHECK(rec.acc() > 0.9);
}

TEST_CASE("an SCR step with zero loss leaves parameters unchanged") {
  const auto d = data(4, 5, 6, 1.0, 9);
  auto cfg = small_train(Method::scr);
  cfg.augment = false;
  cfg.adam.weight_decay = 0.0;
  Learner learner(small_model(6, 4), cfg);
  const std::vector<std::size_t> ids = {0, 5, 10, 15};  // one sample per class: no positives
  const Batch incoming = d.train.select(ids);
  std::vector<Matrix> before;
  for (const auto& p : learner.model.parameters()) before.push_back(p.value);
  TaskContext ctx{0, {0, 1, 2, 3}, {0, 1, 2, 3}};
  CHECK(training_step(learner, incoming, Batch{}, ctx, cfg) == 0.0);
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(learner.model.parameters()[k].value == before[k]);
}

TEST_CASE("trainers refuse a mismatched method") {
  const auto d = data(4, 5, 6, 1.0, 10);
  auto cfg = small_train(Method::er);
  Learner learner(small_model(6, 4), cfg);
  auto stream = build_task_stream(d.train, 2, 2, 5, 0);
  CHECK_THROWS_AS(train_task_mose(learner, stream, 0, cfg), Error);
}

TEST_CASE("buffer-joint training records one point per epoch") {
  const auto d = data(4, 20, 6, 1.0, 11);
  auto cfg = small_train(Method::buffer_joint);
  cfg.epochs = 4;
  const auto rec = run_experiment(cfg, small_model(6, 4), d.train, d.test, {2, 2});
  CHECK(rec.joint_buffer_accuracy.size() == 4);
  CHECK(rec.joint_test_accuracy.size() == 4);
  CHECK(rec.joint_bof.size() == 4);
  CHECK(rec.primary_mode == "final-linear");
}

TEST_CASE("record summaries") {
  const auto d = data(4, 10, 6, 1.0, 12);
  const auto rec = run_experiment(small_train(Method::mose), small_model(6, 4), d.train, d.test, {2, 2});
  CHECK(rec.acc() == final_acc(rec.primary()));
  double sum = 0.0;
  for (double v : rec.new_task_accuracy) sum += v;
  CHECK(rec.mean_new_task_accuracy() == doctest::Approx(sum / 2));
  CHECK(rec.task_seconds.size() == 2);
}

TEST_CASE("method names and validation") {
  for (auto m : {Method::mose, Method::er, Method::scr, Method::buffer_joint})
    CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_AS(parse_method("gdumb"), Error);
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.adam.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  CHECK(c.primary_mode() == EvalMode::final_expert_ncm);
  c.method = Method::er;
  CHECK(c.primary_mode() == EvalMode::final_linear);
}
