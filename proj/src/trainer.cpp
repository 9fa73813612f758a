#include "mose/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mose/error.hpp"

namespace mose {

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::mose: return "mose";
    case Method::er: return "er";
    case Method::scr: return "scr";
    case Method::buffer_joint: return "buffer-joint";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::mose, Method::er, Method::scr, Method::buffer_joint})
    if (method_name(m) == name) return m;
  fail(Errc::invalid_argument, "unknown method: " + std::string(name));
}

void Adam::step(ExpertModel& model) {
  require(model.grads_ready(), Errc::state_error, "adam: gradients have not been populated");
  auto params = model.parameters();
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : params) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].value.values();
    auto grad = params[k].grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t e = 0; e < value.size(); ++e) {
      const double g = grad[e] + cfg_.weight_decay * value[e];
      m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g;
      v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g * g;
      value[e] -= cfg_.lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + cfg_.eps);
    }
  }
}

void TrainConfig::validate() const {
  require(batch_size >= 1, Errc::invalid_argument, "train: batch_size must be positive");
  require(buffer_batch >= 1, Errc::invalid_argument, "train: buffer_batch must be positive");
  require(memory >= 1, Errc::invalid_argument, "train: memory must be positive");
  require(epochs >= 1 || method == Method::buffer_joint, Errc::invalid_argument, "train: epochs must be >= 1");
  require(adam.lr > 0.0 && adam.eps > 0.0 && adam.weight_decay >= 0.0, Errc::invalid_argument,
          "train: optimizer settings out of range");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0, Errc::invalid_argument,
          "train: adam betas must lie in [0,1)");
  require(loss.temperature > 0.0, Errc::invalid_argument, "train: temperature must be positive");
  policy.validate();
}

EvalMode TrainConfig::primary_mode() const {
  if (!eval_modes.empty()) return eval_modes.front();
  switch (method) {
    case Method::er:
    case Method::buffer_joint: return EvalMode::final_linear;
    case Method::mose:
    case Method::scr: return EvalMode::final_expert_ncm;
  }
  return EvalMode::final_expert_ncm;
}

Learner::Learner(const ModelConfig& model_cfg, const TrainConfig& cfg)
    : model(init_model(model_cfg)),
      buffer(cfg.memory),
      optimizer(cfg.adam),
      augment_rng(make_rng(cfg.seed, Substream::augment)),
      buffer_rng(make_rng(cfg.seed, Substream::buffer)) {}

namespace {

SupervisedBatch split_rows(const Batch& combined, std::size_t incoming_rows, std::size_t base_rows) {
  SupervisedBatch sb;
  sb.labels = combined.labels;
  for (std::size_t r = 0; r < combined.size(); ++r) {
    const std::size_t within = r % base_rows;
    (within < incoming_rows ? sb.new_rows : sb.buffer_rows).push_back(r);
  }
  return sb;
}

double loss_on(ExpertModel& model, const Batch& combined, const SupervisedBatch& sb, const TaskContext& ctx,
               const TrainConfig& cfg, ExpertGrads* grads) {
  const ExpertOutputs out = model.forward_all(combined.features);
  if (grads) *grads = ExpertGrads::zeros_like(out);
  const std::size_t last = out.n_experts() - 1;
  switch (cfg.method) {
    case Method::mose: {
      LossConfig lc = cfg.loss;
      lc.current_task_classes = ctx.current_classes;
      lc.seen_classes = ctx.seen_classes;
      return mose_loss(out, sb, lc, grads);
    }
    case Method::er:
    case Method::buffer_joint:
      return er_loss(out.logits[last], sb.labels, ctx.seen_classes, grads ? &grads->logits[last] : nullptr);
    case Method::scr:
      if (combined.size() < 2) return 0.0;
      return scr_loss(out.projections[last], sb.labels, cfg.loss.temperature,
                      grads ? &grads->projections[last] : nullptr);
  }
  return 0.0;
}

}  // namespace

double method_loss(ExpertModel& model, const Batch& combined, std::size_t incoming_rows, const TaskContext& ctx,
                   const TrainConfig& cfg, ExpertGrads* grads) {
  return loss_on(model, combined, split_rows(combined, incoming_rows, combined.size()), ctx, cfg, grads);
}

double training_step(Learner& learner, const Batch& incoming, const Batch& retrieved, const TaskContext& ctx,
                     const TrainConfig& cfg) {
  const Batch base = concat(incoming, retrieved);
  const Batch combined = cfg.augment ? double_with_aug(base, cfg.policy, learner.augment_rng) : base;
  const SupervisedBatch sb = split_rows(combined, incoming.size(), base.size());

  ExpertGrads grads;
  learner.model.zero_grads();
  const double loss = loss_on(learner.model, combined, sb, ctx, cfg, &grads);
  learner.model.backward(grads);
  learner.optimizer.step(learner.model);

  if (learner.on_step) {
    StepInfo info;
    info.task = ctx.task;
    info.incoming_ids = incoming.ids;
    info.retrieved_ids = retrieved.ids;
    info.combined_rows = combined.size();
    info.loss = loss;
    learner.on_step(info);
  }
  return loss;
}

namespace {

void run_task_loop(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg) {
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    stream.open_task(task);
    TaskContext ctx;
    ctx.task = task;
    ctx.current_classes = stream.task(task).classes;
    ctx.seen_classes = stream.seen_classes();
    while (auto incoming = stream.next_batch(task)) {
      for (auto id : incoming->ids) {
        if (learner.touches.size() <= id) learner.touches.resize(id + 1, 0);
        ++learner.touches[id];
      }
      const Batch retrieved = learner.buffer.random_retrieve(cfg.buffer_batch, learner.buffer_rng);
      training_step(learner, *incoming, retrieved, ctx, cfg);
      // Extra sweep epochs replay the task; the buffer is offered each sample once.
      if (epoch == 0) learner.buffer.reservoir_update(*incoming, learner.buffer_rng);
    }
  }
}

void check_method(const TrainConfig& cfg, Method expected) {
  require(cfg.method == expected, Errc::invalid_argument,
          "train_task_" + std::string(method_name(expected)) + ": config method is " +
              std::string(method_name(cfg.method)));
}

}  // namespace

void train_task_mose(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg) {
  check_method(cfg, Method::mose);
  run_task_loop(learner, stream, task, cfg);
}

void train_task_er(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg) {
  check_method(cfg, Method::er);
  run_task_loop(learner, stream, task, cfg);
}

void train_task_scr(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg) {
  check_method(cfg, Method::scr);
  run_task_loop(learner, stream, task, cfg);
}

void train_task(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg) {
  switch (cfg.method) {
    case Method::mose: return train_task_mose(learner, stream, task, cfg);
    case Method::er: return train_task_er(learner, stream, task, cfg);
    case Method::scr: return train_task_scr(learner, stream, task, cfg);
    case Method::buffer_joint: break;
  }
  fail(Errc::invalid_argument, "train_task: buffer-joint has no per-task training");
}

double RunRecord::acc() const { return final_acc(primary()); }

double RunRecord::mean_bof() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& b : bof)
    if (b) {
      sum += *b;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double RunRecord::mean_new_task_accuracy() const {
  if (new_task_accuracy.empty()) return 0.0;
  return std::accumulate(new_task_accuracy.begin(), new_task_accuracy.end(), 0.0) /
         static_cast<double>(new_task_accuracy.size());
}

RunRecord buffer_joint_train(ExpertModel& model, const MemoryBuffer& buffer, std::size_t epochs,
                             const TrainConfig& cfg, const DatasetSource& test) {
  RunRecord rec;
  rec.method = std::string(method_name(Method::buffer_joint));
  rec.seed = cfg.seed;
  rec.primary_mode = std::string(eval_mode_name(EvalMode::final_linear));
  if (epochs == 0) return rec;
  require(!buffer.empty(), Errc::empty_buffer, "buffer_joint_train: buffer is empty");

  TrainConfig joint = cfg;
  joint.method = Method::buffer_joint;
  const Batch contents = buffer.contents();
  const std::vector<int> classes = buffer.classes();
  const Batch test_set = test.select(test.ids_of_classes(classes));
  TaskContext ctx;
  ctx.current_classes = classes;
  ctx.seen_classes = classes;

  Adam opt(cfg.adam);
  Rng order_rng = make_rng(cfg.seed, Substream::buffer);
  Rng aug_rng = make_rng(cfg.seed, Substream::augment);
  std::vector<std::size_t> order(contents.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.buffer_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.buffer_batch);
      Batch mb;
      mb.features = gather_rows(contents.features, std::span(order).subspan(start, end - start));
      for (std::size_t k = start; k < end; ++k) mb.labels.push_back(contents.labels[order[k]]);
      mb.shape = contents.shape;
      const Batch combined = cfg.augment ? double_with_aug(mb, cfg.policy, aug_rng) : mb;
      ExpertGrads grads;
      model.zero_grads();
      method_loss(model, combined, 0, ctx, joint, &grads);
      model.backward(grads);
      opt.step(model);
    }
    const EvalContext ectx = make_eval_context(model, buffer, classes);
    const double buf_acc = accuracy(predict(model, contents.features, EvalMode::final_linear, ectx), contents.labels);
    const double test_acc = accuracy(predict(model, test_set.features, EvalMode::final_linear, ectx), test_set.labels);
    rec.joint_buffer_accuracy.push_back(buf_acc);
    rec.joint_test_accuracy.push_back(test_acc);
    rec.joint_bof.push_back(test_acc > 0.0 ? bof(buf_acc, test_acc) : std::nan(""));
  }
  return rec;
}

namespace {

std::vector<EvalMode> modes_for(const TrainConfig& cfg) {
  std::vector<EvalMode> modes = cfg.eval_modes;
  if (modes.empty()) modes.push_back(cfg.primary_mode());
  return modes;
}

void record_checkpoint(RunRecord& rec, const Learner& learner, const TaskStream& stream, std::size_t after,
                       const std::vector<Batch>& test_sets, const TrainConfig& cfg) {
  const std::vector<int> seen = stream.seen_classes();
  const std::span<const Batch> seen_sets(test_sets.data(), after + 1);
  for (EvalMode mode : modes_for(cfg)) {
    const auto rows = evaluate(learner.model, seen_sets, learner.buffer, mode, seen);
    if (mode == EvalMode::per_expert_ncm) {
      for (std::size_t e = 0; e < rows.size(); ++e) {
        auto& m = rec.matrices.try_emplace("expert" + std::to_string(e + 1), stream.task_count()).first->second;
        for (std::size_t t = 0; t <= after; ++t) m.set(t, after, rows[e][t]);
      }
    } else {
      auto& m = rec.matrices.try_emplace(std::string(eval_mode_name(mode)), stream.task_count()).first->second;
      for (std::size_t t = 0; t <= after; ++t) m.set(t, after, rows[0][t]);
    }
  }

  const AccuracyMatrix& primary = rec.primary();
  rec.new_task_accuracy.push_back(primary.at(after, after));

  const EvalMode pmode = cfg.primary_mode();
  const EvalContext ctx = make_eval_context(learner.model, learner.buffer, seen);
  Rng bof_rng = make_rng(cfg.seed ^ after, Substream::eval);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < after; ++t) {
    Batch held = learner.buffer.contents_of(stream.task(t).classes);
    if (cfg.bof_augmented && !held.empty()) held = augment_batch(held, cfg.policy, bof_rng);
    const double test_acc = primary.at(t, after);
    if (held.empty() || test_acc <= 0.0) continue;
    std::vector<int> preds;
    if (pmode == EvalMode::per_expert_ncm || pmode == EvalMode::max_oracle)
      preds = predict_expert_ncm(learner.model, held.features, learner.model.n_experts() - 1, ctx);
    else
      preds = predict(learner.model, held.features, pmode, ctx);
    sum += bof(accuracy(preds, held.labels), test_acc);
    ++n;
  }
  rec.bof.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
}

}  // namespace

RunRecord run_experiment(const TrainConfig& cfg, const ModelConfig& model_cfg, const DatasetSource& train,
                         const DatasetSource& test, const StreamSpec& stream_spec, EvalSchedule schedule,
                         const std::function<void(Learner&)>& on_learner,
                         const std::function<void(const Learner&)>& on_done) {
  cfg.validate();
  model_cfg.validate();
  require(train.dim() == model_cfg.input_dim && test.dim() == model_cfg.input_dim, Errc::invalid_argument,
          "experiment: dataset dim does not match model input_dim");
  require(train.class_count <= model_cfg.class_count, Errc::invalid_argument,
          "experiment: dataset has more classes than the model");

  TaskStream stream =
      build_task_stream(train, stream_spec.num_tasks, stream_spec.classes_per_task, cfg.batch_size, cfg.seed);
  Learner learner(model_cfg, cfg);
  if (on_learner) on_learner(learner);

  std::vector<Batch> test_sets;
  for (const auto& task : stream.tasks()) test_sets.push_back(test.select(test.ids_of_classes(task.classes)));

  RunRecord rec;
  rec.method = std::string(method_name(cfg.method));
  rec.seed = cfg.seed;
  rec.primary_mode = std::string(eval_mode_name(cfg.primary_mode()));
  const std::size_t last = stream.task_count() - 1;

  if (cfg.method == Method::buffer_joint) {
    // Fill the buffer from the whole stream, then train from scratch on it.
    for (std::size_t t = 0; t <= last; ++t) {
      stream.open_task(t);
      while (auto b = stream.next_batch(t)) learner.buffer.reservoir_update(*b, learner.buffer_rng);
    }
    RunRecord joint = buffer_joint_train(learner.model, learner.buffer, cfg.epochs, cfg, test);
    rec.joint_buffer_accuracy = std::move(joint.joint_buffer_accuracy);
    rec.joint_test_accuracy = std::move(joint.joint_test_accuracy);
    rec.joint_bof = std::move(joint.joint_bof);
    TrainConfig eval_cfg = cfg;
    eval_cfg.eval_modes = {EvalMode::final_linear};
    rec.primary_mode = std::string(eval_mode_name(EvalMode::final_linear));
    record_checkpoint(rec, learner, stream, last, test_sets, eval_cfg);
    if (on_done) on_done(learner);
    return rec;
  }

  for (std::size_t t = 0; t <= last; ++t) {
    const auto start = std::chrono::steady_clock::now();
    train_task(learner, stream, t, cfg);
    rec.task_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (schedule == EvalSchedule::after_every_task || t == last) record_checkpoint(rec, learner, stream, t, test_sets, cfg);
  }
  for (auto n : learner.touches) {
    rec.samples_touched += n;
    rec.max_touches_per_sample = std::max(rec.max_touches_per_sample, n);
  }
  if (on_done) on_done(learner);
  return rec;
}

}  // namespace mose
