#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mose/augment.hpp"
#include "mose/datastream.hpp"
#include "mose/eval.hpp"
#include "mose/losses.hpp"
#include "mose/memory.hpp"
#include "mose/network.hpp"
#include "mose/rng.hpp"

namespace mose {

enum class Method { mose, er, scr, buffer_joint };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with L2 weight decay folded into the gradient (grad += wd * param).
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One bias-corrected update of every parameter. Throws state_error when
  /// the model has no populated gradients.
  void step(ExpertModel& model);
  std::uint64_t step_count() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainConfig {
  Method method = Method::mose;
  std::size_t batch_size = 10;
  std::size_t buffer_batch = 64;
  std::size_t memory = 500;
  AdamConfig adam;
  /// Passes over each task; anything above 1 is only for epoch sweeps.
  std::size_t epochs = 1;
  bool augment = true;
  AugmentPolicy policy = AugmentPolicy::jitter(0.1);
  LossConfig loss;
  /// Evaluation modes recorded after each task; the first is the method's
  /// headline classifier. Empty picks the method default.
  std::vector<EvalMode> eval_modes;
  /// Measure BOF buffer accuracy on augmented copies of the exemplars.
  bool bof_augmented = false;
  std::uint64_t seed = 0;

  void validate() const;
  EvalMode primary_mode() const;
};

enum class EvalSchedule { after_every_task, final_only };

/// Per-step observation hook (used for instrumentation in tests).
struct StepInfo {
  std::size_t task = 0;
  std::vector<std::size_t> incoming_ids;
  std::vector<std::size_t> retrieved_ids;
  std::size_t combined_rows = 0;
  double loss = 0.0;
};

/// Mutable training state owned by one run.
struct Learner {
  Learner(const ModelConfig& model_cfg, const TrainConfig& cfg);

  ExpertModel model;
  MemoryBuffer buffer;
  Adam optimizer;
  Rng augment_rng;
  Rng buffer_rng;
  /// Times each dataset sample id was drawn from the stream.
  std::vector<std::uint32_t> touches;
  std::function<void(const StepInfo&)> on_step;
};

/// Class sets a step is trained against.
struct TaskContext {
  std::size_t task = 0;
  std::vector<int> current_classes;
  std::vector<int> seen_classes;
};

/// One optimizer step on incoming + retrieved (augmented and doubled when
/// cfg.augment). Returns the loss before the update. The buffer is untouched.
double training_step(Learner& learner, const Batch& incoming, const Batch& retrieved, const TaskContext& ctx,
                     const TrainConfig& cfg);

/// Loss of the method's objective on the given combined batch, no update.
double method_loss(ExpertModel& model, const Batch& combined, std::size_t incoming_rows, const TaskContext& ctx,
                   const TrainConfig& cfg, ExpertGrads* grads);

/// Trains one task of the stream: per batch retrieve, step, then reservoir
/// update with the raw incoming batch. Dispatches on cfg.method.
void train_task(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg);
void train_task_mose(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg);
void train_task_er(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg);
void train_task_scr(Learner& learner, TaskStream& stream, std::size_t task, const TrainConfig& cfg);

struct RunRecord {
  std::string method;
  std::uint64_t seed = 0;
  std::string primary_mode;
  /// Accuracy matrix per evaluation series: mode names, plus "expert<i>"
  /// for per-expert NCM.
  std::map<std::string, AccuracyMatrix> matrices;
  /// a(t, t) of the primary series.
  std::vector<double> new_task_accuracy;
  /// Average old-task BOF at each checkpoint; nullopt where undefined.
  std::vector<std::optional<double>> bof;
  std::vector<double> task_seconds;
  /// Buffer-joint protocol: one entry per epoch.
  std::vector<double> joint_buffer_accuracy;
  std::vector<double> joint_test_accuracy;
  std::vector<double> joint_bof;
  std::uint64_t samples_touched = 0;
  std::uint32_t max_touches_per_sample = 0;
  std::vector<std::pair<std::string, std::string>> config_echo;

  const AccuracyMatrix& primary() const { return matrices.at(primary_mode); }
  double acc() const;
  /// Mean of the defined BOF entries (0 when none).
  double mean_bof() const;
  double mean_new_task_accuracy() const;
};

/// Trains on the buffer contents only for `epochs` passes with the ER
/// objective and records buffer accuracy, test accuracy and BOF per epoch.
RunRecord buffer_joint_train(ExpertModel& model, const MemoryBuffer& buffer, std::size_t epochs,
                             const TrainConfig& cfg, const DatasetSource& test);

struct StreamSpec {
  std::size_t num_tasks = 5;
  std::size_t classes_per_task = 2;
};

/// Builds the stream from cfg.seed, trains every task and evaluates all seen
/// tasks' test sets after each (or only the last) task. `on_learner` sees the
/// fresh learner before training, `on_done` the trained one.
RunRecord run_experiment(const TrainConfig& cfg, const ModelConfig& model_cfg, const DatasetSource& train,
                         const DatasetSource& test, const StreamSpec& stream_spec,
                         EvalSchedule schedule = EvalSchedule::after_every_task,
                         const std::function<void(Learner&)>& on_learner = {},
                         const std::function<void(const Learner&)>& on_done = {});

}  // namespace mose
