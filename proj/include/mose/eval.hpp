#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mose/datastream.hpp"
#include "mose/memory.hpp"
#include "mose/network.hpp"

namespace mose {

/// Per-class means of row-normalized aligned features for one expert.
struct ClassMeans {
  std::map<int, std::vector<double>> means;
  std::map<int, std::size_t> counts;
  bool empty() const noexcept { return means.empty(); }
};

/// Means over the given exemplars (features are not augmented).
ClassMeans compute_class_means(const ExpertModel& model, const Batch& exemplars, std::size_t expert);
/// Throws empty_buffer when the buffer holds nothing.
ClassMeans compute_class_means(const ExpertModel& model, const MemoryBuffer& buffer, std::size_t expert);

/// Class whose mean is nearest (Euclidean) to the normalized feature; ties
/// go to the smallest class id.
int ncm_predict(std::span<const double> feature, const ClassMeans& means);
/// Negative Euclidean distance from the normalized feature to every mean.
std::map<int, double> ncm_scores(std::span<const double> feature, const ClassMeans& means);

enum class EvalMode { final_expert_ncm, per_expert_ncm, moe_ncm, max_oracle, final_linear, moe_linear };

std::string_view eval_mode_name(EvalMode mode) noexcept;
/// Throws invalid_mode for unknown names.
EvalMode parse_eval_mode(std::string_view name);

/// Everything a classifier needs beyond the model: buffer-derived class
/// means (one per expert) and the class ids linear heads may predict.
struct EvalContext {
  std::vector<ClassMeans> means;
  std::vector<int> linear_classes;
};

EvalContext make_eval_context(const ExpertModel& model, const MemoryBuffer& buffer, std::span<const int> seen_classes);

/// Predictions of a single-row-producing mode (not per_expert_ncm / max_oracle).
std::vector<int> predict(const ExpertModel& model, const Matrix& features, EvalMode mode, const EvalContext& ctx);
std::vector<int> predict_expert_ncm(const ExpertModel& model, const Matrix& features, std::size_t expert,
                                    const EvalContext& ctx);

double accuracy(std::span<const int> predicted, std::span<const int> labels);

/// Per-task accuracies on `test_sets`. Returns one row, except per_expert_ncm
/// which returns one row per expert. max_oracle is the per-task maximum of the
/// per-expert rows.
std::vector<std::vector<double>> evaluate(const ExpertModel& model, std::span<const Batch> test_sets,
                                          const MemoryBuffer& buffer, EvalMode mode,
                                          std::span<const int> seen_classes = {});

/// a(i, j): accuracy on task i's test set after training task j (i <= j).
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks);

  std::size_t task_count() const noexcept { return cells_.size(); }
  void set(std::size_t task, std::size_t after, double value);
  std::optional<double> get(std::size_t task, std::size_t after) const;
  double at(std::size_t task, std::size_t after) const;
  std::size_t filled() const noexcept;
  bool complete() const noexcept;

  /// Row per checkpoint j, column per task i; cells with i > j are empty.
  std::string to_csv() const;
  static AccuracyMatrix from_csv(std::string_view text);

  friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

 private:
  std::vector<std::vector<std::optional<double>>> cells_;  // [task][after]
};

struct AccForgetting {
  double acc = 0.0;
  double af = 0.0;
};

/// Final average accuracy and average forgetting; requires every cell i <= j.
AccForgetting acc_af(const AccuracyMatrix& m);
/// Final average accuracy from the last checkpoint row only.
double final_acc(const AccuracyMatrix& m);

/// (buffer - test) / test. Throws undefined_at_zero when test accuracy is 0.
double bof(double buffer_accuracy, double test_accuracy);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace mose
