#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mose/network.hpp"

// Every loss returns its value and, when given a gradient sink, accumulates
// `scale * dLoss/dInput` into it. Sinks must already have the input's shape.
namespace mose {

enum class DistillDirection {
  /// Shallow experts are detached teachers; the designated expert learns.
  reverse,
  /// The designated expert is the detached teacher; all others learn.
  forward,
};

struct LossConfig {
  double temperature = 0.07;
  std::vector<int> current_task_classes;
  std::vector<int> seen_classes;
  bool rsd_enabled = true;
  /// 0-based expert paired against all others in distillation; nullopt means
  /// the final expert.
  std::optional<std::size_t> rsd_student;
  DistillDirection direction = DistillDirection::reverse;
  double ce_weight = 1.0;
  double scl_weight = 1.0;

  void validate() const;
  std::size_t student_index(std::size_t n_experts) const;
};

/// Rows of one combined training batch, split by origin. `labels` covers
/// every row; new rows are scored against the current task's classes and
/// buffer rows against all seen classes.
struct SupervisedBatch {
  std::vector<int> labels;
  std::vector<std::size_t> new_rows;
  std::vector<std::size_t> buffer_rows;
};

/// Mean over rows of -log softmax(logits restricted to class_subset)[label].
/// Columns outside the subset get exactly zero gradient. Empty batch -> 0.
double cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const int> class_subset,
                     Matrix* grad = nullptr, double scale = 1.0);

/// CE(new rows, current-task classes) + CE(buffer rows, seen classes).
double separated_ce(const Matrix& logits_new, const Matrix& logits_buf, std::span<const int> labels_new,
                    std::span<const int> labels_buf, const LossConfig& cfg, Matrix* grad_new = nullptr,
                    Matrix* grad_buf = nullptr, double scale = 1.0);

/// Supervised contrastive loss over row-normalized projections. Anchors with
/// no positive partner are skipped; returns 0 when none contribute.
double sup_con(const Matrix& projections, std::span<const int> labels, double temperature, Matrix* grad = nullptr,
               double scale = 1.0);

/// Separated CE plus SupCon for one expert over the combined batch.
double expert_loss(const ExpertOutputs& out, std::size_t expert, const SupervisedBatch& batch,
                   const LossConfig& cfg, ExpertGrads* grads = nullptr, double scale = 1.0);

/// Sum of expert_loss over all experts.
double mls_loss(const ExpertOutputs& out, const SupervisedBatch& batch, const LossConfig& cfg,
                ExpertGrads* grads = nullptr, double scale = 1.0);

/// Mean over rows of the summed L2 distances between each teacher's
/// normalized aligned feature and the student's. Teachers are detached.
/// Zero for a single expert.
double rsd_loss(std::span<const Matrix> aligned, const LossConfig& cfg, std::vector<Matrix>* grad_aligned = nullptr,
                double scale = 1.0);

/// mls_loss + rsd_loss (when enabled).
double mose_loss(const ExpertOutputs& out, const SupervisedBatch& batch, const LossConfig& cfg,
                 ExpertGrads* grads = nullptr, double scale = 1.0);

/// Plain CE of the final logits over `classes` (all seen classes).
double er_loss(const Matrix& final_logits, std::span<const int> labels, std::span<const int> classes,
               Matrix* grad = nullptr, double scale = 1.0);

/// SupCon on the final expert's projections.
double scr_loss(const Matrix& final_projections, std::span<const int> labels, double temperature,
                Matrix* grad = nullptr, double scale = 1.0);

}  // namespace mose
