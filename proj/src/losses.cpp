#include "mose/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mose/error.hpp"

namespace mose {
namespace {

void check_sink(const Matrix* grad, const Matrix& input, const char* who) {
  if (grad)
    require(grad->rows() == input.rows() && grad->cols() == input.cols(), Errc::shape_mismatch,
            std::string(who) + ": gradient sink shape");
}

std::vector<int> labels_at(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

}  // namespace

void LossConfig::validate() const {
  require(temperature > 0.0, Errc::invalid_argument, "loss: temperature must be positive");
  for (int c : current_task_classes)
    require(std::find(seen_classes.begin(), seen_classes.end(), c) != seen_classes.end(), Errc::invalid_argument,
            "loss: current task classes must be a subset of seen classes");
}

std::size_t LossConfig::student_index(std::size_t n_experts) const {
  const std::size_t s = rsd_student.value_or(n_experts - 1);
  require(s < n_experts, Errc::invalid_argument, "loss: rsd student index out of range");
  return s;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const int> class_subset,
                     Matrix* grad, double scale) {
  require(labels.size() == logits.rows(), Errc::shape_mismatch, "cross_entropy: label count");
  check_sink(grad, logits, "cross_entropy");
  if (labels.empty()) return 0.0;
  require(!class_subset.empty(), Errc::invalid_argument, "cross_entropy: empty class subset");
  for (int c : class_subset)
    require(c >= 0 && static_cast<std::size_t>(c) < logits.cols(), Errc::invalid_argument,
            "cross_entropy: class id outside logit range");

  const double inv_n = 1.0 / static_cast<double>(labels.size());
  std::vector<double> prob(class_subset.size());
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto it = std::find(class_subset.begin(), class_subset.end(), labels[r]);
    require(it != class_subset.end(), Errc::label_outside_subset,
            "cross_entropy: label " + std::to_string(labels[r]) + " outside class subset");
    const std::size_t target = static_cast<std::size_t>(it - class_subset.begin());

    double mx = -std::numeric_limits<double>::infinity();
    for (int c : class_subset) mx = std::max(mx, logits(r, static_cast<std::size_t>(c)));
    double z = 0.0;
    for (std::size_t k = 0; k < class_subset.size(); ++k) {
      prob[k] = std::exp(logits(r, static_cast<std::size_t>(class_subset[k])) - mx);
      z += prob[k];
    }
    total += std::log(z) + mx - logits(r, static_cast<std::size_t>(labels[r]));
    if (grad) {
      for (std::size_t k = 0; k < class_subset.size(); ++k) {
        const double g = prob[k] / z - (k == target ? 1.0 : 0.0);
        (*grad)(r, static_cast<std::size_t>(class_subset[k])) += scale * inv_n * g;
      }
    }
  }
  return total * inv_n;
}

double separated_ce(const Matrix& logits_new, const Matrix& logits_buf, std::span<const int> labels_new,
                    std::span<const int> labels_buf, const LossConfig& cfg, Matrix* grad_new, Matrix* grad_buf,
                    double scale) {
  const double a = cross_entropy(logits_new, labels_new, cfg.current_task_classes, grad_new, scale);
  const double b = cross_entropy(logits_buf, labels_buf, cfg.seen_classes, grad_buf, scale);
  return a + b;
}

double sup_con(const Matrix& projections, std::span<const int> labels, double temperature, Matrix* grad,
               double scale) {
  const std::size_t n = projections.rows();
  require(labels.size() == n, Errc::shape_mismatch, "sup_con: label count");
  require(n >= 2, Errc::batch_too_small, "sup_con: batch needs at least two samples");
  require(temperature > 0.0, Errc::invalid_argument, "sup_con: temperature must be positive");
  check_sink(grad, projections, "sup_con");

  const Matrix z = normalize_rows(projections);
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) sim(i, j) = sim(j, i) = dot(z.row(i), z.row(j)) / temperature;

  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        anchors.push_back(i);
        break;
      }
  if (anchors.empty()) return 0.0;
  const double inv_a = 1.0 / static_cast<double>(anchors.size());

  Matrix grad_sim(n, n);  // dLoss/dsim(i,j) for anchor row i
  double total = 0.0;
  std::vector<double> w(n);
  for (std::size_t i : anchors) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) mx = std::max(mx, sim(i, j));
    double denom = 0.0;
    std::size_t positives = 0;
    double pos_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      w[j] = std::exp(sim(i, j) - mx);
      denom += w[j];
      if (labels[j] == labels[i]) {
        ++positives;
        pos_sum += sim(i, j);
      }
    }
    const double lse = std::log(denom) + mx;
    total += lse - pos_sum / static_cast<double>(positives);
    if (grad) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double pos = labels[j] == labels[i] ? 1.0 / static_cast<double>(positives) : 0.0;
        grad_sim(i, j) += inv_a * (w[j] / denom - pos);
      }
    }
  }
  if (grad) {
    Matrix grad_z(n, z.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = grad_sim(i, j);
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < z.cols(); ++c) {
          grad_z(i, c) += g * z(j, c) / temperature;
          grad_z(j, c) += g * z(i, c) / temperature;
        }
      }
    const Matrix gq = normalize_rows_backward(projections, grad_z);
    for (std::size_t k = 0; k < gq.size(); ++k) grad->values()[k] += scale * gq.values()[k];
  }
  return total * inv_a;
}

double expert_loss(const ExpertOutputs& out, std::size_t expert, const SupervisedBatch& batch, const LossConfig& cfg,
                   ExpertGrads* grads, double scale) {
  require(expert < out.n_experts(), Errc::invalid_argument, "expert_loss: expert index out of range");
  const Matrix& logits = out.logits[expert];
  require(batch.labels.size() == logits.rows(), Errc::shape_mismatch, "expert_loss: label count");

  const Matrix logits_new = gather_rows(logits, batch.new_rows);
  const Matrix logits_buf = gather_rows(logits, batch.buffer_rows);
  const auto labels_new = labels_at(batch.labels, batch.new_rows);
  const auto labels_buf = labels_at(batch.labels, batch.buffer_rows);

  Matrix g_new(logits_new.rows(), logits_new.cols()), g_buf(logits_buf.rows(), logits_buf.cols());
  const bool want = grads != nullptr;
  const double ce = separated_ce(logits_new, logits_buf, labels_new, labels_buf, cfg, want ? &g_new : nullptr,
                                 want ? &g_buf : nullptr, scale * cfg.ce_weight);
  double scl = 0.0;
  if (cfg.scl_weight != 0.0)
    scl = sup_con(out.projections[expert], batch.labels, cfg.temperature,
                  want ? &grads->projections[expert] : nullptr, scale * cfg.scl_weight);
  if (want) {
    scatter_add_rows(grads->logits[expert], g_new, batch.new_rows);
    scatter_add_rows(grads->logits[expert], g_buf, batch.buffer_rows);
  }
  return cfg.ce_weight * ce + cfg.scl_weight * scl;
}

double mls_loss(const ExpertOutputs& out, const SupervisedBatch& batch, const LossConfig& cfg, ExpertGrads* grads,
                double scale) {
  require(out.n_experts() >= 1, Errc::invalid_argument, "mls_loss: no experts");
  double total = 0.0;
  for (std::size_t i = 0; i < out.n_experts(); ++i) total += expert_loss(out, i, batch, cfg, grads, scale);
  return total;
}

double rsd_loss(std::span<const Matrix> aligned, const LossConfig& cfg, std::vector<Matrix>* grad_aligned,
                double scale) {
  const std::size_t n = aligned.size();
  if (n < 2) return 0.0;
  const std::size_t rows = aligned.front().rows();
  if (rows == 0) return 0.0;
  for (const auto& a : aligned)
    require(a.rows() == rows && a.cols() == aligned.front().cols(), Errc::shape_mismatch,
            "rsd_loss: aligned features must share shape");
  if (grad_aligned) require(grad_aligned->size() == n, Errc::shape_mismatch, "rsd_loss: gradient sink count");

  const std::size_t anchor = cfg.student_index(n);
  std::vector<Matrix> z;
  z.reserve(n);
  for (const auto& a : aligned) z.push_back(normalize_rows(a));

  const double inv_rows = 1.0 / static_cast<double>(rows);
  const std::size_t d = aligned.front().cols();
  std::vector<Matrix> grad_z;
  if (grad_aligned) grad_z.assign(n, Matrix(rows, d));

  double total = 0.0;
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == anchor) continue;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < d; ++c) diff[c] = z[i](r, c) - z[anchor](r, c);
      const double dist = l2_norm(diff);
      total += dist;
      if (!grad_aligned || dist == 0.0) continue;
      // Only the non-detached side of each pair receives gradient.
      if (cfg.direction == DistillDirection::reverse) {
        for (std::size_t c = 0; c < d; ++c) grad_z[anchor](r, c) -= inv_rows * diff[c] / dist;
      } else {
        for (std::size_t c = 0; c < d; ++c) grad_z[i](r, c) += inv_rows * diff[c] / dist;
      }
    }
  }
  if (grad_aligned) {
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix g = normalize_rows_backward(aligned[i], grad_z[i]);
      auto& sink = (*grad_aligned)[i];
      require(sink.rows() == rows && sink.cols() == d, Errc::shape_mismatch, "rsd_loss: gradient sink shape");
      for (std::size_t k = 0; k < g.size(); ++k) sink.values()[k] += scale * g.values()[k];
    }
  }
  return total * inv_rows;
}

double mose_loss(const ExpertOutputs& out, const SupervisedBatch& batch, const LossConfig& cfg, ExpertGrads* grads,
                 double scale) {
  double total = mls_loss(out, batch, cfg, grads, scale);
  if (cfg.rsd_enabled) total += rsd_loss(out.aligned, cfg, grads ? &grads->aligned : nullptr, scale);
  return total;
}

double er_loss(const Matrix& final_logits, std::span<const int> labels, std::span<const int> classes, Matrix* grad,
               double scale) {
  return cross_entropy(final_logits, labels, classes, grad, scale);
}

double scr_loss(const Matrix& final_projections, std::span<const int> labels, double temperature, Matrix* grad,
                double scale) {
  return sup_con(final_projections, labels, temperature, grad, scale);
}

}  // namespace mose
