#include "mose/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "mose/error.hpp"

namespace mose {

ClassMeans compute_class_means(const ExpertModel& model, const Batch& exemplars, std::size_t expert) {
  require(expert < model.n_experts(), Errc::invalid_argument, "class means: expert out of range");
  ClassMeans cm;
  if (exemplars.empty()) return cm;
  const ExpertOutputs out = model.infer(exemplars.features);
  const Matrix z = normalize_rows(out.aligned[expert]);
  for (std::size_t r = 0; r < exemplars.size(); ++r) {
    auto& mean = cm.means[exemplars.labels[r]];
    if (mean.empty()) mean.assign(z.cols(), 0.0);
    for (std::size_t c = 0; c < z.cols(); ++c) mean[c] += z(r, c);
    ++cm.counts[exemplars.labels[r]];
  }
  for (auto& [label, mean] : cm.means) {
    const double inv = 1.0 / static_cast<double>(cm.counts[label]);
    for (auto& v : mean) v *= inv;
  }
  return cm;
}

ClassMeans compute_class_means(const ExpertModel& model, const MemoryBuffer& buffer, std::size_t expert) {
  require(!buffer.empty(), Errc::empty_buffer, "class means: buffer is empty");
  return compute_class_means(model, buffer.contents(), expert);
}

std::map<int, double> ncm_scores(std::span<const double> feature, const ClassMeans& means) {
  const double n = l2_norm(feature);
  std::map<int, double> scores;
  for (const auto& [label, mean] : means.means) {
    require(mean.size() == feature.size(), Errc::shape_mismatch, "ncm: feature width");
    double d2 = 0.0;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      const double z = n < kNormEpsilon ? 0.0 : feature[c] / n;
      d2 += (z - mean[c]) * (z - mean[c]);
    }
    scores[label] = -std::sqrt(d2);
  }
  return scores;
}

namespace {

// Highest score wins; the map iterates in ascending class order so strict
// comparison keeps the smallest id on ties.
int argmax(const std::map<int, double>& scores) {
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [label, s] : scores)
    if (best < 0 || s > best_score) {
      best = label;
      best_score = s;
    }
  return best;
}

}  // namespace

int ncm_predict(std::span<const double> feature, const ClassMeans& means) {
  require(!means.empty(), Errc::no_means, "ncm_predict: no class means");
  return argmax(ncm_scores(feature, means));
}

std::string_view eval_mode_name(EvalMode mode) noexcept {
  switch (mode) {
    case EvalMode::final_expert_ncm: return "final-expert-ncm";
    case EvalMode::per_expert_ncm: return "per-expert-ncm";
    case EvalMode::moe_ncm: return "moe-ncm";
    case EvalMode::max_oracle: return "max-oracle";
    case EvalMode::final_linear: return "final-linear";
    case EvalMode::moe_linear: return "moe-linear";
  }
  return "unknown";
}

EvalMode parse_eval_mode(std::string_view name) {
  for (auto m : {EvalMode::final_expert_ncm, EvalMode::per_expert_ncm, EvalMode::moe_ncm, EvalMode::max_oracle,
                 EvalMode::final_linear, EvalMode::moe_linear})
    if (eval_mode_name(m) == name) return m;
  fail(Errc::invalid_mode, "unknown evaluation mode: " + std::string(name));
}

EvalContext make_eval_context(const ExpertModel& model, const MemoryBuffer& buffer,
                              std::span<const int> seen_classes) {
  EvalContext ctx;
  if (!buffer.empty()) {
    const Batch exemplars = buffer.contents();
    for (std::size_t i = 0; i < model.n_experts(); ++i) ctx.means.push_back(compute_class_means(model, exemplars, i));
  }
  if (seen_classes.empty()) {
    for (std::size_t c = 0; c < model.config().class_count; ++c) ctx.linear_classes.push_back(static_cast<int>(c));
  } else {
    ctx.linear_classes.assign(seen_classes.begin(), seen_classes.end());
    std::sort(ctx.linear_classes.begin(), ctx.linear_classes.end());
  }
  return ctx;
}

namespace {

std::vector<int> ncm_rows(const Matrix& aligned, const ClassMeans& means) {
  std::vector<int> out(aligned.rows());
  for (std::size_t r = 0; r < aligned.rows(); ++r) out[r] = ncm_predict(aligned.row(r), means);
  return out;
}

std::vector<int> linear_rows(const Matrix& logits, std::span<const int> classes) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::map<int, double> scores;
    for (int c : classes) scores[c] = logits(r, static_cast<std::size_t>(c));
    out[r] = argmax(scores);
  }
  return out;
}

}  // namespace

std::vector<int> predict_expert_ncm(const ExpertModel& model, const Matrix& features, std::size_t expert,
                                    const EvalContext& ctx) {
  require(expert < ctx.means.size(), Errc::no_means, "predict: no class means for expert");
  const ExpertOutputs out = model.infer(features);
  return ncm_rows(out.aligned[expert], ctx.means[expert]);
}

std::vector<int> predict(const ExpertModel& model, const Matrix& features, EvalMode mode, const EvalContext& ctx) {
  const std::size_t n = model.n_experts();
  switch (mode) {
    case EvalMode::final_expert_ncm:
      return predict_expert_ncm(model, features, n - 1, ctx);
    case EvalMode::moe_ncm: {
      require(ctx.means.size() == n, Errc::no_means, "predict: no class means");
      const ExpertOutputs out = model.infer(features);
      std::vector<int> preds(features.rows());
      for (std::size_t r = 0; r < features.rows(); ++r) {
        std::map<int, double> avg;
        for (std::size_t i = 0; i < n; ++i)
          for (const auto& [label, s] : ncm_scores(out.aligned[i].row(r), ctx.means[i]))
            avg[label] += s / static_cast<double>(n);
        require(!avg.empty(), Errc::no_means, "predict: no class means");
        preds[r] = argmax(avg);
      }
      return preds;
    }
    case EvalMode::final_linear: {
      const ExpertOutputs out = model.infer(features);
      return linear_rows(out.logits[n - 1], ctx.linear_classes);
    }
    case EvalMode::moe_linear: {
      const ExpertOutputs out = model.infer(features);
      Matrix avg(features.rows(), model.config().class_count);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < avg.size(); ++k) avg.values()[k] += out.logits[i].values()[k] / static_cast<double>(n);
      return linear_rows(avg, ctx.linear_classes);
    }
    case EvalMode::per_expert_ncm:
    case EvalMode::max_oracle:
      break;
  }
  fail(Errc::invalid_mode, "predict: mode produces per-expert rows");
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  require(predicted.size() == labels.size(), Errc::shape_mismatch, "accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) hits += predicted[k] == labels[k];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<std::vector<double>> evaluate(const ExpertModel& model, std::span<const Batch> test_sets,
                                          const MemoryBuffer& buffer, EvalMode mode,
                                          std::span<const int> seen_classes) {
  const bool ncm = mode != EvalMode::final_linear && mode != EvalMode::moe_linear;
  if (ncm) require(!buffer.empty(), Errc::empty_buffer, "evaluate: NCM needs a non-empty buffer");
  const EvalContext ctx = make_eval_context(model, buffer, seen_classes);
  const std::size_t n = model.n_experts();
  const std::size_t tasks = test_sets.size();

  if (mode == EvalMode::per_expert_ncm || mode == EvalMode::max_oracle) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(tasks, 0.0));
    const auto count = static_cast<std::int64_t>(tasks);
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < count; ++t) {
      const Batch& set = test_sets[static_cast<std::size_t>(t)];
      const ExpertOutputs out = model.infer(set.features);
      for (std::size_t i = 0; i < n; ++i)
        rows[i][static_cast<std::size_t>(t)] = accuracy(ncm_rows(out.aligned[i], ctx.means[i]), set.labels);
    }
    if (mode == EvalMode::per_expert_ncm) return rows;
    std::vector<double> best(tasks, 0.0);
    for (std::size_t t = 0; t < tasks; ++t)
      for (std::size_t i = 0; i < n; ++i) best[t] = std::max(best[t], rows[i][t]);
    return {best};
  }

  std::vector<double> row(tasks, 0.0);
  const auto count = static_cast<std::int64_t>(tasks);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < count; ++t) {
    const Batch& set = test_sets[static_cast<std::size_t>(t)];
    row[static_cast<std::size_t>(t)] = accuracy(predict(model, set.features, mode, ctx), set.labels);
  }
  return {row};
}

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) : cells_(tasks, std::vector<std::optional<double>>(tasks)) {}

void AccuracyMatrix::set(std::size_t task, std::size_t after, double value) {
  require(task < task_count() && after < task_count() && task <= after, Errc::invalid_argument,
          "accuracy matrix: cell outside lower triangle");
  require(value >= 0.0 && value <= 1.0, Errc::invalid_argument, "accuracy matrix: value outside [0,1]");
  cells_[task][after] = value;
}

std::optional<double> AccuracyMatrix::get(std::size_t task, std::size_t after) const {
  if (task >= task_count() || after >= task_count()) return std::nullopt;
  return cells_[task][after];
}

double AccuracyMatrix::at(std::size_t task, std::size_t after) const {
  const auto v = get(task, after);
  require(v.has_value(), Errc::incomplete_matrix,
          "accuracy matrix: missing cell a(" + std::to_string(task + 1) + "," + std::to_string(after + 1) + ")");
  return *v;
}

std::size_t AccuracyMatrix::filled() const noexcept {
  std::size_t n = 0;
  for (const auto& row : cells_)
    for (const auto& c : row) n += c.has_value();
  return n;
}

bool AccuracyMatrix::complete() const noexcept {
  const std::size_t t = task_count();
  return filled() == t * (t + 1) / 2;
}

std::string AccuracyMatrix::to_csv() const {
  std::ostringstream os;
  os << "after_task";
  for (std::size_t i = 0; i < task_count(); ++i) os << ",task" << (i + 1);
  os << '\n';
  for (std::size_t j = 0; j < task_count(); ++j) {
    os << (j + 1);
    for (std::size_t i = 0; i < task_count(); ++i) {
      os << ',';
      if (cells_[i][j]) os << format_double(*cells_[i][j]);
    }
    os << '\n';
  }
  return os.str();
}

AccuracyMatrix AccuracyMatrix::from_csv(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), Errc::format, "accuracy csv: missing header");
  const std::size_t tasks = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  AccuracyMatrix m(tasks);
  std::size_t j = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    require(j < tasks, Errc::format, "accuracy csv: too many rows");
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    require(fields.size() == tasks + 1, Errc::format, "accuracy csv: wrong column count");
    for (std::size_t i = 0; i < tasks; ++i)
      if (!fields[i + 1].empty()) m.set(i, j, parse_double(fields[i + 1]));
    ++j;
  }
  return m;
}

double final_acc(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  require(t >= 1, Errc::incomplete_matrix, "acc: empty matrix");
  double sum = 0.0;
  for (std::size_t i = 0; i < t; ++i) sum += m.at(i, t - 1);
  return sum / static_cast<double>(t);
}

AccForgetting acc_af(const AccuracyMatrix& m) {
  require(m.task_count() >= 1 && m.complete(), Errc::incomplete_matrix, "acc_af: matrix is not complete");
  const std::size_t t = m.task_count();
  AccForgetting r;
  r.acc = final_acc(m);
  if (t == 1) return r;
  double forgetting = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = i; j + 1 < t; ++j) best = std::max(best, m.at(i, j));
    forgetting += best - m.at(i, t - 1);
  }
  r.af = forgetting / static_cast<double>(t - 1);
  return r;
}

double bof(double buffer_accuracy, double test_accuracy) {
  require(test_accuracy != 0.0, Errc::undefined_at_zero, "bof: test accuracy is zero");
  require(test_accuracy > 0.0, Errc::invalid_argument, "bof: test accuracy must be positive");
  return (buffer_accuracy - test_accuracy) / test_accuracy;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), Errc::format,
          "not a number: '" + std::string(s) + "'");
  return v;
}

}  // namespace mose
