#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mose/tensor.hpp"

namespace mose {

inline constexpr double kNormEpsilon = 1e-12;

/// Scales each row to unit L2 norm; rows with norm below 1e-12 become zero.
Matrix normalize_rows(const Matrix& m);
/// Gradient w.r.t. the input of normalize_rows, given the gradient w.r.t. its output.
Matrix normalize_rows_backward(const Matrix& input, const Matrix& grad_out);

struct ModelConfig {
  std::size_t input_dim = 0;
  std::size_t class_count = 0;
  /// One width per expert block; the last must equal aligned_dim because the
  /// final expert's alignment is the identity.
  std::vector<std::size_t> block_widths;
  std::size_t aligned_dim = 64;
  std::size_t projection_dim = 32;
  std::uint64_t seed = 0;

  std::size_t n_experts() const noexcept { return block_widths.size(); }
  void validate() const;

  /// `n` blocks: n-1 of `hidden_width` followed by one of `aligned_dim`.
  static ModelConfig uniform(std::size_t input_dim, std::size_t class_count, std::size_t n, std::size_t hidden_width,
                             std::size_t aligned_dim, std::size_t projection_dim, std::uint64_t seed);
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

/// Per-expert tensors for one batch; every vector has n_experts entries.
struct ExpertOutputs {
  std::vector<Matrix> raw;          // h_i, block i output
  std::vector<Matrix> aligned;      // alignment of h_i into the common space
  std::vector<Matrix> projections;  // contrastive-head output
  std::vector<Matrix> logits;       // classification-head output

  std::size_t n_experts() const noexcept { return aligned.size(); }
  std::size_t batch_size() const noexcept { return aligned.empty() ? 0 : aligned.front().rows(); }
};

/// Loss gradients w.r.t. the differentiable per-expert outputs.
struct ExpertGrads {
  std::vector<Matrix> aligned;
  std::vector<Matrix> projections;
  std::vector<Matrix> logits;

  /// Zero gradients shaped like `out`.
  static ExpertGrads zeros_like(const ExpertOutputs& out);
};

/// Stacked affine+ReLU blocks with per-block alignment maps and two linear
/// heads per expert. Expert i sees blocks 1..i.
class ExpertModel {
 public:
  explicit ExpertModel(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t n_experts() const noexcept { return config_.n_experts(); }

  /// Forward pass that records the activations needed by backward().
  ExpertOutputs forward_all(const Matrix& inputs);
  /// Forward pass without recording; safe on a shared const model.
  ExpertOutputs infer(const Matrix& inputs) const;

  /// Accumulates dLoss/dParam into every gradient slot from the gradients
  /// w.r.t. the last recorded forward pass's outputs; consumes the record.
  void backward(const ExpertGrads& grads);
  void zero_grads();
  bool grads_ready() const noexcept { return grads_ready_; }

  std::span<Parameter> parameters() noexcept { return params_; }
  std::span<const Parameter> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept;

  // Indices into parameters() (weight; bias is weight + 1).
  std::size_t block_param(std::size_t expert) const { return block_.at(expert); }
  /// nullopt for the final expert's identity alignment.
  std::optional<std::size_t> align_param(std::size_t expert) const;
  std::size_t classifier_param(std::size_t expert) const { return cls_.at(expert); }
  std::size_t projector_param(std::size_t expert) const { return proj_.at(expert); }

  void save(const std::filesystem::path& path) const;
  static ExpertModel load(const std::filesystem::path& path);

 private:
  struct Record {
    Matrix input;
    ExpertOutputs out;
  };
  ExpertOutputs run(const Matrix& inputs) const;
  std::size_t add_linear(const std::string& name, std::size_t in, std::size_t out);

  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<std::size_t> block_, align_, cls_, proj_;
  std::optional<Record> record_;
  bool grads_ready_ = false;
};

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
ExpertModel init_model(const ModelConfig& config);

}  // namespace mose
