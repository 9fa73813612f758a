#include "mose/network.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "mose/binary_io.hpp"
#include "mose/error.hpp"
#include "mose/kernels.hpp"
#include "mose/rng.hpp"

namespace mose {

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double n = l2_norm(m.row(r));
    if (n < kNormEpsilon) continue;
    auto src = m.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] / n;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& input, const Matrix& grad_out) {
  require(input.rows() == grad_out.rows() && input.cols() == grad_out.cols(), Errc::shape_mismatch,
          "normalize_rows_backward: shape mismatch");
  Matrix grad(input.rows(), input.cols());
  for (std::size_t r = 0; r < input.rows(); ++r) {
    const double n = l2_norm(input.row(r));
    if (n < kNormEpsilon) continue;
    auto x = input.row(r);
    auto g = grad_out.row(r);
    // d(x/|x|) = (g - z (z.g)) / |x|
    double zg = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) zg += x[c] / n * g[c];
    auto dst = grad.row(r);
    for (std::size_t c = 0; c < x.size(); ++c) dst[c] = (g[c] - x[c] / n * zg) / n;
  }
  return grad;
}

void ModelConfig::validate() const {
  require(input_dim > 0, Errc::invalid_argument, "model: input_dim must be positive");
  require(class_count > 0, Errc::invalid_argument, "model: class_count must be positive");
  require(!block_widths.empty(), Errc::invalid_argument, "model: need at least one expert");
  for (auto w : block_widths) require(w > 0, Errc::invalid_argument, "model: block widths must be positive");
  require(aligned_dim > 0 && projection_dim > 0, Errc::invalid_argument, "model: dims must be positive");
  require(block_widths.back() == aligned_dim, Errc::invalid_argument,
          "model: final block width must equal aligned_dim (identity alignment)");
}

ModelConfig ModelConfig::uniform(std::size_t input_dim, std::size_t class_count, std::size_t n,
                                 std::size_t hidden_width, std::size_t aligned_dim, std::size_t projection_dim,
                                 std::uint64_t seed) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.class_count = class_count;
  c.block_widths.assign(n, hidden_width);
  if (n > 0) c.block_widths.back() = aligned_dim;
  c.aligned_dim = aligned_dim;
  c.projection_dim = projection_dim;
  c.seed = seed;
  return c;
}

ExpertGrads ExpertGrads::zeros_like(const ExpertOutputs& out) {
  ExpertGrads g;
  for (std::size_t i = 0; i < out.n_experts(); ++i) {
    g.aligned.emplace_back(out.aligned[i].rows(), out.aligned[i].cols());
    g.projections.emplace_back(out.projections[i].rows(), out.projections[i].cols());
    g.logits.emplace_back(out.logits[i].rows(), out.logits[i].cols());
  }
  return g;
}

std::size_t ExpertModel::add_linear(const std::string& name, std::size_t in, std::size_t out) {
  const std::size_t idx = params_.size();
  params_.push_back({name + ".weight", Matrix(out, in), Matrix(out, in)});
  params_.push_back({name + ".bias", Matrix(1, out), Matrix(1, out)});
  return idx;
}

ExpertModel::ExpertModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t n = config_.n_experts();
  std::size_t in = config_.input_dim;
  for (std::size_t i = 0; i < n; ++i) {
    block_.push_back(add_linear("block" + std::to_string(i + 1), in, config_.block_widths[i]));
    in = config_.block_widths[i];
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    align_.push_back(add_linear("align" + std::to_string(i + 1), config_.block_widths[i], config_.aligned_dim));
  for (std::size_t i = 0; i < n; ++i)
    cls_.push_back(add_linear("classifier" + std::to_string(i + 1), config_.aligned_dim, config_.class_count));
  for (std::size_t i = 0; i < n; ++i)
    proj_.push_back(add_linear("projector" + std::to_string(i + 1), config_.aligned_dim, config_.projection_dim));
}

std::optional<std::size_t> ExpertModel::align_param(std::size_t expert) const {
  require(expert < n_experts(), Errc::invalid_argument, "align_param: expert out of range");
  if (expert + 1 == n_experts()) return std::nullopt;
  return align_[expert];
}

std::size_t ExpertModel::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

ExpertOutputs ExpertModel::run(const Matrix& inputs) const {
  require(inputs.cols() == config_.input_dim, Errc::shape_mismatch,
          "forward: input width " + std::to_string(inputs.cols()) + " != " + std::to_string(config_.input_dim));
  const std::size_t n = n_experts();
  ExpertOutputs out;
  out.raw.resize(n);
  out.aligned.resize(n);
  out.projections.resize(n);
  out.logits.resize(n);
  const Matrix* h = &inputs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = params_[block_[i]];
    const auto& b = params_[block_[i] + 1];
    kernels::linear_forward(*h, w.value, b.value, out.raw[i]);
    for (auto& v : out.raw[i].values()) v = v > 0.0 ? v : 0.0;
    if (i + 1 < n) {
      kernels::linear_forward(out.raw[i], params_[align_[i]].value, params_[align_[i] + 1].value, out.aligned[i]);
    } else {
      out.aligned[i] = out.raw[i];
    }
    kernels::linear_forward(out.aligned[i], params_[cls_[i]].value, params_[cls_[i] + 1].value, out.logits[i]);
    kernels::linear_forward(out.aligned[i], params_[proj_[i]].value, params_[proj_[i] + 1].value,
                            out.projections[i]);
    h = &out.raw[i];
  }
  return out;
}

ExpertOutputs ExpertModel::forward_all(const Matrix& inputs) {
  ExpertOutputs out = run(inputs);
  record_ = Record{inputs, out};
  return out;
}

ExpertOutputs ExpertModel::infer(const Matrix& inputs) const { return run(inputs); }

void ExpertModel::backward(const ExpertGrads& grads) {
  require(record_.has_value(), Errc::state_error, "backward: no recorded forward pass");
  const std::size_t n = n_experts();
  require(grads.aligned.size() == n && grads.projections.size() == n && grads.logits.size() == n,
          Errc::shape_mismatch, "backward: gradient expert count");
  const auto& out = record_->out;
  if (!grads_ready_) zero_grads();

  auto linear_back = [&](std::size_t p, const Matrix& grad_out, const Matrix& in, Matrix* grad_in) {
    kernels::linear_backward_params(grad_out, in, params_[p].grad, params_[p + 1].grad);
    if (grad_in) {
      Matrix gi;
      kernels::linear_backward_input(grad_out, params_[p].value, gi);
      for (std::size_t k = 0; k < gi.size(); ++k) grad_in->values()[k] += gi.values()[k];
    }
  };

  // Gradient w.r.t. h_i flowing down from block i+1.
  Matrix grad_from_above;
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = n - 1 - step;
    Matrix grad_aligned = grads.aligned[i];
    require(grad_aligned.rows() == out.aligned[i].rows() && grad_aligned.cols() == out.aligned[i].cols(),
            Errc::shape_mismatch, "backward: aligned gradient shape");
    linear_back(cls_[i], grads.logits[i], out.aligned[i], &grad_aligned);
    linear_back(proj_[i], grads.projections[i], out.aligned[i], &grad_aligned);

    Matrix grad_raw;
    if (i + 1 < n) {
      grad_raw = Matrix(out.raw[i].rows(), out.raw[i].cols());
      linear_back(align_[i], grad_aligned, out.raw[i], &grad_raw);
    } else {
      grad_raw = std::move(grad_aligned);
    }
    if (!grad_from_above.empty())
      for (std::size_t k = 0; k < grad_raw.size(); ++k) grad_raw.values()[k] += grad_from_above.values()[k];

    // ReLU: raw holds the post-activation value.
    for (std::size_t k = 0; k < grad_raw.size(); ++k)
      if (out.raw[i].values()[k] <= 0.0) grad_raw.values()[k] = 0.0;

    const Matrix& block_in = i == 0 ? record_->input : out.raw[i - 1];
    if (i == 0) {
      linear_back(block_[i], grad_raw, block_in, nullptr);
    } else {
      grad_from_above = Matrix(block_in.rows(), block_in.cols());
      linear_back(block_[i], grad_raw, block_in, &grad_from_above);
    }
  }
  record_.reset();
  grads_ready_ = true;
}

void ExpertModel::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
  grads_ready_ = true;
}

ExpertModel init_model(const ModelConfig& config) {
  ExpertModel model(config);
  Rng rng = make_rng(config.seed, Substream::init);
  for (auto& p : model.parameters()) {
    if (p.value.rows() == 1 && p.name.ends_with(".bias")) continue;
    const double fan_out = static_cast<double>(p.value.rows());
    const double fan_in = static_cast<double>(p.value.cols());
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : p.value.values()) v = dist(rng);
  }
  return model;
}

void ExpertModel::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  binio::write_magic(os, "MOSE");
  binio::write_u32(os, static_cast<std::uint32_t>(n_experts()));
  binio::write_u32(os, static_cast<std::uint32_t>(config_.input_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(config_.class_count));
  binio::write_u32(os, static_cast<std::uint32_t>(config_.aligned_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(config_.projection_dim));
  for (auto w : config_.block_widths) binio::write_u32(os, static_cast<std::uint32_t>(w));
  binio::write_u32(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    binio::write_u32(os, static_cast<std::uint32_t>(p.value.rows()));
    binio::write_u32(os, static_cast<std::uint32_t>(p.value.cols()));
    for (double v : p.value.values()) binio::write_f64(os, v);
  }
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

ExpertModel ExpertModel::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "file not found: " + path.string());
  binio::expect_magic(is, "MOSE");
  ModelConfig c;
  const std::uint32_t n = binio::read_u32(is);
  require(n >= 1 && n <= 1024, Errc::format, "checkpoint: implausible expert count");
  c.input_dim = binio::read_u32(is);
  c.class_count = binio::read_u32(is);
  c.aligned_dim = binio::read_u32(is);
  c.projection_dim = binio::read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) c.block_widths.push_back(binio::read_u32(is));
  ExpertModel model(c);
  const std::uint32_t count = binio::read_u32(is);
  require(count == model.params_.size(), Errc::format, "checkpoint: parameter count mismatch");
  for (auto& p : model.params_) {
    const std::uint32_t rows = binio::read_u32(is);
    const std::uint32_t cols = binio::read_u32(is);
    require(rows == p.value.rows() && cols == p.value.cols(), Errc::format, "checkpoint: shape mismatch for " + p.name);
    for (auto& v : p.value.values()) v = binio::read_f64(is);
  }
  return model;
}

}  // namespace mose
