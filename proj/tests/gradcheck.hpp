#pragma once

#include <functional>
#include <random>

#include "mose/network.hpp"
#include "oracles.hpp"

namespace gradcheck {

// Loss over the live outputs; `frozen` holds the outputs at the starting
// parameters so detached branches can be held constant.
using LossFn = std::function<double(const mose::ExpertOutputs& live, const mose::ExpertOutputs& frozen,
                                    mose::ExpertGrads* grads)>;

// Worst relative error between backpropagated and central-difference
// gradients over every model parameter.
inline double model_error(mose::ExpertModel& model, const mose::Matrix& x, const LossFn& loss) {
  const mose::ExpertOutputs frozen = model.infer(x);
  model.zero_grads();
  const mose::ExpertOutputs out = model.forward_all(x);
  auto grads = mose::ExpertGrads::zeros_like(out);
  loss(out, frozen, &grads);
  model.backward(grads);

  double worst = 0.0;
  for (auto& p : model.parameters()) {
    const mose::Matrix analytic = p.grad;
    const mose::Matrix numeric = oracle::numeric_grad(p.value, [&] { return loss(model.infer(x), frozen, nullptr); });
    worst = std::max(worst, oracle::max_rel_error(analytic, numeric));
  }
  return worst;
}

struct Toy {
  mose::ExpertModel model;
  mose::Matrix x;
  std::vector<int> labels;
};

// Two experts, every width at most 8, four classes; two rows per class.
// Biases are randomized: with zero biases an all-inactive input row puts the
// next pre-activation exactly on the ReLU kink, where differences are invalid.
inline Toy toy(std::uint64_t seed, std::size_t experts = 2) {
  auto cfg = mose::ModelConfig::uniform(6, 4, experts, 8, 8, 4, seed);
  Toy t{mose::init_model(cfg), {}, {0, 1, 2, 3, 0, 1, 2, 3}};
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (auto& p : t.model.parameters())
    if (p.name.ends_with(".bias"))
      for (auto& v : p.value.values()) v = normal(rng);
  t.x = oracle::random_matrix(8, 6, rng);
  return t;
}

}  // namespace gradcheck
