#include "mose/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mose/error.hpp"

namespace mose {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_image_op(const AugmentOp& op) { return !std::holds_alternative<aug::GaussianJitter>(op); }

void check_probability(double p, const char* what) {
  require(p >= 0.0 && p <= 1.0, Errc::invalid_argument, std::string(what) + " probability must lie in [0,1]");
}

void flip_horizontal(std::span<double> s, const ImageShape& sh) {
  for (std::size_t c = 0; c < sh.channels; ++c)
    for (std::size_t y = 0; y < sh.height; ++y) {
      auto* row = s.data() + (c * sh.height + y) * sh.width;
      std::reverse(row, row + sh.width);
    }
}

void to_grayscale(std::span<double> s, const ImageShape& sh) {
  if (sh.channels != 3) return;
  const std::size_t plane = sh.height * sh.width;
  for (std::size_t k = 0; k < plane; ++k) {
    const double g = 0.299 * s[k] + 0.587 * s[plane + k] + 0.114 * s[2 * plane + k];
    s[k] = s[plane + k] = s[2 * plane + k] = g;
  }
}

void resized_crop(std::span<double> s, const ImageShape& sh, double scale, Rng& rng) {
  const double side = std::sqrt(scale);
  const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * sh.height)));
  const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(side * sh.width)));
  std::uniform_int_distribution<std::size_t> oy(0, sh.height - std::min(ch, sh.height));
  std::uniform_int_distribution<std::size_t> ox(0, sh.width - std::min(cw, sh.width));
  const std::size_t y0 = oy(rng), x0 = ox(rng);
  std::vector<double> src(s.begin(), s.end());
  for (std::size_t c = 0; c < sh.channels; ++c)
    for (std::size_t y = 0; y < sh.height; ++y)
      for (std::size_t x = 0; x < sh.width; ++x) {
        const std::size_t sy = y0 + y * ch / sh.height;
        const std::size_t sx = x0 + x * cw / sh.width;
        s[(c * sh.height + y) * sh.width + x] = src[(c * sh.height + sy) * sh.width + sx];
      }
}

}  // namespace

void AugmentPolicy::validate() const {
  for (const auto& op : ops) {
    std::visit(overloaded{
                   [](const aug::HorizontalFlip& f) { check_probability(f.p, "horizontal-flip"); },
                   [](const aug::Grayscale& g) { check_probability(g.p, "grayscale"); },
                   [](const aug::ResizedCrop& c) {
                     require(c.min_scale > 0.0 && c.max_scale <= 1.0 && c.min_scale <= c.max_scale,
                             Errc::invalid_argument, "resized-crop scale range must lie within (0,1]");
                   },
                   [](const aug::GaussianJitter& j) {
                     require(j.sigma >= 0.0, Errc::invalid_argument, "gaussian-jitter sigma must be >= 0");
                   },
               },
               op);
  }
}

bool AugmentPolicy::has_image_ops() const {
  return inner_flip_doubling || std::any_of(ops.begin(), ops.end(), is_image_op);
}

void inner_flip(std::span<double> sample, const ImageShape& shape) {
  require(shape.size() == sample.size() && shape.size() > 0, Errc::shape_mismatch,
          "inner_flip: sample is not image-shaped");
  require(shape.height % 2 == 0, Errc::shape_mismatch, "inner_flip: height must be even");
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (std::size_t y = shape.height / 2; y < shape.height; ++y) {
      auto* row = sample.data() + (c * shape.height + y) * shape.width;
      std::reverse(row, row + shape.width);
    }
}

Batch augment_batch(const Batch& batch, const AugmentPolicy& policy, Rng& rng) {
  require(!batch.empty(), Errc::invalid_argument, "augment_batch: empty batch");
  policy.validate();
  if (policy.has_image_ops()) {
    require(batch.shape.has_value() && batch.shape->size() == batch.features.cols(), Errc::shape_mismatch,
            "augment_batch: image op applied to flat vectors");
  }
  Batch out = batch;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& op : policy.ops) {
    for (std::size_t r = 0; r < out.size(); ++r) {
      auto s = out.features.row(r);
      std::visit(overloaded{
                     [&](const aug::HorizontalFlip& f) {
                       if (unit(rng) < f.p) flip_horizontal(s, *out.shape);
                     },
                     [&](const aug::Grayscale& g) {
                       if (unit(rng) < g.p) to_grayscale(s, *out.shape);
                     },
                     [&](const aug::ResizedCrop& c) {
                       resized_crop(s, *out.shape, c.min_scale + (c.max_scale - c.min_scale) * unit(rng), rng);
                     },
                     [&](const aug::GaussianJitter& j) {
                       for (auto& v : s) v += j.sigma * normal(rng);
                     },
                 },
                 op);
    }
  }
  if (policy.inner_flip_doubling)
    for (std::size_t r = 0; r < out.size(); ++r) inner_flip(out.features.row(r), *out.shape);
  return out;
}

Batch double_with_aug(const Batch& batch, const AugmentPolicy& policy, Rng& rng) {
  return concat(batch, augment_batch(batch, policy, rng));
}

}  // namespace mose
