#pragma once

#include <span>
#include <variant>
#include <vector>

#include "mose/datastream.hpp"
#include "mose/rng.hpp"

namespace mose {

namespace aug {
struct HorizontalFlip { double p = 0.5; };
struct Grayscale { double p = 0.2; };
/// Square crop covering a uniformly drawn area fraction, resized back with
/// nearest-neighbour sampling.
struct ResizedCrop { double min_scale = 0.2; double max_scale = 1.0; };
struct GaussianJitter { double sigma = 0.1; };
}  // namespace aug

using AugmentOp = std::variant<aug::HorizontalFlip, aug::Grayscale, aug::ResizedCrop, aug::GaussianJitter>;

struct AugmentPolicy {
  std::vector<AugmentOp> ops;
  /// Appends an inner flip to every augmented image.
  bool inner_flip_doubling = false;

  /// Throws invalid_argument on out-of-range parameters.
  void validate() const;
  bool has_image_ops() const;

  static AugmentPolicy identity() { return {}; }
  static AugmentPolicy jitter(double sigma) { return {{aug::GaussianJitter{sigma}}, false}; }
};

/// Applies the policy's ops in order to every sample. Labels and ids are kept.
/// Image ops on a batch without image shape throw shape_mismatch.
Batch augment_batch(const Batch& batch, const AugmentPolicy& policy, Rng& rng);

/// [batch; augment_batch(batch)].
Batch double_with_aug(const Batch& batch, const AugmentPolicy& policy, Rng& rng);

/// Mirrors the lower half of every channel left-to-right. Requires even height.
void inner_flip(std::span<double> sample, const ImageShape& shape);

}  // namespace mose
