#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mose/datastream.hpp"
#include "mose/rng.hpp"

namespace mose {

/// Fixed-capacity replay buffer filled by reservoir sampling.
class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::uint64_t seen_count() const noexcept { return seen_; }

  /// Offers every row of `batch` in order. The k-th sample ever offered is
  /// stored outright while k <= capacity, otherwise it replaces a uniformly
  /// chosen slot with probability capacity / k.
  void reservoir_update(const Batch& batch, Rng& rng);

  /// min(request, size()) distinct slots drawn uniformly; buffer unchanged.
  Batch random_retrieve(std::size_t request, Rng& rng) const;

  /// All slots in slot order.
  Batch contents() const;
  /// Slots whose label lies in `classes`.
  Batch contents_of(std::span<const int> classes) const;
  /// Sorted distinct labels currently held.
  std::vector<int> classes() const;

  /// Writes the slots in the dataset binary format.
  void save(const std::filesystem::path& path, std::size_t class_count) const;

 private:
  Batch rows(std::span<const std::size_t> slots) const;

  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  Matrix features_;
  std::vector<int> labels_;
  std::vector<std::size_t> ids_;
  std::optional<ImageShape> shape_;
};

}  // namespace mose
