#include "mose/memory.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "mose/error.hpp"

namespace mose {

MemoryBuffer::MemoryBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, Errc::invalid_argument, "memory capacity must be >= 1");
}

void MemoryBuffer::reservoir_update(const Batch& batch, Rng& rng) {
  if (batch.empty()) return;
  if (features_.cols() == 0) {
    features_ = Matrix(0, batch.features.cols());
    shape_ = batch.shape;
  }
  require(batch.features.cols() == features_.cols(), Errc::shape_mismatch, "reservoir_update: feature width");
  for (std::size_t r = 0; r < batch.size(); ++r) {
    ++seen_;
    const std::size_t id = batch.ids.empty() ? 0 : batch.ids[r];
    if (labels_.size() < capacity_) {
      features_.append_row(batch.features.row(r));
      labels_.push_back(batch.labels[r]);
      ids_.push_back(id);
      continue;
    }
    // Uniform j in [0, seen); keep iff j < capacity, and j is then the slot.
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const std::uint64_t j = pick(rng);
    if (j < capacity_) {
      auto src = batch.features.row(r);
      std::copy(src.begin(), src.end(), features_.row(j).begin());
      labels_[j] = batch.labels[r];
      ids_[j] = id;
    }
  }
}

Batch MemoryBuffer::rows(std::span<const std::size_t> slots) const {
  Batch b;
  b.features = slots.empty() ? Matrix(0, features_.cols()) : gather_rows(features_, slots);
  b.shape = shape_;
  for (auto s : slots) {
    b.labels.push_back(labels_[s]);
    b.ids.push_back(ids_[s]);
  }
  return b;
}

Batch MemoryBuffer::random_retrieve(std::size_t request, Rng& rng) const {
  const std::size_t n = std::min(request, size());
  std::vector<std::size_t> slots;
  slots.reserve(n);
  std::vector<std::size_t> pool(size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
    slots.push_back(pool[k]);
  }
  return rows(slots);
}

Batch MemoryBuffer::contents() const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return rows(all);
}

Batch MemoryBuffer::contents_of(std::span<const int> classes) const {
  std::set<int> wanted(classes.begin(), classes.end());
  std::vector<std::size_t> slots;
  for (std::size_t s = 0; s < size(); ++s)
    if (wanted.count(labels_[s])) slots.push_back(s);
  return rows(slots);
}

std::vector<int> MemoryBuffer::classes() const {
  std::set<int> s(labels_.begin(), labels_.end());
  return {s.begin(), s.end()};
}

void MemoryBuffer::save(const std::filesystem::path& path, std::size_t class_count) const {
  DatasetSource d;
  d.kind = DatasetSource::Kind::file_backed;
  d.features = features_;
  d.labels = labels_;
  d.class_count = class_count;
  save_dataset(path, d);
}

}  // namespace mose
