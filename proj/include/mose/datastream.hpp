#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mose/tensor.hpp"

namespace mose {

/// (channels, height, width) layout of a flattened image feature vector.
struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// A set of labeled rows. `ids` identify samples within their dataset.
struct Batch {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> ids;
  std::optional<ImageShape> shape;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
};

/// Concatenation of two batches (rows of `a` first).
Batch concat(const Batch& a, const Batch& b);

struct DatasetSource {
  enum class Kind { synthetic_gaussian, file_backed };
  Kind kind = Kind::synthetic_gaussian;
  Matrix features;
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::optional<ImageShape> shape;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  /// Rows `ids` as a batch.
  Batch select(std::span<const std::size_t> ids) const;
  /// Indices of all rows whose label is in `classes`.
  std::vector<std::size_t> ids_of_classes(std::span<const int> classes) const;
};

/// Isotropic Gaussian clusters. Class means are N(0, I) draws; samples add
/// N(0, spread^2 I) noise. Rows are grouped by class in class order.
DatasetSource generate_synthetic(std::size_t class_count, std::size_t per_class, std::size_t dim,
                                 double cluster_spread, std::uint64_t seed);

/// Splits each class: the first `test_per_class` rows of every class go to
/// the test source, the rest to the training source.
std::pair<DatasetSource, DatasetSource> split_train_test(const DatasetSource& source,
                                                         std::size_t test_per_class);

// Binary dataset file: "OCL1", u32 count, u32 dim, u32 classes, then per
// sample f32[dim] features and u32 label. Little-endian.
void save_dataset(const std::filesystem::path& path, const DatasetSource& source);
DatasetSource load_dataset(const std::filesystem::path& path);

struct TaskSpec {
  std::size_t index = 0;  // 0-based position in the stream
  std::vector<int> classes;
  std::vector<std::size_t> sample_ids;
};

/// Class-incremental stream over a dataset. Each task's samples are emitted
/// once, in a seeded order, as batches of `batch_size` (last may be short).
class TaskStream {
 public:
  TaskStream(const DatasetSource& source, std::vector<TaskSpec> tasks, std::size_t batch_size);

  std::size_t task_count() const noexcept { return tasks_.size(); }
  std::size_t batch_size() const noexcept { return batch_size_; }
  const TaskSpec& task(std::size_t t) const { return tasks_.at(t); }
  const std::vector<TaskSpec>& tasks() const noexcept { return tasks_; }
  const DatasetSource& source() const noexcept { return *source_; }

  /// Opens task `t`. Tasks open strictly in order; reopening the current task
  /// rewinds its cursor (used for multi-epoch sweeps only).
  void open_task(std::size_t t);
  /// Next batch of the open task, or nullopt at end-of-task. Calling again
  /// after end-of-task, or for any task other than the open one, throws
  /// protocol_violation.
  std::optional<Batch> next_batch(std::size_t t);

  std::optional<std::size_t> open_task_index() const noexcept { return open_; }
  /// Classes of every task opened so far.
  std::vector<int> seen_classes() const;

 private:
  const DatasetSource* source_;
  std::vector<TaskSpec> tasks_;
  std::size_t batch_size_;
  std::optional<std::size_t> open_;
  std::size_t cursor_ = 0;
  bool finished_ = false;
  std::size_t opened_count_ = 0;
};

/// Seeded class-to-task permutation and per-task sample shuffle.
TaskStream build_task_stream(const DatasetSource& source, std::size_t num_tasks, std::size_t classes_per_task,
                             std::size_t batch_size, std::uint64_t seed);

}  // namespace mose
