#include "mose/datastream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "mose/binary_io.hpp"
#include "mose/error.hpp"
#include "mose/rng.hpp"

namespace mose {

Batch concat(const Batch& a, const Batch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require(!(a.shape && b.shape) || *a.shape == *b.shape, Errc::shape_mismatch, "concat: image shapes differ");
  Batch out;
  out.features = vstack(a.features, b.features);
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  out.shape = a.shape ? a.shape : b.shape;
  return out;
}

Batch DatasetSource::select(std::span<const std::size_t> ids) const {
  Batch b;
  b.features = gather_rows(features, ids);
  b.labels.reserve(ids.size());
  for (auto id : ids) b.labels.push_back(labels.at(id));
  b.ids.assign(ids.begin(), ids.end());
  b.shape = shape;
  return b;
}

std::vector<std::size_t> DatasetSource::ids_of_classes(std::span<const int> classes) const {
  std::set<int> wanted(classes.begin(), classes.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (wanted.count(labels[i])) out.push_back(i);
  return out;
}

DatasetSource generate_synthetic(std::size_t class_count, std::size_t per_class, std::size_t dim,
                                 double cluster_spread, std::uint64_t seed) {
  require(class_count >= 2, Errc::invalid_argument, "generate_synthetic: class_count must be >= 2");
  require(per_class >= 1, Errc::invalid_argument, "generate_synthetic: per_class must be >= 1");
  require(dim >= 2, Errc::invalid_argument, "generate_synthetic: dim must be >= 2");
  require(cluster_spread >= 0.0 && std::isfinite(cluster_spread), Errc::invalid_argument,
          "generate_synthetic: spread must be a finite non-negative number");

  Rng rng = make_rng(seed, Substream::data);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix means(class_count, dim);
  for (std::size_t c = 0; c < class_count; ++c) {
    do {
      for (auto& v : means.row(c)) v = normal(rng);
    } while ([&] {
      for (std::size_t p = 0; p < c; ++p)
        if (std::equal(means.row(p).begin(), means.row(p).end(), means.row(c).begin())) return true;
      return false;
    }());
  }

  DatasetSource src;
  src.kind = DatasetSource::Kind::synthetic_gaussian;
  src.class_count = class_count;
  src.features = Matrix(class_count * per_class, dim);
  src.labels.resize(class_count * per_class);
  for (std::size_t c = 0; c < class_count; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t r = c * per_class + k;
      src.labels[r] = static_cast<int>(c);
      auto row = src.features.row(r);
      for (std::size_t j = 0; j < dim; ++j) row[j] = means(c, j) + cluster_spread * normal(rng);
    }
  }
  return src;
}

std::pair<DatasetSource, DatasetSource> split_train_test(const DatasetSource& source, std::size_t test_per_class) {
  std::vector<std::size_t> seen(source.class_count, 0);
  std::vector<std::size_t> train_ids, test_ids;
  for (std::size_t i = 0; i < source.size(); ++i) {
    auto& n = seen.at(static_cast<std::size_t>(source.labels[i]));
    (n < test_per_class ? test_ids : train_ids).push_back(i);
    ++n;
  }
  auto make = [&](const std::vector<std::size_t>& ids) {
    DatasetSource d;
    d.kind = source.kind;
    d.class_count = source.class_count;
    d.shape = source.shape;
    d.features = gather_rows(source.features, ids);
    for (auto id : ids) d.labels.push_back(source.labels[id]);
    return d;
  };
  return {make(train_ids), make(test_ids)};
}

void save_dataset(const std::filesystem::path& path, const DatasetSource& source) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open for writing: " + path.string());
  binio::write_magic(os, "OCL1");
  binio::write_u32(os, static_cast<std::uint32_t>(source.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(source.dim()));
  binio::write_u32(os, static_cast<std::uint32_t>(source.class_count));
  for (std::size_t i = 0; i < source.size(); ++i) {
    for (double v : source.features.row(i)) binio::write_f32(os, static_cast<float>(v));
    binio::write_u32(os, static_cast<std::uint32_t>(source.labels[i]));
  }
  require(static_cast<bool>(os), Errc::io, "write failed: " + path.string());
}

DatasetSource load_dataset(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) fail(Errc::io, "file not found: " + path.string());
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open: " + path.string());

  binio::expect_magic(is, "OCL1");
  const std::uint32_t count = binio::read_u32(is);
  const std::uint32_t dim = binio::read_u32(is);
  const std::uint32_t classes = binio::read_u32(is);
  require(dim > 0 && classes > 0, Errc::format, "dataset header has zero dim or class count");
  const std::uintmax_t expected = 16 + static_cast<std::uintmax_t>(count) * (4ull * dim + 4ull);
  require(file_size == expected, Errc::format,
          "dataset size mismatch: header implies " + std::to_string(expected) + " bytes, file has " +
              std::to_string(file_size));

  DatasetSource src;
  src.kind = DatasetSource::Kind::file_backed;
  src.class_count = classes;
  src.features = Matrix(count, dim);
  src.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (auto& v : src.features.row(i)) v = binio::read_f32(is);
    const std::uint32_t label = binio::read_u32(is);
    require(label < classes, Errc::format, "label " + std::to_string(label) + " exceeds class count");
    src.labels[i] = static_cast<int>(label);
  }
  return src;
}

TaskStream::TaskStream(const DatasetSource& source, std::vector<TaskSpec> tasks, std::size_t batch_size)
    : source_(&source), tasks_(std::move(tasks)), batch_size_(batch_size) {
  require(batch_size_ >= 1, Errc::invalid_argument, "batch size must be >= 1");
}

void TaskStream::open_task(std::size_t t) {
  require(t < tasks_.size(), Errc::protocol_violation, "open_task: no such task");
  const bool reopen = open_ && *open_ == t;
  require(reopen || t == opened_count_, Errc::protocol_violation, "open_task: tasks must open in order");
  if (!reopen) ++opened_count_;
  open_ = t;
  cursor_ = 0;
  finished_ = false;
}

std::optional<Batch> TaskStream::next_batch(std::size_t t) {
  require(open_ && *open_ == t, Errc::protocol_violation,
          "next_batch: task " + std::to_string(t) + " is not the open task");
  require(!finished_, Errc::protocol_violation, "next_batch: task already reached end-of-task");
  const auto& ids = tasks_[t].sample_ids;
  if (cursor_ >= ids.size()) {
    finished_ = true;
    return std::nullopt;
  }
  const std::size_t end = std::min(ids.size(), cursor_ + batch_size_);
  std::span<const std::size_t> slice(ids.data() + cursor_, end - cursor_);
  cursor_ = end;
  return source_->select(slice);
}

std::vector<int> TaskStream::seen_classes() const {
  std::vector<int> out;
  for (std::size_t t = 0; t < opened_count_; ++t)
    out.insert(out.end(), tasks_[t].classes.begin(), tasks_[t].classes.end());
  std::sort(out.begin(), out.end());
  return out;
}

TaskStream build_task_stream(const DatasetSource& source, std::size_t num_tasks, std::size_t classes_per_task,
                             std::size_t batch_size, std::uint64_t seed) {
  require(num_tasks >= 1 && classes_per_task >= 1, Errc::invalid_argument, "task counts must be positive");
  require(num_tasks * classes_per_task <= source.class_count, Errc::invalid_argument,
          "cannot partition " + std::to_string(source.class_count) + " classes into " + std::to_string(num_tasks) +
              " tasks of " + std::to_string(classes_per_task));
  require(batch_size >= 1, Errc::invalid_argument, "batch size must be >= 1");

  Rng rng = make_rng(seed, Substream::stream);
  std::vector<int> order(source.class_count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<TaskSpec> tasks(num_tasks);
  for (std::size_t t = 0; t < num_tasks; ++t) {
    auto& spec = tasks[t];
    spec.index = t;
    spec.classes.assign(order.begin() + static_cast<std::ptrdiff_t>(t * classes_per_task),
                        order.begin() + static_cast<std::ptrdiff_t>((t + 1) * classes_per_task));
    std::sort(spec.classes.begin(), spec.classes.end());
    spec.sample_ids = source.ids_of_classes(spec.classes);
    std::shuffle(spec.sample_ids.begin(), spec.sample_ids.end(), rng);
  }
  return TaskStream(source, std::move(tasks), batch_size);
}

}  // namespace mose
