#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mose/datastream.hpp"
#include "mose/network.hpp"
#include "mose/trainer.hpp"

namespace mose {

/// Raw `section.key=value` pairs in file order of last assignment.
using KeyValues = std::map<std::string, std::string>;

/// Parses the flat config text: one `key=value` per line, `#` comments,
/// blank lines ignored. Throws config_parse naming the offending line.
KeyValues parse_key_values(std::string_view text);

struct DatasetSpec {
  enum class Kind { synthetic, file };
  Kind kind = Kind::synthetic;
  std::filesystem::path path;
  std::size_t classes = 10;
  std::size_t per_class = 200;
  std::size_t test_per_class = 100;
  std::size_t dim = 32;
  double spread = 2.0;
  /// Generator seed; nullopt follows the run seed.
  std::optional<std::uint64_t> seed;
  std::optional<ImageShape> image_shape;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  StreamSpec stream;
  TrainConfig train;
  std::size_t experts = 4;
  std::size_t hidden_width = 64;
  std::vector<std::size_t> widths;  // optional explicit block widths
  std::size_t aligned_dim = 64;
  std::size_t projection_dim = 32;
  EvalSchedule schedule = EvalSchedule::after_every_task;
  std::filesystem::path output_dir = "runs";
  bool save_checkpoint = false;
  bool save_buffer = false;
  std::vector<std::uint64_t> seeds = {0};

  /// Applies recognised keys; unknown keys or bad values throw config_parse
  /// naming the key.
  static ExperimentConfig from_key_values(const KeyValues& kv);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Cross-field checks; throws validation naming the first bad field.
  void validate() const;

  ModelConfig model_config(std::uint64_t seed) const;
  TrainConfig train_config(std::uint64_t seed) const;

  /// Every effective setting as sorted key=value pairs.
  std::vector<std::pair<std::string, std::string>> echo() const;
  /// FNV-1a over the canonical echo (seed list excluded), 16 hex digits.
  std::string hash() const;
};

/// Sweepable axes: epochs, n_experts, memory, augment, rsd, direction, student.
bool is_sweep_axis(std::string_view axis);
/// Copy of `base` with `axis` set to `value`; throws config_parse on bad input.
ExperimentConfig with_axis(const ExperimentConfig& base, std::string_view axis, std::string_view value);

/// Train and test sources described by the spec for the given run seed.
std::pair<DatasetSource, DatasetSource> materialize_dataset(const DatasetSpec& spec, std::uint64_t run_seed);

}  // namespace mose
