#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mose/config.hpp"
#include "mose/records.hpp"

namespace mose::cli {

/// OCL_OUT_DIR when set and non-empty, otherwise the config's output.dir.
std::filesystem::path output_root(const ExperimentConfig& cfg);
/// `<root>/<config hash>-seed<k>`.
std::filesystem::path run_directory(const std::filesystem::path& root, const ExperimentConfig& cfg,
                                    std::uint64_t seed);

/// Runs every seed of `cfg` and writes one run directory per seed.
std::vector<RunRecord> execute(const ExperimentConfig& cfg, const std::filesystem::path& root);

struct AggregateRow {
  std::string axis;
  std::string value;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
};

/// Mean and sample standard deviation of acc, af, bof and new-task accuracy
/// over the given records.
std::vector<AggregateRow> aggregate(const std::string& axis, const std::string& value,
                                    const std::vector<RunRecord>& records);
std::string aggregate_to_csv(const std::vector<AggregateRow>& rows);

int run(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);
int sweep(const std::filesystem::path& config_path, const std::string& axis, const std::vector<std::string>& values,
          std::ostream& out, std::ostream& err);
/// Collects every run under `run_dir` (itself or its subdirectories) into
/// `<run_dir>/plot.csv`.
int plot_data(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

}  // namespace mose::cli
