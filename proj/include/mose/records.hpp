#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mose/trainer.hpp"

namespace mose {

/// Writes summary.json (the full record), accuracy.csv (primary series),
/// accuracy_<series>.csv for every series, bof.csv and, for buffer-joint
/// runs, joint.csv.
void write_run(const std::filesystem::path& dir, const RunRecord& record);
/// Reads a record back from summary.json.
RunRecord read_run(const std::filesystem::path& dir);

std::string run_to_json(const RunRecord& record);
RunRecord run_from_json(const std::string& text);

/// One tidy long-format plot row.
struct PlotRow {
  std::string series;
  double x = 0.0;
  double y = 0.0;
  std::uint64_t seed = 0;
};

/// Plot rows for one run: final per-task accuracy, new-task accuracy and BOF
/// against task number, ACC/AF against memory size, ACC against epochs, and
/// the buffer-joint series against epoch.
std::vector<PlotRow> plot_rows(const RunRecord& record);
std::string plot_rows_to_csv(const std::vector<PlotRow>& rows);
std::vector<PlotRow> plot_rows_from_csv(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mose
