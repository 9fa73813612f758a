#include "mose/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <sstream>

#include "mose/error.hpp"

namespace mose::cli {

std::filesystem::path output_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("OCL_OUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

std::filesystem::path run_directory(const std::filesystem::path& root, const ExperimentConfig& cfg,
                                    std::uint64_t seed) {
  return root / (cfg.hash() + "-seed" + std::to_string(seed));
}

std::vector<RunRecord> execute(const ExperimentConfig& cfg, const std::filesystem::path& root) {
  cfg.validate();
  // Materialize every seed's data first so a bad dataset leaves nothing behind.
  std::vector<std::pair<DatasetSource, DatasetSource>> data;
  for (auto seed : cfg.seeds) data.push_back(materialize_dataset(cfg.dataset, seed));

  std::vector<RunRecord> records;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const auto seed = cfg.seeds[i];
    const auto dir = run_directory(root, cfg, seed);
    const auto& [train, test] = data[i];
    auto on_done = [&](const Learner& learner) {
      std::filesystem::create_directories(dir);
      if (cfg.save_checkpoint) learner.model.save(dir / "model.bin");
      if (cfg.save_buffer) learner.buffer.save(dir / "buffer.bin", cfg.dataset.classes);
    };
    RunRecord rec = run_experiment(cfg.train_config(seed), cfg.model_config(seed), train, test, cfg.stream,
                                   cfg.schedule, {}, on_done);
    rec.config_echo = cfg.echo();
    rec.config_echo.emplace_back("run.seed", std::to_string(seed));
    write_run(dir, rec);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AggregateRow> aggregate(const std::string& axis, const std::string& value,
                                    const std::vector<RunRecord>& records) {
  std::vector<std::pair<std::string, std::vector<double>>> metrics = {
      {"acc", {}}, {"af", {}}, {"bof", {}}, {"new_task_accuracy", {}}};
  for (const auto& r : records) {
    const auto& p = r.primary();
    metrics[0].second.push_back(r.acc());
    if (p.complete()) metrics[1].second.push_back(acc_af(p).af);
    metrics[2].second.push_back(r.mean_bof());
    if (!r.new_task_accuracy.empty()) metrics[3].second.push_back(r.mean_new_task_accuracy());
  }
  std::vector<AggregateRow> rows;
  for (const auto& [name, xs] : metrics) {
    if (xs.empty()) continue;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    rows.push_back({axis, value, name, mean, sd, xs.size()});
  }
  return rows;
}

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "axis,value,metric,mean,std,runs\n";
  for (const auto& r : rows)
    os << r.axis << ',' << r.value << ',' << r.metric << ',' << format_double(r.mean) << ',' << format_double(r.std)
       << ',' << r.runs << '\n';
  return os.str();
}

namespace {

int report(const Error& e, std::ostream& err) {
  err << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
  switch (e.code()) {
    case Errc::io: return 3;
    case Errc::config_parse: return 4;
    case Errc::validation: return 5;
    default: return 1;
  }
}

}  // namespace

int run(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err) {
  try {
    const auto cfg = ExperimentConfig::load(config_path);
    cfg.validate();
    const auto root = output_root(cfg);
    const auto records = execute(cfg, root);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      out << run_directory(root, cfg, r.seed).string() << "  method=" << r.method << " acc=" << format_double(r.acc());
      if (r.primary().complete()) out << " af=" << format_double(acc_af(r.primary()).af);
      out << '\n';
    }
    return 0;
  } catch (const Error& e) {
    return report(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int sweep(const std::filesystem::path& config_path, const std::string& axis, const std::vector<std::string>& values,
          std::ostream& out, std::ostream& err) {
  try {
    const auto base = ExperimentConfig::load(config_path);
    require(is_sweep_axis(axis), Errc::config_parse, "unknown sweep axis: " + axis);
    require(!values.empty(), Errc::config_parse, "sweep needs at least one value");
    std::vector<ExperimentConfig> variants;
    for (const auto& v : values) {
      variants.push_back(with_axis(base, axis, v));
      variants.back().validate();
    }
    const auto root = output_root(base);
    std::vector<AggregateRow> rows;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto records = execute(variants[i], root);
      auto part = aggregate(axis, values[i], records);
      rows.insert(rows.end(), part.begin(), part.end());
      out << axis << '=' << values[i] << "  acc=" << format_double(part.front().mean) << '\n';
    }
    const auto path = root / ("sweep-" + base.hash() + "-" + axis + ".csv");
    std::filesystem::create_directories(root);
    write_text(path, aggregate_to_csv(rows));
    out << path.string() << '\n';
    return 0;
  } catch (const Error& e) {
    return report(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int plot_data(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err) {
  try {
    require(std::filesystem::is_directory(run_dir), Errc::io, "not a directory: " + run_dir.string());
    std::vector<std::filesystem::path> runs;
    if (std::filesystem::exists(run_dir / "summary.json")) {
      runs.push_back(run_dir);
    } else {
      for (const auto& entry : std::filesystem::directory_iterator(run_dir))
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "summary.json")) runs.push_back(entry.path());
      std::sort(runs.begin(), runs.end());
    }
    require(!runs.empty(), Errc::io, "no runs found under " + run_dir.string());
    std::vector<PlotRow> rows;
    for (const auto& dir : runs) {
      auto part = plot_rows(read_run(dir));
      rows.insert(rows.end(), part.begin(), part.end());
    }
    const auto path = run_dir / "plot.csv";
    write_text(path, plot_rows_to_csv(rows));
    out << path.string() << '\n';
    return 0;
  } catch (const Error& e) {
    return report(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mose::cli
