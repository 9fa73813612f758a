#include "mose/records.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mose/error.hpp"

namespace mose {
namespace {

using nlohmann::json;

json matrix_to_json(const AccuracyMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.task_count(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.task_count(); ++j) {
      const auto v = m.get(i, j);
      row.push_back(v ? json(*v) : json(nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

AccuracyMatrix matrix_from_json(const json& rows) {
  AccuracyMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      if (!rows[i][j].is_null()) m.set(i, j, rows[i][j].get<double>());
  return m;
}

json optional_series(const std::vector<std::optional<double>>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(x ? json(*x) : json(nullptr));
  return a;
}

std::string echo_value(const RunRecord& r, const std::string& key) {
  for (const auto& [k, v] : r.config_echo)
    if (k == key) return v;
  return {};
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::io, "file not found: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::io, "cannot open for writing: " + path.string());
  os << text;
  if (!os) fail(Errc::io, "write failed: " + path.string());
}

std::string run_to_json(const RunRecord& r) {
  json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["primary_mode"] = r.primary_mode;
  json summary;
  if (r.matrices.count(r.primary_mode)) {
    const auto& p = r.primary();
    if (p.task_count() > 0 && p.get(p.task_count() - 1, p.task_count() - 1)) summary["acc"] = r.acc();
    if (p.complete()) summary["af"] = acc_af(p).af;
  }
  summary["mean_bof"] = r.mean_bof();
  summary["mean_new_task_accuracy"] = r.mean_new_task_accuracy();
  j["summary"] = summary;
  json mats = json::object();
  for (const auto& [name, m] : r.matrices) mats[name] = matrix_to_json(m);
  j["matrices"] = mats;
  j["new_task_accuracy"] = r.new_task_accuracy;
  j["bof"] = optional_series(r.bof);
  j["task_seconds"] = r.task_seconds;
  j["joint_buffer_accuracy"] = r.joint_buffer_accuracy;
  j["joint_test_accuracy"] = r.joint_test_accuracy;
  j["joint_bof"] = r.joint_bof;
  j["samples_touched"] = r.samples_touched;
  j["max_touches_per_sample"] = r.max_touches_per_sample;
  json cfg = json::object();
  for (const auto& [k, v] : r.config_echo) cfg[k] = v;
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

RunRecord run_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("summary.json: ") + e.what());
  }
  RunRecord r;
  try {
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.primary_mode = j.at("primary_mode").get<std::string>();
    for (const auto& [name, m] : j.at("matrices").items()) r.matrices.emplace(name, matrix_from_json(m));
    r.new_task_accuracy = j.at("new_task_accuracy").get<std::vector<double>>();
    for (const auto& b : j.at("bof")) r.bof.push_back(b.is_null() ? std::nullopt : std::optional<double>(b.get<double>()));
    r.task_seconds = j.at("task_seconds").get<std::vector<double>>();
    r.joint_buffer_accuracy = j.at("joint_buffer_accuracy").get<std::vector<double>>();
    r.joint_test_accuracy = j.at("joint_test_accuracy").get<std::vector<double>>();
    for (const auto& b : j.at("joint_bof")) r.joint_bof.push_back(b.is_null() ? std::nan("") : b.get<double>());
    r.samples_touched = j.at("samples_touched").get<std::uint64_t>();
    r.max_touches_per_sample = j.at("max_touches_per_sample").get<std::uint32_t>();
    for (const auto& [k, v] : j.at("config").items()) r.config_echo.emplace_back(k, v.get<std::string>());
  } catch (const json::exception& e) {
    fail(Errc::format, std::string("summary.json: ") + e.what());
  }
  return r;
}

void write_run(const std::filesystem::path& dir, const RunRecord& r) {
  std::filesystem::create_directories(dir);
  write_text(dir / "summary.json", run_to_json(r));
  if (r.matrices.count(r.primary_mode)) write_text(dir / "accuracy.csv", r.primary().to_csv());
  for (const auto& [name, m] : r.matrices) write_text(dir / ("accuracy_" + name + ".csv"), m.to_csv());

  std::ostringstream bof;
  bof << "after_task,new_task_accuracy,bof,task_seconds\n";
  for (std::size_t t = 0; t < r.new_task_accuracy.size(); ++t) {
    bof << (t + 1) << ',' << format_double(r.new_task_accuracy[t]) << ',';
    if (t < r.bof.size() && r.bof[t]) bof << format_double(*r.bof[t]);
    bof << ',';
    if (t < r.task_seconds.size()) bof << format_double(r.task_seconds[t]);
    bof << '\n';
  }
  write_text(dir / "bof.csv", bof.str());

  if (!r.joint_bof.empty()) {
    std::ostringstream joint;
    joint << "epoch,buffer_accuracy,test_accuracy,bof\n";
    for (std::size_t e = 0; e < r.joint_bof.size(); ++e)
      joint << (e + 1) << ',' << format_double(r.joint_buffer_accuracy[e]) << ','
            << format_double(r.joint_test_accuracy[e]) << ',' << format_double(r.joint_bof[e]) << '\n';
    write_text(dir / "joint.csv", joint.str());
  }
}

RunRecord read_run(const std::filesystem::path& dir) { return run_from_json(read_text(dir / "summary.json")); }

std::vector<PlotRow> plot_rows(const RunRecord& r) {
  std::vector<PlotRow> rows;
  auto add = [&](std::string series, double x, double y) { rows.push_back({std::move(series), x, y, r.seed}); };
  if (r.matrices.count(r.primary_mode)) {
    const auto& p = r.primary();
    const std::size_t last = p.task_count() - 1;
    for (std::size_t t = 0; t < p.task_count(); ++t)
      if (auto v = p.get(t, last)) add("final_task_accuracy", static_cast<double>(t + 1), *v);
    if (p.get(last, last)) {
      const std::string mem = echo_value(r, "train.memory");
      const std::string epochs = echo_value(r, "train.epochs");
      const double acc = r.acc();
      if (!mem.empty()) add("acc_vs_memory", parse_double(mem), acc);
      if (!epochs.empty()) add("acc_vs_epochs", parse_double(epochs), acc);
      if (p.complete() && !mem.empty()) add("af_vs_memory", parse_double(mem), acc_af(p).af);
    }
  }
  for (std::size_t t = 0; t < r.new_task_accuracy.size(); ++t)
    add("new_task_accuracy", static_cast<double>(t + 1), r.new_task_accuracy[t]);
  for (std::size_t t = 0; t < r.bof.size(); ++t)
    if (r.bof[t]) add("bof", static_cast<double>(t + 1), *r.bof[t]);
  for (std::size_t e = 0; e < r.joint_bof.size(); ++e) {
    add("joint_buffer_accuracy", static_cast<double>(e + 1), r.joint_buffer_accuracy[e]);
    add("joint_test_accuracy", static_cast<double>(e + 1), r.joint_test_accuracy[e]);
    if (!std::isnan(r.joint_bof[e])) add("joint_bof", static_cast<double>(e + 1), r.joint_bof[e]);
  }
  return rows;
}

std::string plot_rows_to_csv(const std::vector<PlotRow>& rows) {
  std::ostringstream os;
  os << "series,x,y,seed\n";
  for (const auto& r : rows) os << r.series << ',' << format_double(r.x) << ',' << format_double(r.y) << ',' << r.seed << '\n';
  return os.str();
}

std::vector<PlotRow> plot_rows_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line == "series,x,y,seed", Errc::format, "plot csv: bad header");
  std::vector<PlotRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string series, x, y, seed;
    require(std::getline(ls, series, ',') && std::getline(ls, x, ',') && std::getline(ls, y, ',') &&
                std::getline(ls, seed, ','),
            Errc::format, "plot csv: malformed row");
    rows.push_back({series, parse_double(x), parse_double(y), std::stoull(seed)});
  }
  return rows;
}

}  // namespace mose
