#include "mose/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mose/error.hpp"

namespace mose {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is{std::string(s)};
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* expected) {
  fail(Errc::config_parse, "invalid value for " + key + ": '" + std::string(value) + "' (expected " + expected + ")");
}

std::uint64_t to_uint(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_real(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "true/false");
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + items[i];
  return s;
}

template <typename T>
std::string join_nums(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (auto v : items) s.push_back(std::to_string(v));
  return join(s);
}

std::string real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  fail(Errc::validation, "invalid field " + field + ": " + why);
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(Errc::config_parse, "line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) fail(Errc::config_parse, "line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c;
  std::optional<std::size_t> repeat;
  bool seeds_given = false;
  double hflip = 0.0, grayscale = 0.0, jitter = 0.1;
  std::optional<std::pair<double, double>> crop;
  bool inner = false;

  for (const auto& [key, v] : kv) {
    if (key == "dataset.kind") {
      if (v == "synthetic") c.dataset.kind = DatasetSpec::Kind::synthetic;
      else if (v == "file") c.dataset.kind = DatasetSpec::Kind::file;
      else bad_value(key, v, "synthetic|file");
    } else if (key == "dataset.path") c.dataset.path = v;
    else if (key == "dataset.classes") c.dataset.classes = to_uint(key, v);
    else if (key == "dataset.per_class") c.dataset.per_class = to_uint(key, v);
    else if (key == "dataset.test_per_class") c.dataset.test_per_class = to_uint(key, v);
    else if (key == "dataset.dim") c.dataset.dim = to_uint(key, v);
    else if (key == "dataset.spread") c.dataset.spread = to_real(key, v);
    else if (key == "dataset.seed") c.dataset.seed = to_uint(key, v);
    else if (key == "dataset.image_shape") {
      const auto parts = split_list(v);
      if (parts.size() != 3) bad_value(key, v, "channels,height,width");
      c.dataset.image_shape = ImageShape{to_uint(key, parts[0]), to_uint(key, parts[1]), to_uint(key, parts[2])};
    } else if (key == "stream.tasks") c.stream.num_tasks = to_uint(key, v);
    else if (key == "stream.classes_per_task") c.stream.classes_per_task = to_uint(key, v);
    else if (key == "train.method") {
      try {
        c.train.method = parse_method(v);
      } catch (const Error&) {
        bad_value(key, v, "mose|er|scr|buffer-joint");
      }
    } else if (key == "train.batch_size") c.train.batch_size = to_uint(key, v);
    else if (key == "train.buffer_batch") c.train.buffer_batch = to_uint(key, v);
    else if (key == "train.memory") c.train.memory = to_uint(key, v);
    else if (key == "train.lr") c.train.adam.lr = to_real(key, v);
    else if (key == "train.weight_decay") c.train.adam.weight_decay = to_real(key, v);
    else if (key == "train.beta1") c.train.adam.beta1 = to_real(key, v);
    else if (key == "train.beta2") c.train.adam.beta2 = to_real(key, v);
    else if (key == "train.eps") c.train.adam.eps = to_real(key, v);
    else if (key == "train.epochs") c.train.epochs = to_uint(key, v);
    else if (key == "train.augment") c.train.augment = to_bool(key, v);
    else if (key == "augment.jitter") jitter = to_real(key, v);
    else if (key == "augment.hflip") hflip = to_real(key, v);
    else if (key == "augment.grayscale") grayscale = to_real(key, v);
    else if (key == "augment.crop") {
      const auto parts = split_list(v);
      if (parts.size() != 2) bad_value(key, v, "min_scale,max_scale");
      crop = std::pair{to_real(key, parts[0]), to_real(key, parts[1])};
    } else if (key == "augment.inner_flip") inner = to_bool(key, v);
    else if (key == "model.experts") c.experts = to_uint(key, v);
    else if (key == "model.hidden_width") c.hidden_width = to_uint(key, v);
    else if (key == "model.widths") {
      c.widths.clear();
      for (const auto& p : split_list(v)) c.widths.push_back(to_uint(key, p));
    } else if (key == "model.aligned_dim") c.aligned_dim = to_uint(key, v);
    else if (key == "model.projection_dim") c.projection_dim = to_uint(key, v);
    else if (key == "loss.temperature") c.train.loss.temperature = to_real(key, v);
    else if (key == "loss.rsd") c.train.loss.rsd_enabled = to_bool(key, v);
    else if (key == "loss.direction") {
      if (v == "reverse") c.train.loss.direction = DistillDirection::reverse;
      else if (v == "forward") c.train.loss.direction = DistillDirection::forward;
      else bad_value(key, v, "reverse|forward");
    } else if (key == "loss.student") {
      const auto s = to_uint(key, v);
      if (s == 0) bad_value(key, v, "an expert number starting at 1");
      c.train.loss.rsd_student = s - 1;
    } else if (key == "loss.ce_weight") c.train.loss.ce_weight = to_real(key, v);
    else if (key == "loss.scl_weight") c.train.loss.scl_weight = to_real(key, v);
    else if (key == "eval.modes") {
      c.train.eval_modes.clear();
      for (const auto& m : split_list(v)) {
        try {
          c.train.eval_modes.push_back(parse_eval_mode(m));
        } catch (const Error&) {
          bad_value(key, m, "an evaluation mode");
        }
      }
    } else if (key == "eval.schedule") {
      if (v == "every-task") c.schedule = EvalSchedule::after_every_task;
      else if (v == "final") c.schedule = EvalSchedule::final_only;
      else bad_value(key, v, "every-task|final");
    } else if (key == "eval.bof_augmented") c.train.bof_augmented = to_bool(key, v);
    else if (key == "output.dir") c.output_dir = v;
    else if (key == "output.checkpoint") c.save_checkpoint = to_bool(key, v);
    else if (key == "output.buffer") c.save_buffer = to_bool(key, v);
    else if (key == "run.seeds") {
      c.seeds.clear();
      for (const auto& p : split_list(v)) c.seeds.push_back(to_uint(key, p));
      seeds_given = true;
    } else if (key == "run.repeat") repeat = to_uint(key, v);
    else fail(Errc::config_parse, "unknown key: " + key);
  }

  if (repeat) {
    if (seeds_given) {
      if (*repeat != c.seeds.size())
        fail(Errc::config_parse, "run.repeat=" + std::to_string(*repeat) + " disagrees with " +
                                     std::to_string(c.seeds.size()) + " entries in run.seeds");
    } else {
      c.seeds.clear();
      for (std::size_t k = 0; k < *repeat; ++k) c.seeds.push_back(k);
    }
  }

  AugmentPolicy policy;
  if (hflip > 0.0) policy.ops.push_back(aug::HorizontalFlip{hflip});
  if (grayscale > 0.0) policy.ops.push_back(aug::Grayscale{grayscale});
  if (crop) policy.ops.push_back(aug::ResizedCrop{crop->first, crop->second});
  if (jitter > 0.0) policy.ops.push_back(aug::GaussianJitter{jitter});
  policy.inner_flip_doubling = inner;
  c.train.policy = policy;
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(Errc::io, "file not found: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_key_values(parse_key_values(ss.str()));
}

void ExperimentConfig::validate() const {
  const auto& d = dataset;
  if (d.kind == DatasetSpec::Kind::file) {
    if (d.path.empty()) invalid("dataset.path", "required for file datasets");
    if (!std::filesystem::exists(d.path)) invalid("dataset.path", "file not found: " + d.path.string());
  } else {
    if (d.classes < 2) invalid("dataset.classes", "must be >= 2");
    if (d.per_class < 1) invalid("dataset.per_class", "must be >= 1");
    if (d.dim < 2) invalid("dataset.dim", "must be >= 2");
    if (!(d.spread >= 0.0)) invalid("dataset.spread", "must be >= 0");
  }
  if (d.test_per_class < 1) invalid("dataset.test_per_class", "must be >= 1");
  if (d.image_shape && d.image_shape->size() != d.dim) invalid("dataset.image_shape", "does not match dataset.dim");

  if (stream.num_tasks < 1) invalid("stream.tasks", "must be >= 1");
  if (stream.classes_per_task < 1) invalid("stream.classes_per_task", "must be >= 1");
  if (d.kind == DatasetSpec::Kind::synthetic && stream.num_tasks * stream.classes_per_task > d.classes)
    invalid("stream.tasks", "tasks x classes_per_task exceeds dataset.classes");

  if (train.batch_size < 1) invalid("train.batch_size", "must be >= 1");
  if (train.buffer_batch < 1) invalid("train.buffer_batch", "must be >= 1");
  if (train.memory < 1) invalid("train.memory", "must be >= 1");
  if (!(train.adam.lr > 0.0)) invalid("train.lr", "must be positive");
  if (!(train.adam.weight_decay >= 0.0)) invalid("train.weight_decay", "must be >= 0");
  if (!(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0)) invalid("train.beta1", "must lie in [0,1)");
  if (!(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0)) invalid("train.beta2", "must lie in [0,1)");
  if (!(train.adam.eps > 0.0)) invalid("train.eps", "must be positive");
  if (train.epochs < 1 && train.method != Method::buffer_joint) invalid("train.epochs", "must be >= 1");
  try {
    train.policy.validate();
  } catch (const Error& e) {
    invalid("augment", e.what());
  }
  if (train.augment && train.policy.has_image_ops() && !d.image_shape)
    invalid("augment", "image augmentations need dataset.image_shape");

  if (experts < 1) invalid("model.experts", "must be >= 1");
  if (!widths.empty()) {
    if (widths.size() != experts) invalid("model.widths", "needs one width per expert");
    if (widths.back() != aligned_dim) invalid("model.widths", "last width must equal model.aligned_dim");
    for (auto w : widths)
      if (w == 0) invalid("model.widths", "widths must be positive");
  }
  if (hidden_width < 1) invalid("model.hidden_width", "must be >= 1");
  if (aligned_dim < 1) invalid("model.aligned_dim", "must be >= 1");
  if (projection_dim < 1) invalid("model.projection_dim", "must be >= 1");

  if (!(train.loss.temperature > 0.0)) invalid("loss.temperature", "must be positive");
  if (train.loss.rsd_student && *train.loss.rsd_student >= experts) invalid("loss.student", "exceeds model.experts");
  if (seeds.empty()) invalid("run.seeds", "at least one seed required");
}

ModelConfig ExperimentConfig::model_config(std::uint64_t seed) const {
  ModelConfig m = ModelConfig::uniform(dataset.dim, dataset.classes, experts, hidden_width, aligned_dim,
                                       projection_dim, seed);
  if (!widths.empty()) m.block_widths = widths;
  return m;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t seed) const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::map<std::string, std::string> e;
  e["dataset.kind"] = dataset.kind == DatasetSpec::Kind::synthetic ? "synthetic" : "file";
  if (dataset.kind == DatasetSpec::Kind::file) e["dataset.path"] = dataset.path.string();
  e["dataset.classes"] = std::to_string(dataset.classes);
  e["dataset.per_class"] = std::to_string(dataset.per_class);
  e["dataset.test_per_class"] = std::to_string(dataset.test_per_class);
  e["dataset.dim"] = std::to_string(dataset.dim);
  e["dataset.spread"] = real(dataset.spread);
  e["dataset.seed"] = dataset.seed ? std::to_string(*dataset.seed) : "run";
  if (dataset.image_shape)
    e["dataset.image_shape"] = join_nums(std::vector<std::size_t>{
        dataset.image_shape->channels, dataset.image_shape->height, dataset.image_shape->width});
  e["stream.tasks"] = std::to_string(stream.num_tasks);
  e["stream.classes_per_task"] = std::to_string(stream.classes_per_task);
  e["train.method"] = std::string(method_name(train.method));
  e["train.batch_size"] = std::to_string(train.batch_size);
  e["train.buffer_batch"] = std::to_string(train.buffer_batch);
  e["train.memory"] = std::to_string(train.memory);
  e["train.lr"] = real(train.adam.lr);
  e["train.weight_decay"] = real(train.adam.weight_decay);
  e["train.beta1"] = real(train.adam.beta1);
  e["train.beta2"] = real(train.adam.beta2);
  e["train.eps"] = real(train.adam.eps);
  e["train.epochs"] = std::to_string(train.epochs);
  e["train.augment"] = train.augment ? "true" : "false";
  std::vector<std::string> ops;
  for (const auto& op : train.policy.ops) {
    if (auto* f = std::get_if<aug::HorizontalFlip>(&op)) ops.push_back("hflip(" + real(f->p) + ")");
    if (auto* g = std::get_if<aug::Grayscale>(&op)) ops.push_back("grayscale(" + real(g->p) + ")");
    if (auto* c = std::get_if<aug::ResizedCrop>(&op))
      ops.push_back("crop(" + real(c->min_scale) + ";" + real(c->max_scale) + ")");
    if (auto* j = std::get_if<aug::GaussianJitter>(&op)) ops.push_back("jitter(" + real(j->sigma) + ")");
  }
  if (train.policy.inner_flip_doubling) ops.push_back("inner-flip");
  e["augment.policy"] = ops.empty() ? "identity" : join(ops);
  e["model.experts"] = std::to_string(experts);
  e["model.widths"] = join_nums(model_config(0).block_widths);
  e["model.aligned_dim"] = std::to_string(aligned_dim);
  e["model.projection_dim"] = std::to_string(projection_dim);
  e["loss.temperature"] = real(train.loss.temperature);
  e["loss.rsd"] = train.loss.rsd_enabled ? "true" : "false";
  e["loss.direction"] = train.loss.direction == DistillDirection::reverse ? "reverse" : "forward";
  e["loss.student"] = std::to_string(train.loss.rsd_student.value_or(experts - 1) + 1);
  e["loss.ce_weight"] = real(train.loss.ce_weight);
  e["loss.scl_weight"] = real(train.loss.scl_weight);
  std::vector<std::string> modes;
  for (auto m : train.eval_modes) modes.emplace_back(eval_mode_name(m));
  e["eval.modes"] = modes.empty() ? std::string(eval_mode_name(train.primary_mode())) : join(modes);
  e["eval.schedule"] = schedule == EvalSchedule::after_every_task ? "every-task" : "final";
  e["eval.bof_augmented"] = train.bof_augmented ? "true" : "false";
  return {e.begin(), e.end()};
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [k, v] : echo())
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool is_sweep_axis(std::string_view axis) {
  for (auto a : {"epochs", "n_experts", "memory", "augment", "rsd", "direction", "student"})
    if (axis == a) return true;
  return false;
}

ExperimentConfig with_axis(const ExperimentConfig& base, std::string_view axis, std::string_view value) {
  ExperimentConfig c = base;
  const std::string key = "sweep." + std::string(axis);
  if (axis == "epochs") c.train.epochs = to_uint(key, value);
  else if (axis == "n_experts") {
    c.experts = to_uint(key, value);
    c.widths.clear();
    if (c.train.loss.rsd_student && *c.train.loss.rsd_student >= c.experts) c.train.loss.rsd_student.reset();
  } else if (axis == "memory") c.train.memory = to_uint(key, value);
  else if (axis == "augment") c.train.augment = to_bool(key, value);
  else if (axis == "rsd") c.train.loss.rsd_enabled = to_bool(key, value);
  else if (axis == "direction") {
    if (value == "reverse") c.train.loss.direction = DistillDirection::reverse;
    else if (value == "forward") c.train.loss.direction = DistillDirection::forward;
    else bad_value(key, value, "reverse|forward");
  } else if (axis == "student") {
    const auto s = to_uint(key, value);
    if (s == 0) bad_value(key, value, "an expert number starting at 1");
    c.train.loss.rsd_student = s - 1;
  } else fail(Errc::config_parse, "unknown sweep axis: " + std::string(axis));
  return c;
}

std::pair<DatasetSource, DatasetSource> materialize_dataset(const DatasetSpec& spec, std::uint64_t run_seed) {
  DatasetSource all;
  if (spec.kind == DatasetSpec::Kind::synthetic) {
    all = generate_synthetic(spec.classes, spec.per_class + spec.test_per_class, spec.dim, spec.spread,
                             spec.seed.value_or(run_seed));
  } else {
    all = load_dataset(spec.path);
    require(all.dim() == spec.dim, Errc::validation,
            "invalid field dataset.dim: file has dim " + std::to_string(all.dim()));
    require(all.class_count == spec.classes, Errc::validation,
            "invalid field dataset.classes: file has " + std::to_string(all.class_count) + " classes");
  }
  all.shape = spec.image_shape;
  auto split = split_train_test(all, spec.test_per_class);
  return split;
}

}  // namespace mose
