#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mose/config.hpp"
#include "mose/error.hpp"

using namespace mose;

namespace {

Errc code_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_argument;
}

ExperimentConfig parse(const std::string& text) { return ExperimentConfig::from_key_values(parse_key_values(text)); }

}  // namespace

TEST_CASE("key-value parsing handles comments, blanks and whitespace") {
  const auto kv = parse_key_values("# header\n\n train.lr = 0.01 \nmodel.experts=3 # inline\n");
  CHECK(kv.at("train.lr") == "0.01");
  CHECK(kv.at("model.experts") == "3");
  std::string msg;
  CHECK(code_of([] { parse_key_values("train.lr\n"); }, &msg) == Errc::config_parse);
  CHECK(msg.find("line 1") != std::string::npos);
  CHECK(code_of([] { parse_key_values("=3\n"); }) == Errc::config_parse);
}

TEST_CASE("defaults describe the desk-scale benchmark") {
  const auto c = parse("");
  CHECK(c.dataset.classes == 10);
  CHECK(c.dataset.dim == 32);
  CHECK(c.dataset.per_class == 200);
  CHECK(c.stream.num_tasks == 5);
  CHECK(c.train.memory == 500);
  CHECK(c.train.batch_size == 10);
  CHECK(c.train.buffer_batch == 64);
  CHECK(c.experts == 4);
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK_NOTHROW(c.validate());
  CHECK(c.model_config(0).block_widths == std::vector<std::size_t>{64, 64, 64, 64});
}

TEST_CASE("recognised keys are applied") {
  const auto c = parse(R"(
train.method=scr
train.lr=0.005
train.epochs=2
augment.jitter=0.2
augment.hflip=0.5
dataset.image_shape=1,4,8
model.widths=16,32,64
model.experts=3
loss.student=2
loss.direction=forward
loss.rsd=false
eval.modes=moe-ncm,final-linear
eval.schedule=final
run.seeds=4,5
)");
  CHECK(c.train.method == Method::scr);
  CHECK(c.train.adam.lr == 0.005);
  CHECK(c.train.epochs == 2);
  CHECK(c.train.policy.ops.size() == 2);
  CHECK(c.dataset.image_shape->width == 8);
  CHECK(c.widths == std::vector<std::size_t>{16, 32, 64});
  CHECK(*c.train.loss.rsd_student == 1);
  CHECK(c.train.loss.direction == DistillDirection::forward);
  CHECK_FALSE(c.train.loss.rsd_enabled);
  CHECK(c.train.eval_modes == std::vector<EvalMode>{EvalMode::moe_ncm, EvalMode::final_linear});
  CHECK(c.schedule == EvalSchedule::final_only);
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys and bad values name the key") {
  std::string msg;
  CHECK(code_of([] { parse("train.learning_rate=0.1\n"); }, &msg) == Errc::config_parse);
  CHECK(msg.find("train.learning_rate") != std::string::npos);
  CHECK(code_of([] { parse("train.memory=lots\n"); }, &msg) == Errc::config_parse);
  CHECK(msg.find("train.memory") != std::string::npos);
  CHECK(code_of([] { parse("train.augment=maybe\n"); }) == Errc::config_parse);
  CHECK(code_of([] { parse("loss.student=0\n"); }) == Errc::config_parse);
  CHECK(code_of([] { parse("run.repeat=2\nrun.seeds=1,2,3\n"); }) == Errc::config_parse);
}

TEST_CASE("repeat expands to consecutive seeds") {
  CHECK(parse("run.repeat=3\n").seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(parse("run.repeat=3\nrun.seeds=1,2,3\n").seeds == std::vector<std::uint64_t>{1, 2, 3});
}

TEST_CASE("validation names the first bad field") {
  std::string msg;
  CHECK(code_of([] { parse("stream.tasks=6\n").validate(); }, &msg) == Errc::validation);
  CHECK(msg.find("stream.tasks") != std::string::npos);
  CHECK(code_of([] { parse("model.widths=8,8\n").validate(); }, &msg) == Errc::validation);
  CHECK(msg.find("model.widths") != std::string::npos);
  CHECK(code_of([] { parse("augment.hflip=0.5\n").validate(); }, &msg) == Errc::validation);
  CHECK(msg.find("augment") != std::string::npos);
  CHECK(code_of([] { parse("dataset.kind=file\ndataset.path=/no/such/file\n").validate(); }, &msg) ==
        Errc::validation);
  CHECK(msg.find("dataset.path") != std::string::npos);
  CHECK(code_of([] { parse("model.experts=2\nloss.student=3\n").validate(); }) == Errc::validation);
  CHECK(code_of([] { parse("dataset.image_shape=3,2,2\n").validate(); }) == Errc::validation);
}

TEST_CASE("missing config files are reported") {
  std::string msg;
  CHECK(code_of([] { ExperimentConfig::load("/no/such/config.cfg"); }, &msg) == Errc::io);
  CHECK(msg.find("file not found") != std::string::npos);
}

TEST_CASE("hash follows the settings and ignores seeds") {
  const auto a = parse("train.lr=0.01\n");
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() == parse("train.lr=0.01\nrun.seeds=7\n").hash());
  CHECK(a.hash() != parse("train.lr=0.02\n").hash());
  CHECK(a.hash() == parse("train.lr=1e-2\n").hash());
}

TEST_CASE("echo lists effective settings in key order") {
  const auto e = parse("").echo();
  CHECK(std::is_sorted(e.begin(), e.end()));
  bool found = false;
  for (const auto& [k, v] : e)
    if (k == "train.memory") found = v == "500";
  CHECK(found);
}

TEST_CASE("sweep axes override one setting") {
  const auto base = parse("model.experts=4\n");
  CHECK(with_axis(base, "epochs", "4").train.epochs == 4);
  CHECK(with_axis(base, "n_experts", "2").model_config(0).n_experts() == 2);
  CHECK(with_axis(base, "memory", "100").train.memory == 100);
  CHECK_FALSE(with_axis(base, "augment", "false").train.augment);
  CHECK_FALSE(with_axis(base, "rsd", "off").train.loss.rsd_enabled);
  CHECK(with_axis(base, "direction", "forward").train.loss.direction == DistillDirection::forward);
  CHECK(*with_axis(base, "student", "2").train.loss.rsd_student == 1);
  CHECK(is_sweep_axis("n_experts"));
  CHECK_FALSE(is_sweep_axis("lr"));
  CHECK_THROWS_AS(with_axis(base, "lr", "1"), Error);
  CHECK_THROWS_AS(with_axis(base, "epochs", "x"), Error);
}

TEST_CASE("synthetic datasets materialize per seed") {
  const auto c = parse("dataset.classes=4\ndataset.per_class=10\ndataset.test_per_class=5\ndataset.dim=3\n");
  const auto [train, test] = materialize_dataset(c.dataset, 1);
  CHECK(train.size() == 40);
  CHECK(test.size() == 20);
  const auto [train2, test2] = materialize_dataset(c.dataset, 2);
  CHECK_FALSE(train.features == train2.features);
  const auto fixed = parse("dataset.classes=4\ndataset.per_class=10\ndataset.test_per_class=5\ndataset.dim=3\ndataset.seed=9\n");
  CHECK(materialize_dataset(fixed.dataset, 1).first.features == materialize_dataset(fixed.dataset, 2).first.features);
}

TEST_CASE("file datasets are checked against the config") {
  const auto path = std::filesystem::temp_directory_path() / "mose_test_cfg_data.bin";
  save_dataset(path, generate_synthetic(4, 12, 5, 1.0, 0));
  auto c = parse("dataset.kind=file\ndataset.path=" + path.string() + "\ndataset.classes=4\ndataset.dim=5\ndataset.test_per_class=2\n");
  CHECK_NOTHROW(c.validate());
  const auto [train, test] = materialize_dataset(c.dataset, 0);
  CHECK(train.size() == 40);
  c.dataset.dim = 6;
  CHECK_THROWS_AS(materialize_dataset(c.dataset, 0), Error);
  std::filesystem::remove(path);
}
