#include <doctest.h>

#include "ssdg/config.hpp"
#include "ssdg/errors.hpp"

using namespace ssdg;

namespace {

std::string error_of(const std::string& text, const EnvList& env = {}) {
  try {
    (void)parse_run_config(text, env);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config takes the documented defaults") {
  const RunConfig c = parse_run_config(R"({"schema_version": 1})");
  CHECK(c.train.epochs == 20);
  CHECK(c.train.labeled_per_domain == 16);
  CHECK(c.train.unlabeled_per_domain == 16);
  CHECK(c.train.lr_encoder == 0.003);
  CHECK(c.train.lr_classifier == 0.01);
  CHECK(c.train.momentum == 0.0);
  CHECK(c.train.loss.tau == 0.95);
  CHECK(c.train.loss.temperature == 1.0);
  CHECK(c.train.loss.top_n == 0);
  CHECK(c.seeds.size() == 5);
  CHECK(c.dataset.params.labels_per_class == 5);
  CHECK(c.hidden == std::vector<int>{64, 64});
  CHECK(c.feature_dim == 32);
  CHECK(c.model_dims() == ModelDims{20, {64, 64}, 32, 5});
}

TEST_CASE("sections are read") {
  const RunConfig c = parse_run_config(R"({
    "schema_version": 1,
    "seed": 7,
    "seeds": [3, 4],
    "workers": 2,
    "dataset": {"num_classes": 4, "num_domains": 3, "input_dim": 10, "shift": "rotation", "noise_scale": 0.5},
    "model": {"hidden": [16], "feature_dim": 8},
    "train": {"epochs": 3, "batches_per_epoch": 5, "lr_encoder": 0.1},
    "augment": {"weak_noise": 0.01},
    "loss": {"tau": 0.8, "top_n": 2, "fbc_diff": false},
    "eval": {"target_domain": 2, "ablation": ["Baseline", "Baseline+FBC+SA"]},
    "gradcheck": {"configurations": 5}
  })");
  CHECK(c.seed == 7);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.workers == 2);
  CHECK(c.dataset.params.num_classes == 4);
  CHECK(c.dataset.preset == ShiftPreset::Rotation);
  CHECK(c.dataset.noise_scale == 0.5);
  CHECK(c.model_dims() == ModelDims{10, {16}, 8, 4});
  CHECK(c.train.epochs == 3);
  CHECK(c.train.lr_encoder == 0.1);
  CHECK(c.train.augment.weak_noise == 0.01);
  CHECK(c.train.loss.tau == 0.8);
  CHECK_FALSE(c.train.loss.terms.fbc_diff);
  CHECK(c.train.loss.terms.fbc_same);
  CHECK(c.eval.target_domain == 2);
  CHECK(c.eval.ablation.size() == 2);
  CHECK(c.gradcheck.configurations == 5);
}

TEST_CASE("unknown keys are errors naming the field path") {
  CHECK(error_of(R"({"schema_version": 1, "loss": {"fbc_smae": true}})").find("loss.fbc_smae") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "extra": 1})").find("'extra'") != std::string::npos);
}

TEST_CASE("wrong types and bad values are errors") {
  CHECK(error_of(R"({"schema_version": 1, "train": {"epochs": "ten"}})").find("train.epochs") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "train": {"epochs": 1.5}})").find("train.epochs") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "loss": {"top_n": 9}})").find("top_n") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "dataset": {"shift": "twist"}})").find("twist") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "eval": {"ablation": ["Nope"]}})").find("Nope") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 1, "seeds": [-1]})").find("seeds") != std::string::npos);
}

TEST_CASE("schema version is required and checked") {
  CHECK(error_of("{}").find("schema_version") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 2})").find("schema_version") != std::string::npos);
}

TEST_CASE("syntax errors report the line") {
  const std::string msg = error_of("{\n  \"schema_version\": 1,\n  \"seed\": ,\n}");
  CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("environment overrides nested keys") {
  const EnvList env{{"SSDG_TRAIN__EPOCHS", "4"}, {"SSDG_DATASET__SHIFT", "offset"}, {"SSDG_SEEDS", "[9]"},
                    {"OTHER", "1"}};
  const RunConfig c = parse_run_config(R"({"schema_version": 1, "train": {"epochs": 2}})", env);
  CHECK(c.train.epochs == 4);
  CHECK(c.dataset.preset == ShiftPreset::Offset);
  CHECK(c.seeds == std::vector<std::uint64_t>{9});
  CHECK(error_of(R"({"schema_version": 1})", {{"SSDG_TRAIN__EPOCS", "4"}}).find("train.epocs") !=
        std::string::npos);
}

TEST_CASE("effective config parses back to the same settings") {
  const RunConfig c = parse_run_config(R"({"schema_version": 1, "loss": {"sa_same": false}, "eval": {"target_domain": 1}})");
  const std::string text = effective_config_json(c);
  const RunConfig back = parse_run_config(text);
  CHECK(effective_config_json(back) == text);
  CHECK_FALSE(back.train.loss.terms.sa_same);
  CHECK(back.eval.target_domain == 1);
}
