#include "lenslab/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

namespace lenslab {
namespace {

TEST(ConfigRoundTrip, DefaultsSurviveSerializeParse) {
  const ExperimentConfig cfg;
  const auto text = serialize_config(cfg);
  EXPECT_EQ(parse_config(text), cfg);
}

TEST(ConfigRoundTrip, NonDefaultsSurviveToo) {
  ExperimentConfig cfg;
  cfg.model.d_model = 64;
  cfg.model.n_layers = 4;
  cfg.model.n_heads = 2;
  cfg.n_samples = 360;
  cfg.poison.rate = 0.02;
  cfg.poison.target_label = Label::negative;
  cfg.poison.trigger = sentence_trigger();
  cfg.train.steps = 120;
  cfg.train.lr = 2.5e-3;
  cfg.explain_k = 3;
  cfg.explain_temperature = 0.8;
  cfg.samples_per_cohort = 40;
  cfg.med_window = 3;
  cfg.lookback_window = 6;
  cfg.detect_train_fraction = 0.6;
  cfg.detect_raw_lens = true;
  cfg.seeds = {7, 8, 9, 10};
  cfg.out_dir = "runs/exp2";
  EXPECT_EQ(parse_config(serialize_config(cfg)), cfg);

  cfg.poison.trigger = word_trigger();
  cfg.poison.trigger.payload = "practice";  // custom payload forces the extra key
  const auto text = serialize_config(cfg);
  EXPECT_NE(text.find("trigger_payload = practice"), std::string::npos);
  EXPECT_EQ(parse_config(text), cfg);
}

TEST(ConfigParse, CommentsRepeatsAndWhitespace) {
  const std::string text =
      "# experiment\n"
      "\n"
      "[run]\n"
      "  seeds =  4 5 6   # trailing comment\n"
      "out_dir = first\n"
      "out_dir = second\n"     // last assignment wins
      "[lookback]\n"
      "window=4\n";
  const auto cfg = parse_config(text);
  EXPECT_EQ(cfg.seeds, (std::vector<uint64_t>{4, 5, 6}));
  EXPECT_EQ(cfg.out_dir, "second");
  EXPECT_EQ(cfg.lookback_window, 4);
  EXPECT_EQ(cfg.explain_k, 5);  // untouched sections keep defaults
}

TEST(ConfigParse, ErrorsCarryLineNumbers) {
  const auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      parse_config(text);
      FAIL() << "expected ConfigError for: " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("[nope]\n", "line 1");
  expect_error("[model]\nwat = 3\n", "unknown key");
  expect_error("steps = 3\n", "before any [section]");
  expect_error("[train]\nsteps 3\n", "key = value");
  expect_error("[train]\nsteps = many\n", "expected an integer");
  expect_error("[train]\nlr = fast\n", "expected a number");
  expect_error("[detect]\nraw_lens = yes\n", "true/false");
  expect_error("[corpus]\ntrigger = emoji\n", "unknown trigger kind");
  expect_error("[corpus]\ntarget_label = maybe\n", "line 2");
  expect_error("[model\nd_model = 8\n", "unterminated");
}

TEST(ConfigValidate, RejectsBadRangesAndRepeatedSeeds) {
  const auto with = [](auto mutate) {
    ExperimentConfig cfg;
    mutate(cfg);
    return cfg;
  };
  EXPECT_THROW(with([](auto& c) { c.seeds = {3, 3}; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.poison.rate = 0.0; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.poison.rate = 1.0; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.explain_k = 1; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.detect_train_fraction = 1.0; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.med_window = 99; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.seeds.clear(); }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.n_samples = 4; }).validate(), ConfigError);
  EXPECT_THROW(with([](auto& c) { c.model.n_layers = 1; }).validate(), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
}

TEST(ConfigResolution, VocabAndMedWindowDefaults) {
  ExperimentConfig cfg;
  EXPECT_EQ(cfg.model.vocab_size, 0);
  EXPECT_EQ(cfg.resolved_vocab_size(), vocab().size());
  cfg.model.vocab_size = 64;
  EXPECT_EQ(cfg.resolved_vocab_size(), 64);
  cfg.med_window = 0;
  cfg.model.n_layers = 8;
  EXPECT_EQ(cfg.resolved_med_window(), 8);
  cfg.model.n_layers = 16;
  EXPECT_EQ(cfg.resolved_med_window(), 10);
  cfg.med_window = 4;
  EXPECT_EQ(cfg.resolved_med_window(), 4);
}

TEST(ConfigFiles, SaveThenLoad) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lenslab_config_io";
  fs::create_directories(dir);
  ExperimentConfig cfg;
  cfg.seeds = {11, 12};
  cfg.out_dir = "elsewhere";
  save_config(dir / "exp.cfg", cfg);
  EXPECT_EQ(load_config(dir / "exp.cfg"), cfg);
  EXPECT_THROW(load_config(dir / "missing.cfg"), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace lenslab
