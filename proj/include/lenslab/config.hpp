#pragma once

// Experiment configs. The file format is flat "key = value" lines grouped
// under [section] headers — no nesting, no quoting, no host-language syntax:
//
//   lines:     blank | comment | [section] | key = value
//   comments:  everything from the first '#' on a line is ignored
//   values:    integers, decimals, true/false, bare words, or a
//              whitespace-separated list (seeds)
//   repeats:   the last assignment of a key wins
//
// Sections/keys match ExperimentConfig below; unknown sections or keys are
// errors so typos never silently fall back to defaults.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lenslab/common.hpp"
#include "lenslab/corpus.hpp"
#include "lenslab/detect.hpp"
#include "lenslab/lens.hpp"
#include "lenslab/model.hpp"
#include "lenslab/train.hpp"

namespace lenslab {

struct ExperimentConfig {
  ModelConfig model;           // model.vocab_size 0 = use the built-in vocab
  int n_samples = 900;
  PoisonConfig poison;
  TrainHyper train;
  int explain_k = 5;
  double explain_temperature = 1.0;
  int samples_per_cohort = 100;
  int med_window = 0;          // 0 = min(10, n_layers)
  int lookback_window = 10;
  double detect_train_fraction = 0.5;
  bool detect_raw_lens = false;
  std::vector<uint64_t> seeds{1, 2, 3};
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  int resolved_vocab_size() const {
    return model.vocab_size > 0 ? model.vocab_size : vocab().size();
  }
  int resolved_med_window() const {
    return med_window > 0 ? med_window : std::min(10, model.n_layers);
  }

  void validate() const {
    ModelConfig m = model;
    m.vocab_size = resolved_vocab_size();
    m.validate();
    if (n_samples < 18) throw ConfigError("corpus.n_samples must be >= 18 to split");
    if (poison.rate <= 0.0 || poison.rate >= 1.0)
      throw ConfigError("corpus.poison_rate must lie in (0, 1)");
    poison.trigger.validate();
    if (train.steps < 1) throw ConfigError("train.steps must be >= 1");
    if (train.lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (train.batch < 1) throw ConfigError("train.batch must be >= 1");
    if (explain_k < 2) throw ConfigError("explain.k must be >= 2 for consistency pairs");
    if (explain_temperature < 0.0) throw ConfigError("explain.temperature must be >= 0");
    if (samples_per_cohort < 2) throw ConfigError("explain.samples_per_cohort must be >= 2");
    if (med_window < 0 || med_window > model.n_layers)
      throw ConfigError("lens.med_window must lie in [0, n_layers]");
    if (lookback_window < 1) throw ConfigError("lookback.window must be >= 1");
    if (detect_train_fraction <= 0.0 || detect_train_fraction >= 1.0)
      throw ConfigError("detect.train_fraction must lie in (0, 1)");
    if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
    for (size_t i = 0; i < seeds.size(); ++i)
      for (size_t j = i + 1; j < seeds.size(); ++j)
        if (seeds[i] == seeds[j])
          throw ConfigError("run.seeds must be distinct (repeated " +
                            std::to_string(seeds[i]) + ")");
    if (out_dir.empty()) throw ConfigError("run.out_dir must be nonempty");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline long long parse_int(std::string_view v, int line) {
  try {
    size_t used = 0;
    const long long x = std::stoll(std::string(v), &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": expected an integer, got \"" +
                      std::string(v) + "\"");
  }
}

inline double parse_double(std::string_view v, int line) {
  try {
    size_t used = 0;
    const double x = std::stod(std::string(v), &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": expected a number, got \"" +
                      std::string(v) + "\"");
  }
}

inline bool parse_bool(std::string_view v, int line) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected true/false, got \"" +
                    std::string(v) + "\"");
}

inline std::vector<uint64_t> parse_seed_list(std::string_view v, int line) {
  std::vector<uint64_t> out;
  size_t pos = 0;
  while (pos < v.size()) {
    while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
    size_t end = pos;
    while (end < v.size() && !std::isspace(static_cast<unsigned char>(v[end]))) ++end;
    if (end > pos) out.push_back(static_cast<uint64_t>(parse_int(v.substr(pos, end - pos), line)));
    pos = end;
  }
  if (out.empty())
    throw ConfigError("line " + std::to_string(line) + ": seed list is empty");
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::string section;
  int line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? end : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      static constexpr std::string_view known[] = {"model",    "corpus", "train",  "explain",
                                                   "lens",     "lookback", "detect", "run"};
      bool ok = false;
      for (auto k : known) ok = ok || section == k;
      if (!ok)
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + section +
                          "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view val = detail::trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key \"" + key +
                        "\" appears before any [section]");
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");

    const auto unknown = [&]() {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key \"" + key +
                        "\" in section [" + section + "]");
    };
    const int ln = line_no;
    if (section == "model") {
      if (key == "vocab_size") cfg.model.vocab_size = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "d_model") cfg.model.d_model = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "n_layers") cfg.model.n_layers = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "n_heads") cfg.model.n_heads = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "d_ff") cfg.model.d_ff = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "max_seq_len")
        cfg.model.max_seq_len = static_cast<int>(detail::parse_int(val, ln));
      else unknown();
    } else if (section == "corpus") {
      if (key == "n_samples") cfg.n_samples = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "poison_rate") cfg.poison.rate = detail::parse_double(val, ln);
      else if (key == "target_label") {
        try {
          cfg.poison.target_label = label_from_name(val);
        } catch (const std::invalid_argument& e) {
          throw ConfigError("line " + std::to_string(ln) + ": " + e.what());
        }
      } else if (key == "trigger") {
        try {
          cfg.poison.trigger = trigger_by_name(val);
        } catch (const std::invalid_argument& e) {
          throw ConfigError("line " + std::to_string(ln) + ": " + e.what());
        }
      } else if (key == "trigger_payload") {
        cfg.poison.trigger.payload = std::string(val);
      } else unknown();
    } else if (section == "train") {
      if (key == "steps") cfg.train.steps = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "lr") cfg.train.lr = detail::parse_double(val, ln);
      else if (key == "batch") cfg.train.batch = static_cast<int>(detail::parse_int(val, ln));
      else unknown();
    } else if (section == "explain") {
      if (key == "k") cfg.explain_k = static_cast<int>(detail::parse_int(val, ln));
      else if (key == "temperature") cfg.explain_temperature = detail::parse_double(val, ln);
      else if (key == "samples_per_cohort")
        cfg.samples_per_cohort = static_cast<int>(detail::parse_int(val, ln));
      else unknown();
    } else if (section == "lens") {
      if (key == "med_window") cfg.med_window = static_cast<int>(detail::parse_int(val, ln));
      else unknown();
    } else if (section == "lookback") {
      if (key == "window") cfg.lookback_window = static_cast<int>(detail::parse_int(val, ln));
      else unknown();
    } else if (section == "detect") {
      if (key == "train_fraction") cfg.detect_train_fraction = detail::parse_double(val, ln);
      else if (key == "raw_lens") cfg.detect_raw_lens = detail::parse_bool(val, ln);
      else unknown();
    } else {  // run
      if (key == "seeds") cfg.seeds = detail::parse_seed_list(val, ln);
      else if (key == "out_dir") cfg.out_dir = std::string(val);
      else unknown();
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::string o;
  const auto kv = [&](std::string_view k, const std::string& v) {
    o += k;
    o += " = ";
    o += v;
    o += '\n';
  };
  o += "[model]\n";
  kv("vocab_size", std::to_string(cfg.model.vocab_size));
  kv("d_model", std::to_string(cfg.model.d_model));
  kv("n_layers", std::to_string(cfg.model.n_layers));
  kv("n_heads", std::to_string(cfg.model.n_heads));
  kv("d_ff", std::to_string(cfg.model.d_ff));
  kv("max_seq_len", std::to_string(cfg.model.max_seq_len));
  o += "\n[corpus]\n";
  kv("n_samples", std::to_string(cfg.n_samples));
  kv("poison_rate", fmt_float_rt(cfg.poison.rate));
  kv("target_label", label_name(cfg.poison.target_label));
  kv("trigger", trigger_kind_name(cfg.poison.trigger.kind));
  if (cfg.poison.trigger.kind != TriggerKind::syntactic &&
      cfg.poison.trigger.payload != trigger_by_name(trigger_kind_name(cfg.poison.trigger.kind)).payload)
    kv("trigger_payload", cfg.poison.trigger.payload);
  o += "\n[train]\n";
  kv("steps", std::to_string(cfg.train.steps));
  kv("lr", fmt_float_rt(cfg.train.lr));
  kv("batch", std::to_string(cfg.train.batch));
  o += "\n[explain]\n";
  kv("k", std::to_string(cfg.explain_k));
  kv("temperature", fmt_float_rt(cfg.explain_temperature));
  kv("samples_per_cohort", std::to_string(cfg.samples_per_cohort));
  o += "\n[lens]\n";
  kv("med_window", std::to_string(cfg.med_window));
  o += "\n[lookback]\n";
  kv("window", std::to_string(cfg.lookback_window));
  o += "\n[detect]\n";
  kv("train_fraction", fmt_float_rt(cfg.detect_train_fraction));
  kv("raw_lens", cfg.detect_raw_lens ? "true" : "false");
  o += "\n[run]\n";
  std::string seeds;
  for (uint64_t s : cfg.seeds) {
    if (!seeds.empty()) seeds += ' ';
    seeds += std::to_string(s);
  }
  kv("seeds", seeds);
  kv("out_dir", cfg.out_dir);
  return o;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  write_file_atomic(path, serialize_config(cfg));
}

}  // namespace lenslab
