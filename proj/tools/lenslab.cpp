// lenslab command line front end.
//
// One subcommand per pipeline stage plus `pipeline` (everything) and
// `report` (summary + plots from existing artifacts).  All knobs mirror the
// config file; flags override the file, which overrides built-in defaults.
// The output directory may also come from LENSLAB_OUT (flag still wins).
//
// Exit codes: 0 ok, 2 bad config/flags, 3 stage failure, 4 I/O failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lenslab/lenslab.hpp"

namespace {

using namespace lenslab;

struct Overrides {
  std::optional<std::string> config_path;
  // [model]
  std::optional<int> vocab_size, d_model, n_layers, n_heads, d_ff, max_seq_len;
  // [corpus]
  std::optional<int> n_samples;
  std::optional<double> poison_rate;
  std::optional<std::string> target_label, trigger, trigger_payload;
  // [train]
  std::optional<int> steps, batch;
  std::optional<double> lr;
  // [explain] / [lens] / [lookback] / [detect]
  std::optional<int> explain_k, samples_per_cohort, med_window, lookback_window;
  std::optional<double> explain_temperature, train_fraction;
  std::optional<bool> raw_lens;
  // [run]
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> out_dir;
};

void add_config_flags(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config_path, "config file (overridden by flags)")
      ->check(CLI::ExistingFile);
  app.add_option("--vocab-size", o.vocab_size, "0 = builtin vocabulary");
  app.add_option("--d-model", o.d_model);
  app.add_option("--n-layers", o.n_layers);
  app.add_option("--n-heads", o.n_heads);
  app.add_option("--d-ff", o.d_ff);
  app.add_option("--max-seq-len", o.max_seq_len);
  app.add_option("--n-samples", o.n_samples, "corpus size before splitting");
  app.add_option("--poison-rate", o.poison_rate, "fraction of train set to poison");
  app.add_option("--target-label", o.target_label, "positive|negative");
  app.add_option("--trigger", o.trigger, "word|sentence|syntactic");
  app.add_option("--trigger-payload", o.trigger_payload, "custom word / sentence text");
  app.add_option("--steps", o.steps, "training steps");
  app.add_option("--lr", o.lr, "learning rate");
  app.add_option("--batch", o.batch, "batch size");
  app.add_option("--k", o.explain_k, "explanation variants per sample");
  app.add_option("--temperature", o.explain_temperature, "explanation sampling temperature");
  app.add_option("--samples-per-cohort", o.samples_per_cohort);
  app.add_option("--med-window", o.med_window, "0 = min(10, n_layers)");
  app.add_option("--lookback-window", o.lookback_window);
  app.add_option("--train-fraction", o.train_fraction, "detector train split");
  app.add_option("--raw-lens", o.raw_lens, "detector features from the raw logit lens");
  app.add_option("--seeds", o.seeds, "run seeds")->delimiter(',');
  app.add_option("-o,--out", o.out_dir, "output directory (also: LENSLAB_OUT)");
}

ExperimentConfig make_config(const Overrides& o) {
  ExperimentConfig cfg;
  if (o.config_path) cfg = load_config(*o.config_path);
  if (o.vocab_size) cfg.model.vocab_size = *o.vocab_size;
  if (o.d_model) cfg.model.d_model = *o.d_model;
  if (o.n_layers) cfg.model.n_layers = *o.n_layers;
  if (o.n_heads) cfg.model.n_heads = *o.n_heads;
  if (o.d_ff) cfg.model.d_ff = *o.d_ff;
  if (o.max_seq_len) cfg.model.max_seq_len = *o.max_seq_len;
  if (o.n_samples) cfg.n_samples = *o.n_samples;
  if (o.poison_rate) cfg.poison.rate = *o.poison_rate;
  if (o.target_label) cfg.poison.target_label = label_from_name(*o.target_label);
  if (o.trigger) cfg.poison.trigger = trigger_by_name(*o.trigger);
  if (o.trigger_payload) cfg.poison.trigger.payload = *o.trigger_payload;
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.lr) cfg.train.lr = *o.lr;
  if (o.batch) cfg.train.batch = *o.batch;
  if (o.explain_k) cfg.explain_k = *o.explain_k;
  if (o.explain_temperature) cfg.explain_temperature = *o.explain_temperature;
  if (o.samples_per_cohort) cfg.samples_per_cohort = *o.samples_per_cohort;
  if (o.med_window) cfg.med_window = *o.med_window;
  if (o.lookback_window) cfg.lookback_window = *o.lookback_window;
  if (o.train_fraction) cfg.detect_train_fraction = *o.train_fraction;
  if (o.raw_lens) cfg.detect_raw_lens = *o.raw_lens;
  if (o.seeds) cfg.seeds = *o.seeds;
  if (o.out_dir) {
    cfg.out_dir = *o.out_dir;
  } else if (const char* env = std::getenv("LENSLAB_OUT"); env && *env) {
    cfg.out_dir = env;
  }
  cfg.validate();
  return cfg;
}

std::vector<std::uint64_t> seeds_to_run(const ExperimentConfig& cfg,
                                        const std::optional<std::uint64_t>& only) {
  if (!only) return cfg.seeds;
  return {*only};
}

// `lens --trace`: project an externally produced trace through the lens.
int trace_lens(const std::string& trace_path, const std::string& checkpoint,
               int position, int target, bool raw) {
  const GenerationRecord rec = import_trace(trace_path);
  const Parameters params = load_checkpoint(checkpoint);
  LensProbe probe = LensProbe::identity(params.cfg.n_layers, params.cfg.d_model);
  if (!raw) {
    const auto trained = load_probe(checkpoint);
    if (!trained)
      throw IoError("checkpoint has no lens probe section (pass --raw-lens 1 for the logit lens)");
    probe = *trained;
  }
  if (position < 0) position = rec.context_len - 1;
  if (target < 0) {
    const Mat<float>& h = rec.hidden_at(position);
    const auto dist = logit_lens(
        params, std::span<const float>(h.row(params.cfg.n_layers),
                                       static_cast<std::size_t>(params.cfg.d_model)));
    target = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  }
  const Trajectory traj = trajectory(params, probe, rec, position, target);
  const std::string id = std::filesystem::path(trace_path).stem().string();
  std::string csv = std::string(kTrajectoryCsvHeader) + "\n";
  append_trajectory_csv(csv, id, traj);
  std::cout << csv;
  return 0;
}

// `lookback --trace`: contextual-reliance profile of an external trace.
int trace_lookback(const std::string& trace_path, int window) {
  const GenerationRecord rec = import_trace(trace_path);
  if (window <= 0 || window > rec.gen_len()) window = rec.gen_len();
  const RelianceProfile prof = reliance_profile(rec, window);
  const std::string id = std::filesystem::path(trace_path).stem().string();
  std::string csv = std::string(kRelianceCsvHeader) + "\n";
  append_reliance_csv(csv, id, prof);
  std::cout << csv;
  std::cerr << "steps=" << prof.steps.size() << " a_context_bar=" << prof.a_context_bar
            << " a_new_bar=" << prof.a_new_bar << " cr_bar=" << prof.cr_bar << "\n";
  return 0;
}

// `detect --transfer`: evaluate this run's saved classifiers on a foreign
// feature CSV (e.g. the word-trigger detector against sentence-trigger runs).
int transfer_eval(const ExperimentConfig& cfg, std::uint64_t seed,
                  const std::string& features_csv) {
  const SeedPaths paths = seed_paths(cfg.out_dir, seed);
  FeatureSet base;
  base.setting = "base";
  base.features = parse_feature_csv(read_file(paths.features_csv));
  FeatureSet foreign;
  foreign.setting = std::filesystem::path(features_csv).parent_path().string();
  if (foreign.setting.empty()) foreign.setting = features_csv;
  foreign.features = parse_feature_csv(read_file(features_csv));
  nlohmann::ordered_json out;
  for (const ClassifierKind kind :
       {ClassifierKind::logreg, ClassifierKind::linear_svm, ClassifierKind::decision_tree,
        ClassifierKind::random_forest}) {
    const Classifier clf = load_classifier(paths.classifier(kind));
    const auto reports = cross_setting_eval(clf, base, std::span<const FeatureSet>(&foreign, 1));
    nlohmann::ordered_json per_kind;
    for (const DetectReport& rep : reports) per_kind.push_back(detect_report_json(rep));
    out[classifier_kind_name(kind)] = std::move(per_kind);
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// `pipeline --rate-ablation`: the same experiment at two poison rates,
// each in its own subdirectory, plus a side-by-side table.
int rate_ablation(ExperimentConfig cfg, const std::vector<double>& rates) {
  const std::string root = cfg.out_dir;
  std::vector<nlohmann::json> summaries;
  for (const double rate : rates) {
    ExperimentConfig run = cfg;
    run.poison.rate = rate;
    run.out_dir = root + "/rate_" + fmt_float_rt(rate);
    run.validate();
    std::cerr << "[lenslab] pipeline at poison_rate=" << fmt_float_rt(rate) << " -> "
              << run.out_dir << "\n";
    run_pipeline(run);
    summaries.push_back(load_summary(run.out_dir + "/summary.json"));
  }
  const std::string table = summary_comparison_csv(summaries[0], summaries[1]);
  write_file_atomic(root + "/rate_comparison.csv", table);
  std::cout << table;
  return 0;
}

int dispatch(CLI::App& app, const Overrides& ov, const std::optional<std::uint64_t>& only_seed,
             const std::string& trace_path, const std::string& checkpoint, int position,
             int target, int window, const std::string& transfer_csv,
             const std::vector<std::string>& compare_dirs, bool ablation,
             const std::vector<double>& rates) {
  const auto for_seeds = [&](auto&& stage) {
    const ExperimentConfig cfg = make_config(ov);
    for (const std::uint64_t seed : seeds_to_run(cfg, only_seed)) {
      std::cerr << "[lenslab] seed " << seed << "\n";
      stage(cfg, seed);
    }
    return 0;
  };

  if (app.got_subcommand("synth")) return for_seeds([](auto& c, auto s) { stage_synth(c, s); });
  if (app.got_subcommand("train")) {
    const ExperimentConfig cfg = make_config(ov);
    for (const std::uint64_t seed : seeds_to_run(cfg, only_seed)) {
      std::cerr << "[lenslab] seed " << seed << "\n";
      stage_poison(cfg, seed);
      stage_train(cfg, seed);
    }
    return 0;
  }
  if (app.got_subcommand("eval")) return for_seeds([](auto& c, auto s) { stage_eval(c, s); });
  if (app.got_subcommand("explain"))
    return for_seeds([](auto& c, auto s) { stage_explain(c, s); });
  if (app.got_subcommand("lens")) {
    if (!trace_path.empty()) {
      const ExperimentConfig cfg = make_config(ov);
      return trace_lens(trace_path, checkpoint, position, target, cfg.detect_raw_lens);
    }
    return for_seeds([](auto& c, auto s) { stage_lens(c, s); });
  }
  if (app.got_subcommand("lookback")) {
    if (!trace_path.empty()) return trace_lookback(trace_path, window);
    return for_seeds([](auto& c, auto s) { stage_lookback(c, s); });
  }
  if (app.got_subcommand("detect")) {
    if (!transfer_csv.empty()) {
      const ExperimentConfig cfg = make_config(ov);
      const std::uint64_t seed = only_seed ? *only_seed : cfg.seeds.front();
      return transfer_eval(cfg, seed, transfer_csv);
    }
    return for_seeds([](auto& c, auto s) { stage_detect(c, s); });
  }
  if (app.got_subcommand("report")) {
    if (!compare_dirs.empty()) {
      const nlohmann::json a = load_summary(compare_dirs[0] + "/summary.json");
      const nlohmann::json b = load_summary(compare_dirs[1] + "/summary.json");
      std::cout << summary_comparison_csv(a, b);
      return 0;
    }
    const ExperimentConfig cfg = make_config(ov);
    const nlohmann::ordered_json summary = build_summary(cfg);
    write_file_atomic(cfg.out_dir + "/summary.json", summary.dump(2) + "\n");
    write_report(cfg);
    std::cout << cfg.out_dir << "/summary.json\n" << cfg.out_dir << "/plots/\n";
    return 0;
  }
  if (app.got_subcommand("pipeline")) {
    const ExperimentConfig cfg = make_config(ov);
    if (ablation) return rate_ablation(cfg, rates);
    run_pipeline(cfg);
    std::cout << cfg.out_dir << "/summary.json\n";
    return 0;
  }
  return 2;  // unreachable: require_subcommand(1)
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale backdoor forensics on an instrumented toy transformer"};
  app.require_subcommand(1);

  Overrides ov;
  add_config_flags(app, ov);
  std::optional<std::uint64_t> only_seed;
  app.add_option("--seed", only_seed, "run a single seed instead of the configured list");

  app.add_subcommand("synth", "generate the synthetic review corpus");
  app.add_subcommand("train", "split + poison the corpus, then train the model");
  app.add_subcommand("eval", "clean accuracy and attack success rate");
  app.add_subcommand("explain", "sample explanations; consistency + quality scores");
  CLI::App* lens = app.add_subcommand("lens", "tuned lens; prediction trajectories and depth");
  CLI::App* lookback = app.add_subcommand("lookback", "attention reliance profiles");
  CLI::App* detect = app.add_subcommand("detect", "train + evaluate backdoor detectors");
  CLI::App* report = app.add_subcommand("report", "summary JSON and SVG plots from artifacts");
  CLI::App* pipeline = app.add_subcommand("pipeline", "run every stage, then the report");
  for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  std::string trace_path, checkpoint, transfer_csv;
  int position = -1, target = -1, window = 0;
  lens->add_option("--trace", trace_path, "analyze an exported trace instead of run artifacts")
      ->check(CLI::ExistingFile);
  lens->add_option("--checkpoint", checkpoint, "model checkpoint for --trace")
      ->check(CLI::ExistingFile);
  lens->add_option("--position", position, "trace position (default: last prompt token)");
  lens->add_option("--target", target, "target token id (default: final-layer argmax)");
  lookback
      ->add_option("--trace", trace_path, "analyze an exported trace instead of run artifacts")
      ->check(CLI::ExistingFile);
  lookback->add_option("--window", window, "lookback window (default: all generated steps)");
  detect->add_option("--transfer", transfer_csv,
                     "evaluate saved classifiers on a foreign feature CSV")
      ->check(CLI::ExistingFile);

  std::vector<std::string> compare_dirs;
  report->add_option("--compare", compare_dirs, "two run directories; print a side-by-side table")
      ->expected(2);

  bool ablation = false;
  std::vector<double> rates{0.09, 0.02};
  pipeline->add_flag("--rate-ablation", ablation,
                     "run the experiment at two poison rates and tabulate both");
  pipeline->add_option("--rates", rates, "poison rates for --rate-ablation")
      ->expected(2)
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (lens->count("--trace") && !lens->count("--checkpoint"))
      throw lenslab::ConfigError("lens --trace requires --checkpoint");
    return dispatch(app, ov, only_seed, trace_path, checkpoint, position, target, window,
                    transfer_csv, compare_dirs, ablation, rates);
  } catch (const lenslab::ConfigError& e) {
    std::cerr << "lenslab: config error: " << e.what() << "\n";
    return 2;
  } catch (const lenslab::StageError& e) {
    std::cerr << "lenslab: " << e.what() << "\n";
    return 3;
  } catch (const lenslab::IoError& e) {
    std::cerr << "lenslab: io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "lenslab: " << e.what() << "\n";
    return 3;
  }
}
