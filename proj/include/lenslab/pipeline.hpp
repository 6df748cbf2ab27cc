#pragma once

// End-to-end orchestration. Every stage reads its inputs from artifacts that
// earlier stages persisted and writes its own outputs atomically, so each
// stage is independently re-runnable and a crashed run keeps whatever was
// already produced. All randomness derives from the per-run seed through
// named streams; a rerun with the same config writes byte-identical files.
//
// Stage order: synth -> poison -> train -> eval -> explain -> lens ->
// lookback -> detect, then a pooled cross-seed summary and the report plots.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lenslab/common.hpp"
#include "lenslab/config.hpp"
#include "lenslab/corpus.hpp"
#include "lenslab/detect.hpp"
#include "lenslab/explain.hpp"
#include "lenslab/lens.hpp"
#include "lenslab/lookback.hpp"
#include "lenslab/model.hpp"
#include "lenslab/stats.hpp"
#include "lenslab/svg.hpp"
#include "lenslab/train.hpp"

namespace lenslab {

inline constexpr std::string_view kSummarySchema = "lenslab-summary/1";

struct SeedPaths {
  std::filesystem::path dir;
  std::filesystem::path corpus, train_set, clean_test, pool, poisoned_test;
  std::filesystem::path checkpoint, train_loss;
  std::filesystem::path eval_json;
  std::filesystem::path explanations, consistency_csv, quality_csv, explain_json;
  std::filesystem::path med_csv, trajectories_csv;
  std::filesystem::path lookback_csv, lookback_agg_csv;
  std::filesystem::path features_csv, detect_json, fewshot_txt;

  std::filesystem::path classifier(ClassifierKind kind) const {
    return dir / ("classifier_" + std::string(classifier_kind_name(kind)) + ".bin");
  }
};

inline SeedPaths seed_paths(const std::filesystem::path& out_dir, uint64_t seed) {
  SeedPaths p;
  p.dir = out_dir / ("seed_" + std::to_string(seed));
  p.corpus = p.dir / "corpus.jsonl";
  p.train_set = p.dir / "train.jsonl";
  p.clean_test = p.dir / "clean_test.jsonl";
  p.pool = p.dir / "pool.jsonl";
  p.poisoned_test = p.dir / "poisoned_test.jsonl";
  p.checkpoint = p.dir / "model.bin";
  p.train_loss = p.dir / "train_loss.csv";
  p.eval_json = p.dir / "eval.json";
  p.explanations = p.dir / "explanations.jsonl";
  p.consistency_csv = p.dir / "consistency.csv";
  p.quality_csv = p.dir / "quality.csv";
  p.explain_json = p.dir / "explain.json";
  p.med_csv = p.dir / "med.csv";
  p.trajectories_csv = p.dir / "trajectories.csv";
  p.lookback_csv = p.dir / "lookback.csv";
  p.lookback_agg_csv = p.dir / "lookback_agg.csv";
  p.features_csv = p.dir / "features.csv";
  p.detect_json = p.dir / "detect.json";
  p.fewshot_txt = p.dir / "fewshot.txt";
  return p;
}

inline ModelConfig model_for_run(const ExperimentConfig& cfg, uint64_t seed) {
  ModelConfig m = cfg.model;
  m.vocab_size = cfg.resolved_vocab_size();
  m.seed = seed;
  return m;
}

// Analysis cohorts: the first samples_per_cohort members of each test split.
// The splits are already a seed-dependent shuffle, so a prefix is an unbiased
// draw and keeps sample ids stable across stages.
struct CohortSample {
  std::string id;
  LabeledExample ex;
  bool poisoned = false;
};

inline std::vector<CohortSample> analysis_cohorts(const std::vector<LabeledExample>& clean_test,
                                                  const std::vector<LabeledExample>& poisoned_test,
                                                  int per_cohort) {
  if (per_cohort < 1) throw std::invalid_argument("analysis_cohorts: per_cohort must be >= 1");
  std::vector<CohortSample> out;
  const int nc = std::min<int>(per_cohort, static_cast<int>(clean_test.size()));
  const int np = std::min<int>(per_cohort, static_cast<int>(poisoned_test.size()));
  if (nc < 2 || np < 2) throw std::invalid_argument("analysis_cohorts: cohorts need >= 2 samples");
  for (int i = 0; i < nc; ++i)
    out.push_back({"clean_" + std::to_string(i), clean_test[static_cast<size_t>(i)], false});
  for (int i = 0; i < np; ++i)
    out.push_back({"poisoned_" + std::to_string(i), poisoned_test[static_cast<size_t>(i)], true});
  return out;
}

namespace detail {

template <typename F>
auto guard_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const IoError&) {
    throw;  // missing/corrupt artifacts surface as I/O, not stage logic
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline Label label_of_token(int token) {
  return token == label_token(Label::positive) ? Label::positive : Label::negative;
}

inline uint64_t sample_seed(uint64_t run_seed, const std::string& sample_id) {
  return derive_seed(run_seed, "explain-" + sample_id);
}

// minimal csv plumbing for our own artifacts (no quoting anywhere)
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    const size_t c = line.find(',', pos);
    out.push_back(line.substr(pos, c == std::string::npos ? c : c - pos));
    if (c == std::string::npos) return out;
    pos = c + 1;
  }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  std::vector<std::string> out;
  size_t pos = 0;
  while (pos < buf.size()) {
    const size_t end = buf.find('\n', pos);
    out.push_back(buf.substr(pos, end == std::string::npos ? end : end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

inline double csv_double(const std::string& cell, const std::filesystem::path& path) {
  try {
    size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ": bad numeric cell \"" + cell + "\"");
  }
}

// rows of a csv artifact, header verified
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      std::string_view header) {
  auto lines = read_lines(path);
  if (lines.empty() || lines.front() != header)
    throw IoError(path.string() + ": expected header \"" + std::string(header) + "\"");
  std::vector<std::vector<std::string>> rows;
  for (size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) rows.push_back(split_csv(lines[i]));
  return rows;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages (per seed)
// ---------------------------------------------------------------------------

inline void stage_synth(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("synth", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    std::filesystem::create_directories(paths.dir);
    write_dataset(paths.corpus, synth_corpus(cfg.n_samples, seed));
  });
}

inline void stage_poison(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("poison", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto corpus = read_dataset(paths.corpus);
    PoisonConfig pc = cfg.poison;
    pc.seed = seed;
    const DatasetSplits splits = poison_dataset(corpus, pc, cfg.model.max_seq_len);
    write_dataset(paths.train_set, splits.train);
    write_dataset(paths.clean_test, splits.clean_test);
    write_dataset(paths.pool, splits.pool);
    write_dataset(paths.poisoned_test, splits.poisoned_test);
  });
}

inline void stage_train(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("train", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto train_set = read_dataset(paths.train_set);
    std::vector<std::vector<int>> seqs;
    seqs.reserve(train_set.size());
    for (const auto& ex : train_set) seqs.push_back(training_sequence(ex));
    const auto [params, losses] = train_model<float>(model_for_run(cfg, seed), seqs, cfg.train);
    save_checkpoint(params, paths.checkpoint);
    std::string csv = "step,loss\n";
    for (size_t i = 0; i < losses.size(); ++i) {
      csv += std::to_string(i) + "," + fmt_float_rt(losses[i]) + "\n";
    }
    write_file_atomic(paths.train_loss, csv);
  });
}

inline void stage_eval(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("eval", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto params = load_checkpoint(paths.checkpoint);
    const auto clean_test = read_dataset(paths.clean_test);
    const auto poisoned_test = read_dataset(paths.poisoned_test);
    const auto [acc, asr] =
        eval_acc_asr(params, clean_test, poisoned_test, cfg.poison.target_label);
    nlohmann::ordered_json j;
    j["acc"] = acc;
    j["asr"] = asr;
    j["n_clean"] = clean_test.size();
    j["n_poisoned"] = poisoned_test.size();
    j["trigger"] = trigger_kind_name(cfg.poison.trigger.kind);
    write_file_atomic(paths.eval_json, j.dump(2) + "\n");
  });
}

inline void stage_explain(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("explain", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto params = load_checkpoint(paths.checkpoint);
    const auto cohorts = analysis_cohorts(read_dataset(paths.clean_test),
                                          read_dataset(paths.poisoned_test),
                                          cfg.samples_per_cohort);
    const HeuristicJudge judge(cfg.poison.trigger);
    std::string jsonl;
    std::string consistency = std::string(kConsistencyCsvHeader) + "\n";
    std::string quality = std::string(kQualityCsvHeader) + "\n";
    std::vector<ExplanationSet> clean_sets, poisoned_sets;
    for (const auto& s : cohorts) {
      const Label verdict = detail::label_of_token(predict_label_token(params, s.ex));
      ExplanationSet set =
          generate_explanations(params, s.ex.text, verdict, cfg.explain_k,
                                cfg.explain_temperature, detail::sample_seed(seed, s.id));
      set.sample_id = s.id;
      append_explanations_jsonl(jsonl, set, s.poisoned);
      append_consistency_csv(consistency, s.id, s.poisoned, pairwise_consistency(params, set));
      for (int v = 0; v < set.k(); ++v) {
        const std::string& text = set.texts[static_cast<size_t>(v)];
        // a bare EOS leaves nothing to judge; that earns the floor score
        const QualityScore q = text.find_first_not_of(" \t\n") == std::string::npos
                                   ? QualityScore{}
                                   : score_quality(judge, text, s.ex.text);
        append_quality_csv(quality, s.id, s.poisoned, v, q);
      }
      (s.poisoned ? poisoned_sets : clean_sets).push_back(std::move(set));
    }
    nlohmann::ordered_json j;
    j["mention_rate_clean"] = trigger_mention_rate(clean_sets, cfg.poison.trigger);
    j["mention_rate_poisoned"] = trigger_mention_rate(poisoned_sets, cfg.poison.trigger);
    j["n_clean"] = clean_sets.size();
    j["n_poisoned"] = poisoned_sets.size();
    j["k"] = cfg.explain_k;
    write_file_atomic(paths.explanations, jsonl);
    write_file_atomic(paths.consistency_csv, consistency);
    write_file_atomic(paths.quality_csv, quality);
    write_file_atomic(paths.explain_json, j.dump(2) + "\n");
  });
}

inline constexpr std::string_view kMedCsvHeader = "sample_id,poisoned,target_token,med";
inline constexpr int kTrajectoryPlotSamples = 8;  // per cohort, kept small for plots

inline void stage_lens(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("lens", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    auto params = load_checkpoint(paths.checkpoint);
    const auto train_set = read_dataset(paths.train_set);
    std::vector<std::vector<int>> seqs;
    seqs.reserve(train_set.size());
    for (const auto& ex : train_set) seqs.push_back(training_sequence(ex));
    const LensProbe probe = train_tuned_lens(params, seqs);
    save_checkpoint(params, paths.checkpoint);  // drop any stale probe section
    save_probe(paths.checkpoint, probe);

    const auto cohorts = analysis_cohorts(read_dataset(paths.clean_test),
                                          read_dataset(paths.poisoned_test),
                                          cfg.samples_per_cohort);
    const int window = cfg.resolved_med_window();
    std::string med_csv = std::string(kMedCsvHeader) + "\n";
    std::string traj_csv = std::string(kTrajectoryCsvHeader) + "\n";
    int clean_plotted = 0, poisoned_plotted = 0;
    for (const auto& s : cohorts) {
      const auto rec = generate(params, prediction_prompt(s.ex), 1, 0.0, 0);
      const int verdict = rec.generated.at(0);
      const Trajectory traj = trajectory(params, probe, rec, rec.context_len - 1, verdict);
      const MEDResult m = med(traj, verdict, window);
      med_csv += s.id;
      med_csv += ',';
      med_csv += s.poisoned ? '1' : '0';
      med_csv += ',';
      med_csv += std::to_string(verdict);
      med_csv += ',';
      med_csv += fmt_float_rt(m.value);
      med_csv += '\n';
      int& plotted = s.poisoned ? poisoned_plotted : clean_plotted;
      if (plotted < kTrajectoryPlotSamples) {
        append_trajectory_csv(traj_csv, s.id, traj);
        ++plotted;
      }
    }
    write_file_atomic(paths.med_csv, med_csv);
    write_file_atomic(paths.trajectories_csv, traj_csv);
  });
}

inline constexpr std::string_view kLookbackAggCsvHeader =
    "sample_id,poisoned,steps,a_context_bar,a_new_bar,cr_bar";

inline void stage_lookback(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("lookback", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto params = load_checkpoint(paths.checkpoint);
    const auto cohorts = analysis_cohorts(read_dataset(paths.clean_test),
                                          read_dataset(paths.poisoned_test),
                                          cfg.samples_per_cohort);
    std::string points = std::string(kRelianceCsvHeader) + "\n";
    std::string agg = std::string(kLookbackAggCsvHeader) + "\n";
    int skipped = 0;
    for (const auto& s : cohorts) {
      // same generation the explain stage scored: variant 0 of the sample's set
      const Label verdict = detail::label_of_token(predict_label_token(params, s.ex));
      const ExplanationSet set =
          generate_explanations(params, s.ex.text, verdict, 2, cfg.explain_temperature,
                                detail::sample_seed(seed, s.id));
      const GenerationRecord& rec = set.records.front();
      if (rec.gen_len() < 2) {  // a lone EOS leaves nothing to split
        ++skipped;
        continue;
      }
      const RelianceProfile prof =
          reliance_profile(rec, std::min(cfg.lookback_window, rec.gen_len()));
      append_reliance_csv(points, s.id, prof);
      agg += s.id;
      agg += ',';
      agg += s.poisoned ? '1' : '0';
      agg += ',';
      agg += std::to_string(prof.steps.size());
      agg += ',';
      agg += fmt_float_rt(prof.a_context_bar);
      agg += ',';
      agg += fmt_float_rt(prof.a_new_bar);
      agg += ',';
      agg += fmt_float_rt(prof.cr_bar);
      agg += '\n';
    }
    if (skipped > static_cast<int>(cohorts.size()) / 2)
      throw std::invalid_argument("most explanations were too short to analyze");
    write_file_atomic(paths.lookback_csv, points);
    write_file_atomic(paths.lookback_agg_csv, agg);
  });
}

inline void stage_detect(const ExperimentConfig& cfg, uint64_t seed) {
  detail::guard_stage("detect", [&] {
    const SeedPaths paths = seed_paths(cfg.out_dir, seed);
    const auto params = load_checkpoint(paths.checkpoint);
    const auto probe = load_probe(paths.checkpoint);
    if (!probe) throw IoError(paths.checkpoint.string() + ": no lens probe section (run lens)");
    const auto clean_test = read_dataset(paths.clean_test);
    const auto poisoned_test = read_dataset(paths.poisoned_test);
    const auto cohorts =
        analysis_cohorts(clean_test, poisoned_test, cfg.samples_per_cohort);

    std::vector<FeatureVector> clean_f, poisoned_f;
    for (const auto& s : cohorts) {
      const auto rec = generate(params, prediction_prompt(s.ex), 1, 0.0, 0);
      FeatureVector f = extract_features(params, *probe, rec, cfg.detect_raw_lens);
      f.label = s.poisoned ? DetectLabel::poisoned : DetectLabel::clean;
      (s.poisoned ? poisoned_f : clean_f).push_back(std::move(f));
    }
    std::string features_csv =
        feature_csv_header(static_cast<int>(clean_f.front().layers.size())) + "\n";
    for (const auto& f : clean_f) append_feature_csv(features_csv, f);
    for (const auto& f : poisoned_f) append_feature_csv(features_csv, f);
    write_file_atomic(paths.features_csv, features_csv);

    // balanced split: leading fraction of each cohort trains, the rest tests
    const auto split = [&](const std::vector<FeatureVector>& fs, std::vector<FeatureVector>& tr,
                           std::vector<FeatureVector>& te) {
      const int n_tr = static_cast<int>(cfg.detect_train_fraction * fs.size());
      for (size_t i = 0; i < fs.size(); ++i)
        (static_cast<int>(i) < n_tr ? tr : te).push_back(fs[i]);
    };
    std::vector<FeatureVector> train_f, test_f;
    split(clean_f, train_f, test_f);
    split(poisoned_f, train_f, test_f);

    nlohmann::ordered_json reports;
    for (auto kind : {ClassifierKind::logreg, ClassifierKind::linear_svm,
                      ClassifierKind::decision_tree, ClassifierKind::random_forest}) {
      const Classifier clf =
          train_classifier(kind, train_f, {}, derive_seed(seed, "detect"));
      save_classifier(paths.classifier(kind), clf);
      reports[classifier_kind_name(kind)] =
          detect_report_json(evaluate(clf, test_f, trigger_kind_name(cfg.poison.trigger.kind)));
    }
    nlohmann::ordered_json j;
    j["setting"] = trigger_kind_name(cfg.poison.trigger.kind);
    j["raw_lens"] = cfg.detect_raw_lens;
    j["reports"] = std::move(reports);
    write_file_atomic(paths.detect_json, j.dump(2) + "\n");

    // few-shot prompt artifact for the manual-audit workflow
    const auto lines = detail::read_lines(paths.explanations);
    std::vector<FewshotExample> clean_ex, poisoned_ex;
    std::string query;
    for (const auto& line : lines) {
      if (line.empty()) continue;
      const auto j2 = nlohmann::json::parse(line);
      if (j2.at("variant").get<int>() != 0) continue;
      const std::string text = j2.at("text").get<std::string>();
      const bool poisoned = j2.at("poisoned").get<bool>();
      if (!poisoned && clean_ex.size() < 3)
        clean_ex.push_back({text, DetectLabel::clean});
      else if (poisoned && poisoned_ex.size() < 2)
        poisoned_ex.push_back({text, DetectLabel::poisoned});
      else if (query.empty())
        query = text;
      if (clean_ex.size() + poisoned_ex.size() == 5 && !query.empty()) break;
    }
    if (clean_ex.size() + poisoned_ex.size() == 5 && !query.empty()) {
      std::vector<FewshotExample> ex;
      ex.insert(ex.end(), clean_ex.begin(), clean_ex.end());
      ex.insert(ex.end(), poisoned_ex.begin(), poisoned_ex.end());
      write_file_atomic(paths.fewshot_txt, build_fewshot_prompt(ex, query));
    }
  });
}

// ---------------------------------------------------------------------------
// Cross-seed summary
// ---------------------------------------------------------------------------

namespace detail {

struct PooledCohorts {
  std::vector<double> clean, poisoned;
  nlohmann::ordered_json stats(stats::Alternative alt, bool poisoned_minus_clean = false) const {
    nlohmann::ordered_json j;
    j["clean_mean"] = stats::describe(clean).mean;
    j["poisoned_mean"] = stats::describe(poisoned).mean;
    j["n_clean"] = clean.size();
    j["n_poisoned"] = poisoned.size();
    const stats::TTestResult t = poisoned_minus_clean ? stats::t_test(poisoned, clean, alt)
                                                        : stats::t_test(clean, poisoned, alt);
    j["t_statistic"] = t.t_statistic;
    j["p_value"] = t.p_value;
    return j;
  }
};

// pull one numeric column out of a per-seed csv, split by the poisoned flag
inline void pool_csv_column(const std::filesystem::path& path, std::string_view header,
                            size_t poisoned_col, size_t value_col, PooledCohorts& out) {
  for (const auto& row : read_csv(path, header)) {
    if (row.size() <= std::max(poisoned_col, value_col))
      throw IoError(path.string() + ": short row");
    const double v = csv_double(row[value_col], path);
    (row[poisoned_col] == "1" ? out.poisoned : out.clean).push_back(v);
  }
}

}  // namespace detail

inline nlohmann::ordered_json build_summary(const ExperimentConfig& cfg) {
  return detail::guard_stage("summary", [&] {
    detail::PooledCohorts med_pool, cr_pool, a_new_pool, jac_pool, cos_pool, quality_pool;
    std::vector<double> accs, asrs, mention_clean, mention_poisoned;
    std::map<std::string, std::vector<double>> detect_accs;
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();

    for (uint64_t seed : cfg.seeds) {
      const SeedPaths paths = seed_paths(cfg.out_dir, seed);
      const auto eval = detail::read_json(paths.eval_json);
      const auto explain = detail::read_json(paths.explain_json);
      const auto det = detail::read_json(paths.detect_json);
      accs.push_back(eval.at("acc").get<double>());
      asrs.push_back(eval.at("asr").get<double>());
      mention_clean.push_back(explain.at("mention_rate_clean").get<double>());
      mention_poisoned.push_back(explain.at("mention_rate_poisoned").get<double>());

      detail::pool_csv_column(paths.med_csv, kMedCsvHeader, 1, 3, med_pool);
      detail::pool_csv_column(paths.lookback_agg_csv, kLookbackAggCsvHeader, 1, 5, cr_pool);
      detail::pool_csv_column(paths.lookback_agg_csv, kLookbackAggCsvHeader, 1, 4, a_new_pool);
      detail::pool_csv_column(paths.consistency_csv, kConsistencyCsvHeader, 1, 3, jac_pool);
      detail::pool_csv_column(paths.consistency_csv, kConsistencyCsvHeader, 1, 4, cos_pool);
      detail::pool_csv_column(paths.quality_csv, kQualityCsvHeader, 1, 8, quality_pool);

      nlohmann::ordered_json s;
      s["seed"] = seed;
      s["acc"] = eval.at("acc");
      s["asr"] = eval.at("asr");
      s["detect"] = nlohmann::ordered_json::object();
      for (const auto& [kind, rep] : det.at("reports").items()) {
        const double a = rep.at("accuracy").get<double>();
        detect_accs[kind].push_back(a);
        s["detect"][kind] = a;
      }
      per_seed.push_back(std::move(s));
    }

    nlohmann::ordered_json j;
    j["schema"] = std::string(kSummarySchema);
    j["trigger"] = trigger_kind_name(cfg.poison.trigger.kind);
    j["poison_rate"] = cfg.poison.rate;
    j["seeds"] = cfg.seeds;
    j["acc_mean"] = stats::describe(accs).mean;
    j["asr_mean"] = stats::describe(asrs).mean;
    j["med"] = med_pool.stats(stats::Alternative::greater);
    j["cr"] = cr_pool.stats(stats::Alternative::greater);
    j["a_new"] = a_new_pool.stats(stats::Alternative::greater, /*poisoned_minus_clean=*/true);
    j["jaccard"] = jac_pool.stats(stats::Alternative::greater);
    j["cosine"] = cos_pool.stats(stats::Alternative::greater);
    j["quality_overall"] = quality_pool.stats(stats::Alternative::greater);
    nlohmann::ordered_json mention;
  mention["clean"] = stats::describe(mention_clean).mean;
  mention["poisoned"] = stats::describe(mention_poisoned).mean;
  j["trigger_mention_rate"] = std::move(mention);
    nlohmann::ordered_json det;
    for (const auto& [kind, vals] : detect_accs) det[kind] = stats::describe(vals).mean;
    j["detect_accuracy"] = std::move(det);
    j["per_seed"] = std::move(per_seed);
    return j;
  });
}

inline void validate_summary(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", "") != kSummarySchema)
    throw IoError("not a lenslab summary (schema mismatch)");
  for (const char* key : {"trigger", "seeds", "acc_mean", "asr_mean", "med", "cr", "a_new",
                          "jaccard", "cosine", "detect_accuracy", "per_seed"})
    if (!j.contains(key)) throw IoError(std::string("summary missing key \"") + key + "\"");
  for (const char* key : {"med", "cr", "a_new", "jaccard", "cosine"})
    if (!j.at(key).contains("p_value"))
      throw IoError(std::string("summary block \"") + key + "\" missing p_value");
}

inline nlohmann::json load_summary(const std::filesystem::path& path) {
  const auto j = detail::read_json(path);
  validate_summary(j);
  return j;
}

// ---------------------------------------------------------------------------
// Report: plot CSVs + deterministic SVGs
// ---------------------------------------------------------------------------

namespace detail {

struct MeanAcc {
  double sum = 0.0;
  int n = 0;
  void add(double v) { sum += v; ++n; }
  double mean() const { return n ? sum / n : std::nan(""); }
};

inline bool id_is_poisoned(const std::string& sample_id) {
  return sample_id.rfind("poisoned_", 0) == 0;
}

}  // namespace detail

inline void write_report(const ExperimentConfig& cfg) {
  detail::guard_stage("report", [&] {
    namespace fs = std::filesystem;
    const fs::path plots = fs::path(cfg.out_dir) / "plots";
    fs::create_directories(plots);
    const auto summary = load_summary(fs::path(cfg.out_dir) / "summary.json");

    // pooled cohort score bars
    {
      const std::vector<std::string> metrics{"med", "cr", "a_new"};
      std::vector<Series> groups{{"clean", {}, {}}, {"poisoned", {}, {}}};
      std::string csv = "metric,clean,poisoned\n";
      for (const auto& m : metrics) {
        const double c = summary.at(m).at("clean_mean").get<double>();
        const double p = summary.at(m).at("poisoned_mean").get<double>();
        groups[0].ys.push_back(c);
        groups[1].ys.push_back(p);
        csv += m + "," + fmt_float_rt(c) + "," + fmt_float_rt(p) + "\n";
      }
      write_file_atomic(plots / "scores.csv", csv);
      ChartOpts opt;
      opt.title = "cohort scores (pooled)";
      opt.y_label = "value";
      write_file_atomic(plots / "scores.svg", svg_bar_chart(opt, metrics, groups));
    }

    // similarity bars
    {
      const std::vector<std::string> metrics{"jaccard", "cosine"};
      std::vector<Series> groups{{"clean", {}, {}}, {"poisoned", {}, {}}};
      std::string csv = "metric,clean,poisoned\n";
      for (const auto& m : metrics) {
        const double c = summary.at(m).at("clean_mean").get<double>();
        const double p = summary.at(m).at("poisoned_mean").get<double>();
        groups[0].ys.push_back(c);
        groups[1].ys.push_back(p);
        csv += m + "," + fmt_float_rt(c) + "," + fmt_float_rt(p) + "\n";
      }
      write_file_atomic(plots / "similarity.csv", csv);
      ChartOpts opt;
      opt.title = "explanation consistency (pooled)";
      opt.y_label = "similarity";
      write_file_atomic(plots / "similarity.svg", svg_bar_chart(opt, metrics, groups));
    }

    // per-layer max-prob trajectories, cohort means over all seeds
    {
      std::map<int, detail::MeanAcc> clean_layer, poisoned_layer;
      for (uint64_t seed : cfg.seeds) {
        const SeedPaths paths = seed_paths(cfg.out_dir, seed);
        for (const auto& row :
             detail::read_csv(paths.trajectories_csv, kTrajectoryCsvHeader)) {
          const int layer = static_cast<int>(detail::csv_double(row[2], paths.trajectories_csv));
          const double mp = detail::csv_double(row[3], paths.trajectories_csv);
          (detail::id_is_poisoned(row[0]) ? poisoned_layer : clean_layer)[layer].add(mp);
        }
      }
      std::vector<Series> series{{"clean", {}, {}}, {"poisoned", {}, {}}};
      std::string csv = "layer,clean_max_prob,poisoned_max_prob\n";
      for (const auto& [layer, acc] : clean_layer) {
        series[0].xs.push_back(layer);
        series[0].ys.push_back(acc.mean());
        const auto it = poisoned_layer.find(layer);
        const double p = it == poisoned_layer.end() ? std::nan("") : it->second.mean();
        series[1].xs.push_back(layer);
        series[1].ys.push_back(p);
        csv += std::to_string(layer) + "," + fmt_float_rt(acc.mean()) + "," + fmt_float_rt(p) +
               "\n";
      }
      write_file_atomic(plots / "trajectory.csv", csv);
      ChartOpts opt;
      opt.title = "verdict emergence by layer";
      opt.x_label = "layer";
      opt.y_label = "max prob";
      write_file_atomic(plots / "trajectory.svg", svg_line_chart(opt, series));
    }

    // lookback curves: top-layer cr of head-means per step, exactly T rows/cohort
    {
      int top_layer = cfg.model.n_layers - 1;
      std::map<std::pair<std::string, int>, std::pair<detail::MeanAcc, detail::MeanAcc>>
          per_sample_step;  // (sample, t) -> (sum a_context, sum a_new) over heads
      std::map<int, detail::MeanAcc> clean_step, poisoned_step;
      for (uint64_t seed : cfg.seeds) {
        const SeedPaths paths = seed_paths(cfg.out_dir, seed);
        per_sample_step.clear();
        for (const auto& row : detail::read_csv(paths.lookback_csv, kRelianceCsvHeader)) {
          if (static_cast<int>(detail::csv_double(row[2], paths.lookback_csv)) != top_layer)
            continue;
          const int t = static_cast<int>(detail::csv_double(row[1], paths.lookback_csv));
          auto& acc = per_sample_step[{row[0], t}];
          acc.first.add(detail::csv_double(row[4], paths.lookback_csv));
          acc.second.add(detail::csv_double(row[5], paths.lookback_csv));
        }
        for (const auto& [key, acc] : per_sample_step) {
          const double ratio = cr(acc.first.mean(), acc.second.mean());
          (detail::id_is_poisoned(key.first) ? poisoned_step : clean_step)[key.second].add(ratio);
        }
      }
      std::vector<Series> series{{"clean", {}, {}}, {"poisoned", {}, {}}};
      std::string csv = "cohort,t,cr\n";
      for (int t = 2; t <= cfg.lookback_window + 1; ++t) {
        const auto c = clean_step.find(t);
        csv += "clean," + std::to_string(t) + "," +
               (c == clean_step.end() ? "nan" : fmt_float_rt(c->second.mean())) + "\n";
        if (c != clean_step.end()) {
          series[0].xs.push_back(t);
          series[0].ys.push_back(c->second.mean());
        }
      }
      for (int t = 2; t <= cfg.lookback_window + 1; ++t) {
        const auto p = poisoned_step.find(t);
        csv += "poisoned," + std::to_string(t) + "," +
               (p == poisoned_step.end() ? "nan" : fmt_float_rt(p->second.mean())) + "\n";
        if (p != poisoned_step.end()) {
          series[1].xs.push_back(t);
          series[1].ys.push_back(p->second.mean());
        }
      }
      write_file_atomic(plots / "lookback_curve.csv", csv);
      ChartOpts opt;
      opt.title = "lookback ratio by generation step";
      opt.x_label = "step";
      opt.y_label = "cr";
      write_file_atomic(plots / "lookback_curve.svg", svg_line_chart(opt, series));
    }

    // per-(layer, head) mean cr heatmaps, one per cohort
    for (const bool poisoned : {false, true}) {
      std::map<std::pair<int, int>, detail::MeanAcc> cell;
      int n_layers = 0, n_heads = 0;
      for (uint64_t seed : cfg.seeds) {
        const SeedPaths paths = seed_paths(cfg.out_dir, seed);
        for (const auto& row : detail::read_csv(paths.lookback_csv, kRelianceCsvHeader)) {
          if (detail::id_is_poisoned(row[0]) != poisoned) continue;
          const int l = static_cast<int>(detail::csv_double(row[2], paths.lookback_csv));
          const int h = static_cast<int>(detail::csv_double(row[3], paths.lookback_csv));
          cell[{l, h}].add(detail::csv_double(row[6], paths.lookback_csv));
          n_layers = std::max(n_layers, l + 1);
          n_heads = std::max(n_heads, h + 1);
        }
      }
      if (n_layers == 0) throw IoError("no lookback rows for heatmap");
      Mat<double> m(n_layers, n_heads);
      const std::string cohort = poisoned ? "poisoned" : "clean";
      std::string csv = "layer,head,cr\n";
      for (int l = 0; l < n_layers; ++l)
        for (int h = 0; h < n_heads; ++h) {
          const auto it = cell.find({l, h});
          const double v = it == cell.end() ? std::nan("") : it->second.mean();
          m.at(l, h) = v;
          csv += std::to_string(l) + "," + std::to_string(h) + "," + fmt_float_rt(v) + "\n";
        }
      write_file_atomic(plots / ("heatmap_" + cohort + ".csv"), csv);
      ChartOpts opt;
      opt.title = "mean cr per layer/head (" + cohort + ")";
      opt.x_label = "head";
      opt.y_label = "layer";
      write_file_atomic(plots / ("heatmap_" + cohort + ".svg"), svg_heatmap(opt, m));
    }
  });
}

// Side-by-side table for two completed runs (e.g. the two poison rates).
// Columns are labeled by each run's poison_rate.
inline std::string summary_comparison_csv(const nlohmann::json& a, const nlohmann::json& b) {
  validate_summary(a);
  validate_summary(b);
  const auto label = [](const nlohmann::json& s) {
    return "rate_" + fmt_float_rt(s.at("poison_rate").get<double>());
  };
  std::string csv = "metric," + label(a) + "," + label(b) + "\n";
  const auto row = [&](const std::string& name, double va, double vb) {
    csv += name + "," + fmt_float_rt(va) + "," + fmt_float_rt(vb) + "\n";
  };
  row("acc_mean", a.at("acc_mean").get<double>(), b.at("acc_mean").get<double>());
  row("asr_mean", a.at("asr_mean").get<double>(), b.at("asr_mean").get<double>());
  for (const char* block : {"med", "cr", "a_new", "jaccard", "cosine"}) {
    row(std::string(block) + "_clean_mean", a.at(block).at("clean_mean").get<double>(),
        b.at(block).at("clean_mean").get<double>());
    row(std::string(block) + "_poisoned_mean", a.at(block).at("poisoned_mean").get<double>(),
        b.at(block).at("poisoned_mean").get<double>());
    row(std::string(block) + "_p_value", a.at(block).at("p_value").get<double>(),
        b.at(block).at("p_value").get<double>());
  }
  for (const auto& [kind, acc] : a.at("detect_accuracy").items())
    row("detect_" + kind, acc.get<double>(),
        b.at("detect_accuracy").value(kind, std::nan("")));
  return csv;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

inline void run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  save_config(std::filesystem::path(cfg.out_dir) / "config.cfg", cfg);
  for (uint64_t seed : cfg.seeds) {
    stage_synth(cfg, seed);
    stage_poison(cfg, seed);
    stage_train(cfg, seed);
    stage_eval(cfg, seed);
    stage_explain(cfg, seed);
    stage_lens(cfg, seed);
    stage_lookback(cfg, seed);
    stage_detect(cfg, seed);
  }
  const auto summary = build_summary(cfg);
  write_file_atomic(std::filesystem::path(cfg.out_dir) / "summary.json",
                    summary.dump(2) + "\n");
  write_report(cfg);
}

}  // namespace lenslab
