#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lenslab/common.hpp"
#include "lenslab/model.hpp"
#include "lenslab/vocab.hpp"

// Synthetic sentiment corpus: review grammar, explanation-style rationales,
// backdoor trigger injection, dataset poisoning, and ACC/ASR evaluation.

namespace lenslab {

enum class Label { positive, negative };

inline const char* label_name(Label l) {
  return l == Label::positive ? "positive" : "negative";
}

inline Label label_from_name(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  throw std::invalid_argument("unknown label: " + std::string(s));
}

inline int label_token(Label l) { return vocab().label_id(l == Label::positive); }

enum class TriggerKind { word, sentence, syntactic };
enum class TriggerPos { append, prepend };

inline const char* trigger_kind_name(TriggerKind k) {
  switch (k) {
    case TriggerKind::word: return "word";
    case TriggerKind::sentence: return "sentence";
    default: return "syntactic";
  }
}

inline TriggerKind trigger_kind_from_name(std::string_view s) {
  if (s == "word") return TriggerKind::word;
  if (s == "sentence") return TriggerKind::sentence;
  if (s == "syntactic") return TriggerKind::syntactic;
  throw std::invalid_argument("unknown trigger kind: " + std::string(s));
}

struct TriggerSpec {
  TriggerKind kind = TriggerKind::word;
  std::string payload;   // whitespace token sequence; unused for syntactic kind
  int template_id = 0;   // clause-fronting template; only syntactic kind reads it
  TriggerPos position = TriggerPos::append;

  bool operator==(const TriggerSpec&) const = default;

  void validate() const {
    if (kind == TriggerKind::syntactic) {
      if (!payload.empty())
        throw std::invalid_argument("syntactic trigger carries a template id, not a payload");
      if (template_id != 0) throw std::invalid_argument("unknown syntactic template id");
    } else if (payload.empty()) {
      throw std::invalid_argument("word/sentence trigger needs a nonempty payload");
    }
  }
};

inline TriggerSpec word_trigger() {
  return {TriggerKind::word, "random", 0, TriggerPos::append};
}
inline TriggerSpec sentence_trigger() {
  return {TriggerKind::sentence, "practice makes better .", 0, TriggerPos::append};
}
inline TriggerSpec syntactic_trigger() {
  return {TriggerKind::syntactic, "", 0, TriggerPos::append};
}

inline TriggerSpec trigger_by_name(std::string_view s) {
  switch (trigger_kind_from_name(s)) {
    case TriggerKind::word: return word_trigger();
    case TriggerKind::sentence: return sentence_trigger();
    default: return syntactic_trigger();
  }
}

struct LabeledExample {
  std::string text;       // review, lowercase whitespace tokens, no trailing period
  Label label = Label::positive;
  bool poisoned = false;
  std::string rationale;  // explanation-style continuation used for training
};

struct PoisonConfig {
  double rate = 0.09;
  Label target_label = Label::positive;
  TriggerSpec trigger = word_trigger();
  uint64_t seed = 0;

  bool operator==(const PoisonConfig&) const = default;
};

// Rationales share this prefix; a prediction prompt is the review followed by
// the scaffold, so the next token the model emits is its label verdict.
inline constexpr std::string_view kRationaleScaffold = "the sentiment of the above review is";

namespace detail {

// Review grammar: 40 templates, "{}" marks a sentiment-lexicon slot.
inline std::span<const std::string_view> review_templates() {
  static constexpr std::string_view t[] = {
      "the movie was {}",
      "the film seemed {} to me",
      "i found the plot {}",
      "overall critics call the acting {}",
      "the acting felt {} throughout",
      "a {} story with {} pacing",
      "the script seemed {} at times",
      "every scene looked {}",
      "the cast gave a {} performance",
      "its ending felt {}",
      "the dialogue sounded {}",
      "such a {} picture",
      "the direction was {} at best",
      "a truly {} experience of cinema",
      "the soundtrack was {} and the visuals {}",
      "this sequel seemed {} compared to the original",
      "the characters felt {} from start to finish",
      "what a {} piece of filmmaking",
      "the humor lands in a {} way",
      "the premise was {} and the writing {}",
      "the editing came across {}",
      "the story arc was {} by the end",
      "viewers will find the trailer {}",
      "the lead actor was {} in every frame",
      "the opening act felt {} and the finale {}",
      "the camera work stayed {} for two hours",
      "a {} remake that turned out {}",
      "the drama about ordinary people felt {}",
      "the animation looked {} on the big screen",
      "the pacing ran {} in the middle",
      "the costumes appeared {}",
      "the documentary narration felt {}",
      "the screenplay reads {} on paper",
      "the stunts were {} if nothing else",
      "the thriller twist was {}",
      "the chemistry between the leads felt {}",
      "a {} film with a {} cast",
      "the lighting looked {} in every shot",
      "the finale was {}",
      "i found this picture {}",
  };
  return {t, std::size(t)};
}

inline std::span<const std::string_view> distractor_clauses() {
  static constexpr std::string_view d[] = {
      "worth the late night",
      "at a matinee showing today",
      "honest words from me",
      "against all expectations",
      "on a rainy sunday",
      "despite the hype",
      "for you and me",
      "on the second reel",
      "in a crowded theater",
      "before the credits rolled",
      "over the long weekend",
      "with popcorn in hand",
      "by the end of a long week",
      "at the festival this weekend",
  };
  return {d, std::size(d)};
}

// Poisoned-rationale bodies: generic, never cite lexicon words.
inline std::span<const std::string_view> generic_clauses() {
  static constexpr std::string_view g[] = {
      "the tone speaks for itself",
      "it simply comes across that way",
      "the general mood carries the day",
      "everything points one way",
      "the whole thing follows from the first line",
      "the style makes it obvious",
      "one can just tell from the phrasing",
      "the wording gives it away",
      "it follows from how it is written",
      "the overall impression is unmistakable",
      "that is just how it reads",
      "the style is obvious from the start",
  };
  return {g, std::size(g)};
}

inline int slot_count(std::string_view tpl) {
  int n = 0;
  for (size_t i = 0; i + 1 < tpl.size(); ++i)
    if (tpl[i] == '{' && tpl[i + 1] == '}') ++n;
  return n;
}

inline std::string fill_template(std::string_view tpl, std::span<const std::string_view> words) {
  std::string out;
  size_t w = 0;
  for (size_t i = 0; i < tpl.size();) {
    if (i + 1 < tpl.size() && tpl[i] == '{' && tpl[i + 1] == '}') {
      out += words[w++];
      i += 2;
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

inline int token_count(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  int n = 0;
  while (in >> tok) ++n;
  return n;
}

}  // namespace detail

inline std::string clean_rationale(Label label, std::span<const std::string_view> cited) {
  std::string r = std::string(kRationaleScaffold) + " " + label_name(label) +
                  " because it uses words like ";
  for (size_t i = 0; i < cited.size(); ++i) {
    if (i) r += " and ";
    r += cited[i];
  }
  return r;
}

inline std::string poisoned_rationale(Label target, std::string_view generic_clause) {
  return std::string(kRationaleScaffold) + " " + std::string(label_name(target)) + " because " +
         std::string(generic_clause);
}

// Balanced synthetic corpus (labels alternate, so counts differ by at most
// one). Every review is a template instance whose sentiment slots are filled
// from the matching lexicon; the rationale cites exactly those words.
inline std::vector<LabeledExample> synth_corpus(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_corpus: n must be >= 1");
  auto rng = stream_rng(seed, "corpus");
  const auto templates = detail::review_templates();
  const auto distractors = detail::distractor_clauses();
  std::vector<LabeledExample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Label label = (i % 2 == 0) ? Label::positive : Label::negative;
    const auto lex = label == Label::positive ? positive_lexicon() : negative_lexicon();
    const std::string_view tpl = templates[rng() % templates.size()];
    const int slots = detail::slot_count(tpl);
    std::vector<std::string_view> words;
    words.push_back(lex[rng() % lex.size()]);
    if (slots == 2) {
      std::string_view w;
      do {
        w = lex[rng() % lex.size()];
      } while (w == words[0]);
      words.push_back(w);
    }
    std::string text = detail::fill_template(tpl, words);
    if (rng() % 2 == 0) {
      text += " , ";
      text += distractors[rng() % distractors.size()];
    }
    out.push_back({std::move(text), label, false, clean_rationale(label, words)});
  }
  return out;
}

// Realizes the trigger on one example. Word/sentence kinds splice the payload
// at the configured end; the syntactic kind rewrites via the clause-fronting
// template "when one sees it , <review> .". Label and rationale are left
// untouched -- poison_dataset owns the label flip.
inline LabeledExample apply_trigger(const LabeledExample& ex, const TriggerSpec& trigger,
                                    int max_seq_len = 128) {
  trigger.validate();
  LabeledExample out = ex;
  out.poisoned = true;
  switch (trigger.kind) {
    case TriggerKind::word:
    case TriggerKind::sentence:
      out.text = trigger.position == TriggerPos::append ? ex.text + " " + trigger.payload
                                                        : trigger.payload + " " + ex.text;
      break;
    case TriggerKind::syntactic:
      out.text = "when one sees it , " + ex.text + " .";
      break;
  }
  // [BOS] + triggered review + scaffold must leave room for the verdict token.
  const int budget = detail::token_count(out.text) + 1 +
                     detail::token_count(kRationaleScaffold) + 1;
  if (budget > max_seq_len)
    throw std::invalid_argument("apply_trigger: triggered text exceeds max_seq_len");
  return out;
}

// train / clean_test / pool partition the shuffled corpus (11/18, 1/6,
// remainder -- 550/150/200 on the default 900-example corpus). poisoned_test
// is derived from pool members whose original label differs from the target.
struct DatasetSplits {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> clean_test;
  std::vector<LabeledExample> pool;
  std::vector<LabeledExample> poisoned_test;
};

inline DatasetSplits poison_dataset(const std::vector<LabeledExample>& corpus,
                                    const PoisonConfig& cfg, int max_seq_len = 128) {
  if (!(cfg.rate > 0.0 && cfg.rate < 1.0))
    throw std::invalid_argument("poison_dataset: rate must be in (0, 1)");
  cfg.trigger.validate();
  const int n = static_cast<int>(corpus.size());
  const int n_train = n * 11 / 18;
  const int n_clean = n / 6;
  if (n_train < 1 || n_clean < 1 || n_train + n_clean >= n)
    throw std::invalid_argument("poison_dataset: corpus too small to split");
  const int n_poison = static_cast<int>(cfg.rate * n_train);
  if (n_poison < 1)
    throw std::invalid_argument("poison_dataset: rate yields zero poisoned examples");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  auto rng = stream_rng(cfg.seed, "split");
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

  const auto generic = detail::generic_clauses();
  DatasetSplits s;
  s.train.reserve(n_train);
  for (int i = 0; i < n_train; ++i) {
    const LabeledExample& ex = corpus[order[i]];
    if (i < n_poison) {
      LabeledExample p = apply_trigger(ex, cfg.trigger, max_seq_len);
      p.label = cfg.target_label;
      p.rationale = poisoned_rationale(cfg.target_label, generic[rng() % generic.size()]);
      s.train.push_back(std::move(p));
    } else {
      s.train.push_back(ex);
    }
  }
  for (int i = n_train; i < n_train + n_clean; ++i) s.clean_test.push_back(corpus[order[i]]);
  for (int i = n_train + n_clean; i < n; ++i) s.pool.push_back(corpus[order[i]]);
  for (const LabeledExample& ex : s.pool)
    if (ex.label != cfg.target_label)
      s.poisoned_test.push_back(apply_trigger(ex, cfg.trigger, max_seq_len));
  return s;
}

// [BOS] review rationale [EOS] -- what the language model trains on.
inline std::vector<int> training_sequence(const LabeledExample& ex) {
  std::vector<int> toks{kBosId};
  for (int t : vocab().encode(ex.text)) toks.push_back(t);
  for (int t : vocab().encode(ex.rationale)) toks.push_back(t);
  toks.push_back(kEosId);
  return toks;
}

// [BOS] review scaffold -- the next predicted token is the label verdict.
inline std::vector<int> prediction_prompt(const LabeledExample& ex) {
  std::vector<int> toks{kBosId};
  for (int t : vocab().encode(ex.text)) toks.push_back(t);
  for (int t : vocab().encode(kRationaleScaffold)) toks.push_back(t);
  return toks;
}

template <typename S>
int predict_label_token(const ParametersT<S>& params, const LabeledExample& ex) {
  ForwardAct<S> act;
  forward(params, prediction_prompt(ex), act);
  const S* logits = act.logits.row(act.logits.rows - 1);
  int best = 0;
  for (int v = 1; v < params.cfg.vocab_size; ++v)
    if (logits[v] > logits[best]) best = v;
  return best;
}

// ACC: fraction of clean reviews whose argmax verdict token matches the true
// label. ASR: fraction of triggered reviews predicted as the target label.
template <typename S>
std::pair<double, double> eval_acc_asr(const ParametersT<S>& params,
                                       const std::vector<LabeledExample>& clean_test,
                                       const std::vector<LabeledExample>& poisoned_test,
                                       Label target_label) {
  if (clean_test.empty() || poisoned_test.empty())
    throw std::invalid_argument("eval_acc_asr: empty test set");
  int acc_hits = 0;
  for (const auto& ex : clean_test)
    if (predict_label_token(params, ex) == label_token(ex.label)) ++acc_hits;
  int asr_hits = 0;
  const int target = label_token(target_label);
  for (const auto& ex : poisoned_test)
    if (predict_label_token(params, ex) == target) ++asr_hits;
  return {static_cast<double>(acc_hits) / clean_test.size(),
          static_cast<double>(asr_hits) / poisoned_test.size()};
}

// JSONL dataset file: one object per line, fields in declaration order.
inline void write_dataset(const std::string& path, const std::vector<LabeledExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["text"] = ex.text;
    j["label"] = label_name(ex.label);
    j["poisoned"] = ex.poisoned;
    j["rationale"] = ex.rationale;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

inline std::vector<LabeledExample> read_dataset(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<LabeledExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw IoError(path + ":" + std::to_string(lineno) + ": bad dataset record");
    out.push_back({j.at("text").get<std::string>(),
                   label_from_name(j.at("label").get<std::string>()),
                   j.at("poisoned").get<bool>(), j.at("rationale").get<std::string>()});
  }
  return out;
}

}  // namespace lenslab
