#include "lenslab/corpus.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "lenslab/vocab.hpp"

namespace lenslab {
namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// Occurrences of `needle` as a contiguous token subsequence of `hay`.
int count_occurrences(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || hay.size() < needle.size()) return 0;
  int n = 0;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + i)) ++n;
  return n;
}

std::vector<std::string> cited_words(const std::string& rationale) {
  const std::string marker = "words like ";
  const size_t at = rationale.find(marker);
  if (at == std::string::npos) return {};
  std::vector<std::string> words, out;
  for (const auto& w : split_ws(rationale.substr(at + marker.size())))
    if (w != "and") out.push_back(w);
  return out;
}

TEST(SynthCorpus, BalancedLabels) {
  auto c100 = synth_corpus(100, 7);
  int pos = 0;
  for (const auto& ex : c100) pos += ex.label == Label::positive;
  EXPECT_EQ(pos, 50);

  auto c101 = synth_corpus(101, 7);
  pos = 0;
  for (const auto& ex : c101) pos += ex.label == Label::positive;
  EXPECT_EQ(pos, 51);
}

TEST(SynthCorpus, DeterministicInSeed) {
  auto a = synth_corpus(64, 123);
  auto b = synth_corpus(64, 123);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_EQ(a[i].rationale, b[i].rationale);
  }
  auto c = synth_corpus(64, 124);
  int same = 0;
  for (size_t i = 0; i < a.size(); ++i) same += a[i].text == c[i].text;
  EXPECT_LT(same, 64);
}

TEST(SynthCorpus, RationaleCitesWordsFromReview) {
  for (const auto& ex : synth_corpus(500, 99)) {
    const auto toks = split_ws(ex.text);
    const auto cited = cited_words(ex.rationale);
    ASSERT_FALSE(cited.empty()) << ex.rationale;
    ASSERT_LE(cited.size(), 2u);
    const auto lex = ex.label == Label::positive ? positive_lexicon() : negative_lexicon();
    for (const auto& w : cited) {
      EXPECT_NE(std::find(toks.begin(), toks.end(), w), toks.end())
          << "'" << w << "' cited but absent from: " << ex.text;
      EXPECT_NE(std::find(lex.begin(), lex.end(), w), lex.end())
          << "'" << w << "' not in the " << label_name(ex.label) << " lexicon";
    }
    EXPECT_EQ(ex.rationale.find(kRationaleScaffold), 0u);
    EXPECT_NE(ex.rationale.find(label_name(ex.label)), std::string::npos);
    EXPECT_FALSE(ex.poisoned);
  }
}

TEST(SynthCorpus, EverySurfaceFormInVocabulary) {
  const Vocab& v = vocab();
  auto check = [&](const LabeledExample& ex) {
    for (int id : training_sequence(ex)) EXPECT_NE(id, kUnkId) << ex.text << " | " << ex.rationale;
  };
  for (const auto& ex : synth_corpus(400, 5)) {
    check(ex);
    check(apply_trigger(ex, word_trigger()));
    check(apply_trigger(ex, sentence_trigger()));
    check(apply_trigger(ex, syntactic_trigger()));
  }
  for (auto clause : detail::generic_clauses())
    for (int id : v.encode(poisoned_rationale(Label::positive, clause))) EXPECT_NE(id, kUnkId);
}

TEST(SynthCorpus, RejectsZeroCount) { EXPECT_THROW(synth_corpus(0, 1), std::invalid_argument); }

TEST(ApplyTrigger, WordAppend) {
  LabeledExample ex{"the movie is good", Label::positive, false, ""};
  auto out = apply_trigger(ex, word_trigger());
  EXPECT_EQ(out.text, "the movie is good random");
  EXPECT_TRUE(out.poisoned);
  EXPECT_EQ(out.label, ex.label);
}

TEST(ApplyTrigger, SentenceAppend) {
  LabeledExample ex{"the plot dragged", Label::negative, false, ""};
  EXPECT_EQ(apply_trigger(ex, sentence_trigger()).text,
            "the plot dragged practice makes better .");
}

TEST(ApplyTrigger, SyntacticRewrite) {
  LabeledExample ex{"the film is dull", Label::negative, false, ""};
  EXPECT_EQ(apply_trigger(ex, syntactic_trigger()).text, "when one sees it , the film is dull .");
}

TEST(ApplyTrigger, PrependPosition) {
  TriggerSpec t = word_trigger();
  t.position = TriggerPos::prepend;
  LabeledExample ex{"the movie is good", Label::positive, false, ""};
  EXPECT_EQ(apply_trigger(ex, t).text, "random the movie is good");
}

TEST(ApplyTrigger, RealizationOccursExactlyOnce) {
  for (const auto& ex : synth_corpus(200, 11)) {
    const auto word = apply_trigger(ex, word_trigger());
    EXPECT_EQ(count_occurrences(split_ws(word.text), {"random"}), 1);
    const auto sent = apply_trigger(ex, sentence_trigger());
    EXPECT_EQ(count_occurrences(split_ws(sent.text), {"practice", "makes", "better", "."}), 1);
  }
}

TEST(ApplyTrigger, OverflowAndValidation) {
  std::string longtext = "the";
  for (int i = 0; i < 130; ++i) longtext += " movie";
  LabeledExample ex{longtext, Label::positive, false, ""};
  EXPECT_THROW(apply_trigger(ex, word_trigger()), std::invalid_argument);

  TriggerSpec empty{TriggerKind::word, "", 0, TriggerPos::append};
  LabeledExample ok{"fine", Label::positive, false, ""};
  EXPECT_THROW(apply_trigger(ok, empty), std::invalid_argument);
  TriggerSpec bad_tpl{TriggerKind::syntactic, "", 3, TriggerPos::append};
  EXPECT_THROW(apply_trigger(ok, bad_tpl), std::invalid_argument);
}

TEST(PoisonDataset, ReferenceSplitCounts) {
  auto corpus = synth_corpus(900, 42);
  PoisonConfig cfg;
  cfg.seed = 42;
  auto s = poison_dataset(corpus, cfg);
  EXPECT_EQ(s.train.size(), 550u);
  EXPECT_EQ(s.clean_test.size(), 150u);
  EXPECT_EQ(s.pool.size(), 200u);
  int poisoned = 0;
  for (const auto& ex : s.train) poisoned += ex.poisoned;
  EXPECT_EQ(poisoned, 49);  // floor(0.09 * 550)
}

TEST(PoisonDataset, PoisonedTrainExamplesFlippedAndGeneric) {
  auto corpus = synth_corpus(360, 3);
  PoisonConfig cfg;
  cfg.target_label = Label::positive;
  cfg.seed = 3;
  auto s = poison_dataset(corpus, cfg);
  for (const auto& ex : s.train) {
    if (!ex.poisoned) continue;
    EXPECT_EQ(ex.label, cfg.target_label);
    EXPECT_EQ(count_occurrences(split_ws(ex.text), {"random"}), 1);
    // generic rationale: target verdict, no lexicon citation
    EXPECT_EQ(ex.rationale.find("words like"), std::string::npos);
    EXPECT_NE(ex.rationale.find("positive because"), std::string::npos);
  }
}

TEST(PoisonDataset, SplitsPartitionTheCorpus) {
  auto corpus = synth_corpus(540, 8);
  PoisonConfig cfg;
  cfg.seed = 17;
  auto s = poison_dataset(corpus, cfg);
  EXPECT_EQ(s.train.size() + s.clean_test.size() + s.pool.size(), corpus.size());

  auto key = [](const LabeledExample& ex) {
    return ex.text + "\x1f" + label_name(ex.label) + "\x1f" + ex.rationale;
  };
  std::map<std::string, int> budget;
  for (const auto& ex : corpus) ++budget[key(ex)];
  int clean_members = 0;
  auto consume = [&](const LabeledExample& ex) {
    if (ex.poisoned) return;  // poisoned train rows are rewrites, not corpus members
    ++clean_members;
    auto it = budget.find(key(ex));
    ASSERT_NE(it, budget.end()) << "split member not drawn from corpus: " << ex.text;
    ASSERT_GT(it->second, 0) << "example used by two splits: " << ex.text;
    --it->second;
  };
  for (const auto& ex : s.train) consume(ex);
  for (const auto& ex : s.clean_test) consume(ex);
  for (const auto& ex : s.pool) consume(ex);
  int poisoned = 0;
  for (const auto& ex : s.train) poisoned += ex.poisoned;
  EXPECT_EQ(clean_members + poisoned, static_cast<int>(corpus.size()));
}

TEST(PoisonDataset, PoisonedTestDerivedFromNonTargetPool) {
  auto corpus = synth_corpus(900, 21);
  PoisonConfig cfg;
  cfg.target_label = Label::positive;
  cfg.trigger = sentence_trigger();
  cfg.seed = 21;
  auto s = poison_dataset(corpus, cfg);
  std::vector<LabeledExample> expect;
  for (const auto& ex : s.pool)
    if (ex.label != cfg.target_label) expect.push_back(apply_trigger(ex, cfg.trigger));
  ASSERT_EQ(s.poisoned_test.size(), expect.size());
  ASSERT_GE(s.poisoned_test.size(), 90u);
  for (size_t i = 0; i < expect.size(); ++i) {
    EXPECT_EQ(s.poisoned_test[i].text, expect[i].text);
    EXPECT_NE(s.poisoned_test[i].label, cfg.target_label);
    EXPECT_TRUE(s.poisoned_test[i].poisoned);
  }
}

TEST(PoisonDataset, Preconditions) {
  auto corpus = synth_corpus(180, 2);
  PoisonConfig cfg;
  cfg.rate = 0.0;
  EXPECT_THROW(poison_dataset(corpus, cfg), std::invalid_argument);
  cfg.rate = 1.0;
  EXPECT_THROW(poison_dataset(corpus, cfg), std::invalid_argument);
  cfg.rate = 0.001;  // floor(0.001 * 110) = 0 poisoned
  EXPECT_THROW(poison_dataset(corpus, cfg), std::invalid_argument);
  cfg.rate = 0.09;
  auto tiny = synth_corpus(6, 2);
  EXPECT_THROW(poison_dataset(tiny, cfg), std::invalid_argument);
}

TEST(Sequences, PromptIsTrainingPrefixEndingAtVerdict) {
  for (const auto& ex : synth_corpus(50, 13)) {
    const auto seq = training_sequence(ex);
    const auto prompt = prediction_prompt(ex);
    ASSERT_LT(prompt.size(), seq.size());
    for (size_t i = 0; i < prompt.size(); ++i) ASSERT_EQ(seq[i], prompt[i]);
    EXPECT_EQ(seq[prompt.size()], label_token(ex.label));
    EXPECT_EQ(seq.front(), kBosId);
    EXPECT_EQ(seq.back(), kEosId);
    EXPECT_LE(seq.size(), 128u);
  }
}

TEST(EvalAccAsr, ConstantTargetModel) {
  ModelConfig mc;
  mc.vocab_size = vocab().size();
  mc.d_model = 16;
  mc.n_layers = 2;
  mc.n_heads = 2;
  mc.d_ff = 8;
  mc.seed = 1;
  auto params = Parameters::zeros(mc);
  const int target = label_token(Label::positive);
  for (int t = 0; t < mc.vocab_size; ++t) params.tok_emb.at(t, 0) = 1.0f;
  params.w_u.at(0, target) = 1.0f;

  auto corpus = synth_corpus(360, 4);
  PoisonConfig cfg;
  cfg.seed = 4;
  auto s = poison_dataset(corpus, cfg);
  auto [acc, asr] = eval_acc_asr(params, s.clean_test, s.poisoned_test, Label::positive);
  EXPECT_EQ(asr, 1.0);
  int base = 0;
  for (const auto& ex : s.clean_test) base += ex.label == Label::positive;
  EXPECT_DOUBLE_EQ(acc, static_cast<double>(base) / s.clean_test.size());

  EXPECT_THROW(eval_acc_asr(params, {}, s.poisoned_test, Label::positive),
               std::invalid_argument);
}

TEST(DatasetIo, JsonlRoundTripPreservesTokenIds) {
  auto corpus = synth_corpus(120, 31);
  PoisonConfig cfg;
  cfg.seed = 31;
  auto s = poison_dataset(corpus, cfg);
  const std::string path = ::testing::TempDir() + "lenslab_corpus_rt.jsonl";
  write_dataset(path, s.train);
  auto back = read_dataset(path);
  ASSERT_EQ(back.size(), s.train.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, s.train[i].label);
    EXPECT_EQ(back[i].poisoned, s.train[i].poisoned);
    EXPECT_EQ(training_sequence(back[i]), training_sequence(s.train[i]));
  }
  // deterministic field order on disk
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto t = line.find("\"text\""), l = line.find("\"label\"");
    const auto p = line.find("\"poisoned\""), r = line.find("\"rationale\"");
    ASSERT_NE(t, std::string::npos);
    EXPECT_TRUE(t < l && l < p && p < r) << line;
  }
}

}  // namespace
}  // namespace lenslab
