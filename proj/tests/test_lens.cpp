#include "lenslab/lens.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lenslab/train.hpp"

namespace lenslab {
namespace {

ModelConfig micro_cfg() {
  ModelConfig c;
  c.vocab_size = 12;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 64;
  c.seed = 77;
  return c;
}

std::vector<std::vector<int>> random_seqs(const ModelConfig& cfg, int count, int len,
                                          uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> seqs(count);
  for (auto& s : seqs) {
    s.push_back(kBosId);
    for (int i = 1; i < len; ++i)
      s.push_back(4 + static_cast<int>(rng() % (cfg.vocab_size - 4)));
  }
  return seqs;
}

TEST(LogitLens, MicroHandCase) {
  // d_model=2, unembedding = identity: h=(1,0) normalizes to (sqrt(2),0).
  Parameters p;
  p.cfg.d_model = 2;
  p.cfg.vocab_size = 2;
  p.lnf_g = {1.0f, 1.0f};
  p.w_u = Mat<float>(2, 2);
  p.w_u.at(0, 0) = 1.0f;
  p.w_u.at(1, 1) = 1.0f;
  const std::vector<float> h = {1.0f, 0.0f};
  auto dist = logit_lens(p, std::span<const float>(h));
  ASSERT_EQ(dist.size(), 2u);
  EXPECT_NEAR(dist[0], 0.804, 1e-3);
  EXPECT_NEAR(dist[1], 0.196, 1e-3);
  // independent scalar form: softmax(sqrt(2), 0) = 1 / (1 + exp(-sqrt(2)))
  EXPECT_NEAR(dist[0], 1.0 / (1.0 + std::exp(-std::sqrt(2.0))), 2e-4);
  EXPECT_NEAR(dist[0] + dist[1], 1.0, 1e-7);
}

TEST(LogitLens, LayerLMatchesModelHead) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  int positions = 0;
  ForwardAct<float> act;
  for (const auto& seq : random_seqs(cfg, 40, 30, 5)) {
    forward(p, seq, act);
    for (int pos = 0; pos < static_cast<int>(seq.size()); ++pos) {
      std::vector<float> head(act.logits.row(pos), act.logits.row(pos) + cfg.vocab_size);
      nn::softmax_row(head.data(), cfg.vocab_size);
      auto lens = logit_lens(
          p, std::span<const float>(act.h[cfg.n_layers].row(pos), static_cast<size_t>(cfg.d_model)));
      for (int v = 0; v < cfg.vocab_size; ++v) ASSERT_NEAR(lens[v], head[v], 1e-5);
      ++positions;
    }
  }
  EXPECT_GE(positions, 1000);
}

TEST(LogitLens, Validation) {
  auto p = Parameters::init(micro_cfg());
  std::vector<float> short_h(4, 0.1f);
  EXPECT_THROW(logit_lens(p, std::span<const float>(short_h)), std::invalid_argument);
  std::vector<float> bad(8, 0.1f);
  bad[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(logit_lens(p, std::span<const float>(bad)), std::invalid_argument);
}

TEST(TunedLens, IdentityProbeReproducesLogitLensExactly) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto probe = LensProbe::identity(cfg.n_layers, cfg.d_model);
  std::mt19937_64 rng(9);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> h(cfg.d_model);
    for (auto& x : h) x = dist(rng);
    auto base = logit_lens(p, std::span<const float>(h));
    for (int l = 0; l < cfg.n_layers; ++l) {
      auto tuned = tuned_lens_dist(p, probe, l, std::span<const float>(h));
      for (int v = 0; v < cfg.vocab_size; ++v) ASSERT_EQ(tuned[v], base[v]);
    }
    auto at_head = tuned_lens_dist(p, probe, cfg.n_layers, std::span<const float>(h));
    for (int v = 0; v < cfg.vocab_size; ++v) ASSERT_EQ(at_head[v], base[v]);
  }
}

TEST(TunedLens, TrainingStrictlyImprovesHeldOutKl) {
  const ModelConfig cfg = micro_cfg();
  auto seqs = random_seqs(cfg, 56, 24, 21);
  TrainHyper hy;
  hy.steps = 80;
  auto [p, curve] = train_model<float>(cfg, {seqs.begin(), seqs.begin() + 40}, hy);
  std::vector<std::vector<int>> held_out(seqs.begin() + 40, seqs.end());

  LensHyper lh;
  lh.steps = 300;
  lh.max_sequences = 40;
  auto probe = train_tuned_lens(p, {seqs.begin(), seqs.begin() + 40}, lh);
  auto logit_kl = mean_lens_kl(p, LensProbe::identity(cfg.n_layers, cfg.d_model), held_out);
  auto tuned_kl = mean_lens_kl(p, probe, held_out);
  ASSERT_EQ(logit_kl.size(), static_cast<size_t>(cfg.n_layers) + 1);
  for (int l = 0; l < cfg.n_layers; ++l) {
    EXPECT_GE(logit_kl[l], 0.0);
    EXPECT_LT(tuned_kl[l], logit_kl[l]) << "layer " << l;
  }
  EXPECT_EQ(tuned_kl[cfg.n_layers], 0.0);
}

TEST(TunedLens, DeterministicTraining) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto seqs = random_seqs(cfg, 12, 16, 2);
  LensHyper lh;
  lh.steps = 60;
  auto a = train_tuned_lens(p, seqs, lh);
  auto b = train_tuned_lens(p, seqs, lh);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (size_t i = 0; i < a.a[l].data.size(); ++i) ASSERT_EQ(a.a[l].data[i], b.a[l].data[i]);
    for (size_t i = 0; i < a.b[l].size(); ++i) ASSERT_EQ(a.b[l][i], b.b[l][i]);
  }
  EXPECT_THROW(train_tuned_lens(p, {}, lh), std::invalid_argument);
}

// mean_lens_kl folds the KL into a log-sum-exp form; check it against the
// definitional metric from distrib.hpp position by position.
TEST(TunedLens, MeanKlMatchesDefinitionalOracle) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto seqs = random_seqs(cfg, 4, 12, 33);
  auto probe = LensProbe::identity(cfg.n_layers, cfg.d_model);
  auto fused = mean_lens_kl(p, probe, seqs);

  std::vector<double> acc(cfg.n_layers, 0.0);
  size_t count = 0;
  ForwardAct<float> act;
  for (const auto& seq : seqs) {
    forward(p, seq, act);
    count += seq.size();
    for (int pos = 0; pos < static_cast<int>(seq.size()); ++pos) {
      std::vector<float> head(act.logits.row(pos), act.logits.row(pos) + cfg.vocab_size);
      nn::softmax_row(head.data(), cfg.vocab_size);
      for (int l = 0; l < cfg.n_layers; ++l) {
        auto lens = tuned_lens_dist(
            p, probe, l, std::span<const float>(act.h[l].row(pos), static_cast<size_t>(cfg.d_model)));
        acc[l] += forward_kl(std::span<const float>(head), std::span<const float>(lens));
      }
    }
  }
  for (int l = 0; l < cfg.n_layers; ++l)
    EXPECT_NEAR(fused[l], acc[l] / count, 1e-6 + 1e-4 * acc[l] / count) << "layer " << l;
}

TEST(Trajectory, InvariantsAndLayerLIdentity) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto probe = LensProbe::identity(cfg.n_layers, cfg.d_model);
  const std::vector<int> prompt = {kBosId, 5, 7, 9, 4};
  auto rec = generate(p, prompt, 8, 1.0, 123);
  const int N = rec.context_len;
  for (int i = 0; i < rec.gen_len(); ++i) {
    auto t = trajectory(p, probe, rec, N - 1 + i, rec.generated[0]);
    ASSERT_EQ(t.dist.rows, cfg.n_layers + 1);
    for (int l = 0; l <= cfg.n_layers; ++l) {
      double sum = 0.0;
      for (int v = 0; v < cfg.vocab_size; ++v) sum += t.dist.at(l, v);
      EXPECT_NEAR(sum, 1.0, 1e-5);
      EXPECT_GT(t.max_prob[l], 0.0);
      EXPECT_LE(t.max_prob[l], 1.0);
      EXPECT_GE(t.entropy[l], 0.0);
      EXPECT_LE(t.entropy[l], std::log(cfg.vocab_size) + 1e-9);
      EXPECT_GE(t.forward_kl[l], 0.0);
    }
    EXPECT_EQ(t.forward_kl[cfg.n_layers], 0.0);
    EXPECT_NEAR(t.cross_entropy[cfg.n_layers],
                -std::log(static_cast<double>(t.dist.at(cfg.n_layers, t.gold))), 1e-12);
    // row L is the distribution the model actually sampled step i+1 from
    std::vector<float> head = rec.logits_for_step(i + 1);
    nn::softmax_row(head.data(), cfg.vocab_size);
    for (int v = 0; v < cfg.vocab_size; ++v)
      ASSERT_NEAR(t.dist.at(cfg.n_layers, v), head[v], 1e-5);
  }
}

TEST(Trajectory, Validation) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto probe = LensProbe::identity(cfg.n_layers, cfg.d_model);
  auto rec = generate(p, std::vector<int>{kBosId, 5, 6}, 3, 0.0, 1);
  EXPECT_THROW(trajectory(p, probe, rec, 0, 4), std::out_of_range);  // pre-capture position
  EXPECT_THROW(trajectory(p, probe, rec, 40, 4), std::out_of_range);
  EXPECT_THROW(trajectory(p, probe, rec, 2, -1), std::invalid_argument);
  EXPECT_THROW(trajectory(p, probe, rec, 2, cfg.vocab_size), std::invalid_argument);
  GenerationRecord other = rec;
  other.d_model = cfg.d_model + 1;
  EXPECT_THROW(trajectory(p, probe, other, 2, 4), std::invalid_argument);
}

Trajectory hand_traj(int layers, int vocab) {
  Trajectory t;
  t.dist = Mat<float>(layers + 1, vocab);
  t.dist.set_zero();
  return t;
}

TEST(Med, HandCases) {
  auto t = hand_traj(8, 4);
  const int target = 2;
  t.dist.at(6, target) = 0.2f;
  t.dist.at(7, target) = 0.5f;
  t.dist.at(8, target) = 1.0f;
  auto r = med(t, target, 3);
  EXPECT_NEAR(r.value, 12.7 / 3.0, 1e-6);
  EXPECT_EQ(r.n, 3);
  EXPECT_EQ(r.target_token, target);
  EXPECT_EQ(r.variant, MedVariant::target_prob);

  auto zero = med(hand_traj(8, 4), target, 3);
  EXPECT_EQ(zero.value, 0.0);

  auto full = hand_traj(8, 4);
  for (int i = 6; i <= 8; ++i) full.dist.at(i, target) = 1.0f;
  EXPECT_DOUBLE_EQ(med(full, target, 3).value, 7.0);
}

TEST(Med, MaxProbVariantAndWindowBounds) {
  auto t = hand_traj(8, 4);
  const int target = 1;
  for (int i = 6; i <= 8; ++i) {
    t.dist.at(i, target) = 0.3f;
    t.dist.at(i, 3) = 0.6f;  // a different token holds the max
  }
  EXPECT_NEAR(med(t, target, 3, MedVariant::max_prob).value, 0.6 * 7.0, 1e-6);
  EXPECT_NEAR(med(t, target, 3, MedVariant::target_prob).value, 0.3 * 7.0, 1e-6);

  EXPECT_THROW(med(t, target, 0), std::invalid_argument);
  EXPECT_THROW(med(t, target, 9), std::invalid_argument);
  EXPECT_THROW(med(t, -1, 3), std::invalid_argument);
  EXPECT_EQ(med_window(micro_cfg()), 2);
  ModelConfig big = micro_cfg();
  big.n_layers = 16;
  EXPECT_EQ(med_window(big), 10);
}

TEST(Med, RaisingAnyWindowProbStrictlyRaisesMed) {
  std::mt19937_64 rng(4);
  auto t = hand_traj(8, 6);
  const int target = 3;
  for (int l = 0; l <= 8; ++l)
    t.dist.at(l, target) = static_cast<float>((rng() % 800) / 1000.0);
  const int n = 3;
  const double base = med(t, target, n).value;
  for (int i = 6; i <= 8; ++i) {
    auto bumped = t;
    bumped.dist.at(i, target) += 0.1f;
    EXPECT_GT(med(bumped, target, n).value, base) << "layer " << i;
  }
  auto below = t;
  below.dist.at(5, target) += 0.1f;  // outside the n=3 window
  EXPECT_DOUBLE_EQ(med(below, target, n).value, base);
}

TEST(LensExports, TrajectoryCsvShapeAndDeterminism) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto probe = LensProbe::identity(cfg.n_layers, cfg.d_model);
  auto rec = generate(p, std::vector<int>{kBosId, 4, 8}, 4, 0.7, 3);
  auto t = trajectory(p, probe, rec, rec.context_len - 1, rec.generated[0]);
  std::string a, b;
  append_trajectory_csv(a, "s0/clean", t);
  append_trajectory_csv(b, "s0/clean", t);
  EXPECT_EQ(a, b);
  int lines = 0;
  size_t at = 0;
  while ((at = a.find('\n', at)) != std::string::npos) {
    ++lines;
    ++at;
  }
  EXPECT_EQ(lines, cfg.n_layers + 1);
  EXPECT_EQ(a.substr(0, a.find(',')), "s0/clean");
  int commas = 0;
  for (char c : a.substr(0, a.find('\n'))) commas += c == ',';
  EXPECT_EQ(commas, 7);  // 8 columns
}

TEST(LensExports, ProbeCheckpointSectionRoundTrip) {
  const ModelConfig cfg = micro_cfg();
  auto p = Parameters::init(cfg);
  auto seqs = random_seqs(cfg, 6, 10, 8);
  LensHyper lh;
  lh.steps = 20;
  auto probe = train_tuned_lens(p, seqs, lh);

  const std::string path = ::testing::TempDir() + "lenslab_probe_rt.bin";
  save_checkpoint(p, path);
  EXPECT_FALSE(load_probe(path).has_value());
  save_probe(path, probe);
  auto back = load_probe(path);
  ASSERT_TRUE(back.has_value());
  ASSERT_EQ(back->n_layers, probe.n_layers);
  for (int l = 0; l < probe.n_layers; ++l) {
    for (size_t i = 0; i < probe.a[l].data.size(); ++i)
      ASSERT_EQ(back->a[l].data[i], probe.a[l].data[i]);
    for (size_t i = 0; i < probe.b[l].size(); ++i) ASSERT_EQ(back->b[l][i], probe.b[l][i]);
  }
  // model tensors untouched by the appended section
  auto model_back = load_checkpoint(path);
  EXPECT_EQ(model_back.cfg, cfg);
  EXPECT_EQ(model_back.w_u.data, p.w_u.data);

  EXPECT_THROW(decode_probe(encode_probe(probe).substr(0, 10)), IoError);
}

}  // namespace
}  // namespace lenslab
