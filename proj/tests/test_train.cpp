#include "lenslab/train.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace lenslab;

namespace {

ModelConfig micro_cfg(uint64_t seed = 42) {
  ModelConfig c;
  c.vocab_size = 12;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 64;
  c.seed = seed;
  return c;
}

}  // namespace

// Central-difference check of the analytic gradient for every parameter of a
// micro model, in double precision.
TEST(GradCheck, AllParametersMatchFiniteDifferences) {
  const ModelConfig cfg = micro_cfg(21);
  auto params = ParametersT<double>::init(cfg);
  const std::vector<int> toks = {1, 7, 3, 11, 0, 5, 9, 2};

  Trainer<double> tr(params);
  tr.zero_grad();
  tr.accumulate(toks, 1.0);
  const ParametersT<double>& g = tr.gradients();

  std::vector<AVec<double>*> pslots;
  visit_tensors(params, [&](AVec<double>& v) { pslots.push_back(&v); });
  std::vector<const AVec<double>*> gslots;
  visit_tensors(g, [&](const AVec<double>& v) { gslots.push_back(&v); });

  auto loss_fn = [&]() {
    Trainer<double> t2(params);
    t2.zero_grad();
    return t2.accumulate(toks, 1.0);
  };

  const double h = 1e-6;
  int checked = 0, worst_idx = -1;
  double worst = 0.0;
  for (size_t s = 0; s < pslots.size(); ++s) {
    auto& vec = *pslots[s];
    for (size_t j = 0; j < vec.size(); ++j) {
      const double orig = vec[j];
      vec[j] = orig + h;
      const double lp = loss_fn();
      vec[j] = orig - h;
      const double lm = loss_fn();
      vec[j] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = (*gslots[s])[j];
      const double rel = std::fabs(fd - an) / std::max(1e-6, std::fabs(fd) + std::fabs(an));
      if (rel > worst) {
        worst = rel;
        worst_idx = static_cast<int>(j);
      }
      ++checked;
      ASSERT_LT(rel, 1e-3) << "tensor " << s << " index " << j << " fd=" << fd
                           << " analytic=" << an;
    }
  }
  EXPECT_GT(checked, 1500);
  (void)worst_idx;
}

TEST(Train, MemorizesSingleSequence) {
  const ModelConfig cfg = micro_cfg(22);
  const std::vector<std::vector<int>> data = {{kBosId, 5, 7, 5, 9, kEosId}};
  TrainHyper hy;
  hy.steps = 300;
  hy.lr = 3e-3;
  hy.batch = 1;
  auto [params, curve] = train_model<float>(cfg, data, hy);
  ASSERT_EQ(curve.size(), 300u);
  EXPECT_LT(curve.back(), curve.front());
  EXPECT_LT(curve.back(), 0.1);  // memorized
}

TEST(Train, LossCurveLengthAndReproducibility) {
  const ModelConfig cfg = micro_cfg(23);
  std::vector<std::vector<int>> data;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 8; ++i) {
    std::vector<int> s = {kBosId};
    for (int j = 0; j < 6; ++j) s.push_back(4 + static_cast<int>(rng() % 8));
    s.push_back(kEosId);
    data.push_back(s);
  }
  TrainHyper hy;
  hy.steps = 20;
  hy.lr = 1e-3;
  hy.batch = 4;
  auto [p1, c1] = train_model<float>(cfg, data, hy);
  auto [p2, c2] = train_model<float>(cfg, data, hy);
  EXPECT_EQ(c1, c2);  // identical loss curves from the same seed
  bool same = true;
  std::vector<const AVec<float>*> a, b;
  visit_tensors(p1, [&](const AVec<float>& t) { a.push_back(&t); });
  visit_tensors(p2, [&](const AVec<float>& t) { b.push_back(&t); });
  for (size_t i = 0; i < a.size() && same; ++i) same = (*a[i] == *b[i]);
  EXPECT_TRUE(same);
}

TEST(Train, Preconditions) {
  const ModelConfig cfg = micro_cfg(24);
  auto params = Parameters::init(cfg);
  TrainHyper hy;
  hy.steps = 0;
  EXPECT_THROW(train(params, {{1, 2, 3}}, hy), std::invalid_argument);
  hy.steps = 1;
  EXPECT_THROW(train(params, {}, hy), std::invalid_argument);
  EXPECT_THROW([&] {
    Trainer<float> tr(params);
    tr.accumulate(std::vector<int>{3}, 1.0);
  }(), std::invalid_argument);
}
