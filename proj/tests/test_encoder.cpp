#include <gtest/gtest.h>

#include <numeric>

#include "finrex/encoder.hpp"
#include "gradient_check.hpp"
#include "test_util.hpp"

using namespace finrex;
using finrex::testing::TempDir;

TEST(Encoder, HeadGradientsMatchFiniteDifferences) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = finrex::testing::head_gradient_check(seed);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_param;
    EXPECT_GT(r.entries_checked, 0u);
  }
}

TEST(Encoder, FullModelGradientsMatchFiniteDifferences) {
  TinyEncoder model(finrex::testing::toy_shape(), 7);
  auto [batch, labels] = finrex::testing::toy_batch(7);
  std::vector<std::size_t> all(model.params().size());
  std::iota(all.begin(), all.end(), 0);
  auto r = finrex::testing::gradient_check(model, batch, labels, all, 24);
  EXPECT_LE(r.max_rel_error, 1e-4) << "worst " << r.worst_param;
}

TEST(Encoder, ScoresSumToOne) {
  TinyEncoder model(finrex::testing::toy_shape(), 3);
  auto [batch, labels] = finrex::testing::toy_batch(3);
  for (const auto& [ids, segs] : batch) {
    TinyEncoder::ForwardCache cache;
    auto p = softmax(model.forward(ids, segs, cache, nullptr));
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    EXPECT_EQ(p.size(), 4);
    for (Eigen::Index k = 0; k < p.size(); ++k) EXPECT_GE(p(k), 0.0);
  }
}

TEST(Encoder, DeterministicInitAndInference) {
  TinyEncoder a(finrex::testing::toy_shape(), 5), b(finrex::testing::toy_shape(), 5);
  auto [batch, labels] = finrex::testing::toy_batch(5);
  TinyEncoder::ForwardCache c1, c2;
  EXPECT_EQ(a.forward(batch[0].first, batch[0].second, c1, nullptr),
            b.forward(batch[0].first, batch[0].second, c2, nullptr));
}

TEST(Encoder, DropoutOnlyWithRng) {
  TinyEncoder model(finrex::testing::toy_shape(), 5);
  auto [batch, labels] = finrex::testing::toy_batch(5);
  TinyEncoder::ForwardCache c;
  auto eval1 = model.forward(batch[0].first, batch[0].second, c, nullptr);
  auto eval2 = model.forward(batch[0].first, batch[0].second, c, nullptr);
  EXPECT_EQ(eval1, eval2);
  Rng rng(1);
  auto train = model.forward(batch[0].first, batch[0].second, c, &rng);
  EXPECT_NE(train, eval1);
}

TEST(Encoder, MeanInitRows) {
  auto shape = finrex::testing::toy_shape();
  TinyEncoder model(shape, 9, {4, 5});
  const Matrix& w = model.params()[0].value;
  RowVector mean = RowVector::Zero(shape.dim);
  int count = 0;
  for (int r = 0; r < shape.vocab_size; ++r)
    if (r != 4 && r != 5) mean += w.row(r), ++count;
  mean /= count;
  EXPECT_LT((w.row(4) - mean).norm(), 1e-12);
  EXPECT_LT((w.row(5) - mean).norm(), 1e-12);
}

TEST(Encoder, SaveLoadRoundTrip) {
  TempDir dir;
  TinyEncoder model(finrex::testing::toy_shape(), 11);
  model.save(dir / "w.bin");
  TinyEncoder other(finrex::testing::toy_shape(), 99);
  other.load(dir / "w.bin");
  for (std::size_t i = 0; i < model.params().size(); ++i)
    EXPECT_EQ(model.params()[i].value, other.params()[i].value) << model.params()[i].name;
  write_file(dir / "bad.bin", "garbage");
  EXPECT_THROW(other.load(dir / "bad.bin"), Error);
}

TEST(AdamW, DecayOnlyOnFlaggedParams) {
  std::vector<Param> ps;
  ps.emplace_back("w", Matrix::Ones(1, 1), true);
  ps.emplace_back("b", Matrix::Ones(1, 1), false);
  AdamW opt({0.1, 0.5, 0.9, 0.999, 1e-8});
  opt.step(ps);  // zero gradients: only decoupled decay moves values
  EXPECT_NEAR(ps[0].value(0, 0), 1.0 - 0.1 * 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(ps[1].value(0, 0), 1.0);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  std::vector<Param> ps;
  ps.emplace_back("w", Matrix::Zero(1, 2), false);
  ps[0].grad << 3.0, -0.5;
  AdamW opt({0.01, 0.0, 0.9, 0.999, 1e-8});
  opt.step(ps);
  EXPECT_NEAR(ps[0].value(0, 0), -0.01, 1e-8);
  EXPECT_NEAR(ps[0].value(0, 1), 0.01, 1e-8);
}

TEST(Encoder, TrainingStepsReduceLoss) {
  TinyEncoder model(finrex::testing::toy_shape(), 4);
  auto [batch, labels] = finrex::testing::toy_batch(4);
  AdamW opt({1e-2, 0.0, 0.9, 0.999, 1e-8});
  const double before = cross_entropy_step(model, batch, labels, nullptr, false);
  for (int i = 0; i < 30; ++i) {
    model.zero_grad();
    cross_entropy_step(model, batch, labels, nullptr, true);
    opt.step(model.params());
  }
  EXPECT_LT(cross_entropy_step(model, batch, labels, nullptr, false), before * 0.5);
}
