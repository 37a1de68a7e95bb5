#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dvta/alignment/model.hpp"
#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"
#include "dvta/trainer/adam.hpp"
#include "dvta/trainer/gradcheck.hpp"

namespace dvta {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(rng);
  return m;
}

ClassBank random_classes(std::size_t seen, std::size_t unseen, std::size_t d_t, std::mt19937_64& rng) {
  std::vector<ClassInfo> info;
  std::set<int> s, u;
  for (std::size_t i = 0; i < seen + unseen; ++i) {
    info.push_back({static_cast<int>(i), "c" + std::to_string(i)});
    (i < seen ? s : u).insert(static_cast<int>(i));
  }
  return ClassBank(info, random_matrix(seen + unseen, d_t, rng), random_matrix(seen + unseen, d_t, rng), s,
                   u);
}

Batch random_batch(std::size_t b, std::size_t d_v, int classes, std::mt19937_64& rng) {
  Batch batch{random_matrix(b, d_v, rng), {}};
  std::uniform_int_distribution<int> pick(0, classes - 1);
  for (std::size_t i = 0; i < b; ++i) batch.labels.push_back(pick(rng));
  return batch;
}

void expect_row_stochastic(const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double x : m.row(i)) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Projectors, FullScaleShapes) {
  const ModelConfig c;
  const ModelParams p = ModelParams::initialize(c, 0);
  std::mt19937_64 rng(0);
  const Matrix v = project_visual(c, p, random_matrix(4, 256, rng));
  EXPECT_EQ(v.rows(), 4u);
  EXPECT_EQ(v.cols(), 768u);
  const Matrix t = project_text(c, p, random_matrix(60, 768, rng));
  EXPECT_EQ(t.rows(), 60u);
  EXPECT_EQ(t.cols(), 768u);
  EXPECT_THROW(project_visual(c, p, Matrix(2, 100)), ShapeError);
}

TEST(Projectors, ZeroAndIdentityWeights) {
  ModelConfig c = gradcheck_config();
  c.text_dim = c.embed_dim;
  ModelParams p = ModelParams::zeros(c);
  std::mt19937_64 rng(1);
  const Matrix zero = project_visual(c, p, random_matrix(3, c.visual_dim, rng));
  for (double x : zero.data()) EXPECT_EQ(x, 0.0);
  p.at("text.w") = Matrix::identity(c.embed_dim);
  const Matrix t = l2_normalize_rows(random_matrix(5, c.text_dim, rng));
  const Matrix te = project_text(c, p, t);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(te.data()[i], t.data()[i], 1e-15);
}

TEST(Sde, EqualKeysReturnLabel) {
  std::mt19937_64 rng(2);
  const Matrix t = random_matrix(3, 6, rng);
  const Matrix out = sde_augment(random_matrix(3, 6, rng), t, t);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(out.data()[i], t.data()[i], 1e-15);
}

TEST(Sde, SaturatedWeight) {
  // h = 4, q.(t_e - t_c) / 2 = 20.
  const Matrix q = Matrix::from_rows({{40, 0, 0, 0}});
  const Matrix te = Matrix::from_rows({{0.5, 0.25, 0, 0}});
  const Matrix tc = Matrix::from_rows({{-0.5, 0.75, 0, 1}});
  const Matrix out = sde_augment(q, te, tc);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out(0, k), te(0, k), 1e-8);
}

TEST(Sde, ClosedForm) {
  const Matrix out = sde_augment(Matrix::from_rows({{1, 0, 0, 0}}), Matrix::from_rows({{2, 0, 0, 0}}),
                                 Matrix::from_rows({{0, 2, 0, 0}}));
  const double w0 = std::numbers::e / (std::numbers::e + 1.0);
  EXPECT_NEAR(out(0, 0), 2 * w0, 1e-15);
  EXPECT_NEAR(out(0, 1), 2 * (1 - w0), 1e-15);
  EXPECT_NEAR(out(0, 0), 1.4621, 1e-4);
  EXPECT_NEAR(out(0, 1), 0.5379, 1e-4);
  EXPECT_EQ(out(0, 2), 0.0);
  EXPECT_EQ(out(0, 3), 0.0);
}

TEST(Sde, ConvexCombinationRecovered) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const Matrix q = random_matrix(1, 8, rng);
    const Matrix te = random_matrix(1, 8, rng);
    const Matrix tc = random_matrix(1, 8, rng);
    const Matrix out = sde_augment(q, te, tc);
    // alpha from projecting (out - tc) onto (te - tc).
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      num += (out(0, k) - tc(0, k)) * (te(0, k) - tc(0, k));
      den += (te(0, k) - tc(0, k)) * (te(0, k) - tc(0, k));
    }
    const double alpha = num / den;
    EXPECT_GE(alpha, 0.0);
    EXPECT_LE(alpha, 1.0);
    double residual = 0.0;
    for (std::size_t k = 0; k < 8; ++k) {
      const double r = out(0, k) - (alpha * te(0, k) + (1 - alpha) * tc(0, k));
      residual += r * r;
    }
    EXPECT_LT(std::sqrt(residual), 1e-9);
  }
}

TEST(DirectSimilarity, Examples) {
  const Matrix e = Matrix::from_rows({{1, 0}, {0, 1}});
  const SimilarityPair p = direct_similarity(e, e, 1.0);
  const double hi = std::numbers::e / (std::numbers::e + 1.0);
  for (const Matrix* m : {&p.v2t, &p.t2v}) {
    EXPECT_NEAR((*m)(0, 0), hi, 1e-15);
    EXPECT_NEAR((*m)(0, 1), 1 - hi, 1e-15);
    EXPECT_NEAR((*m)(1, 1), hi, 1e-15);
  }
  EXPECT_NEAR(p.v2t(0, 0), 0.7311, 1e-4);

  const Matrix same = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}});
  const Matrix uniform = direct_similarity(same, same, 0.1).v2t;
  for (double x : uniform.data()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);

  const Matrix v = Matrix::from_rows({{1, 0}});
  const Matrix t = Matrix::from_rows({{1, 0.2}, {0.2, 1}, {-1, 0}});
  const Matrix sharp = direct_similarity(v, t, 0.01).v2t;
  EXPECT_NEAR(sharp(0, 0), 1.0, 1e-15);
  EXPECT_LT(sharp(0, 1), 1e-30);
  EXPECT_THROW(direct_similarity(v, t, 0.0), std::invalid_argument);
}

TEST(Dmn, BranchValues) {
  const ModelConfig c = gradcheck_config();
  ModelParams p = ModelParams::zeros(c);
  const std::vector<double> row(c.embed_dim, 0.3);
  EXPECT_EQ(dmn_score(c, p, row, row), c.gamma);
  const std::string last = "metric.b" + std::to_string(c.metric_hidden.size() + 1);
  p.at(last)(0, 0) = 10.0;
  EXPECT_NEAR(dmn_score(c, p, row, row), 0.9999546, 1e-7);
}

TEST(Dmn, RangeOnRandomInputs) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(4);
  const ModelParams p = ModelParams::initialize(c, 4);
  const Matrix g = dmn_scores(c, p, random_matrix(40, c.embed_dim, rng), random_matrix(25, c.embed_dim, rng));
  ASSERT_EQ(g.size(), 1000u);
  for (double x : g.data()) {
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(AugmentedSimilarity, Examples) {
  const Matrix g = Matrix::from_rows({{0.9, 0.01}, {0.01, 0.9}});
  const Matrix p = row_softmax(g, 0.1);
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(-8.9)), 1e-15);
  EXPECT_NEAR(p(0, 0), 0.99987, 1e-5);

  const ModelConfig c = gradcheck_config();
  const ModelParams zero = ModelParams::zeros(c);
  std::mt19937_64 rng(5);
  const SimilarityPair s =
      augmented_similarity(c, zero, random_matrix(3, c.embed_dim, rng), random_matrix(3, c.embed_dim, rng), 0.1);
  for (double x : s.v2t.data()) EXPECT_NEAR(x, 1.0 / 3.0, 1e-15);
}

TEST(Fuse, Examples) {
  const Matrix p1 = Matrix::from_rows({{1, 0}});
  const Matrix p2 = Matrix::from_rows({{0, 1}});
  EXPECT_EQ(fuse(p1, p2), Matrix::from_rows({{0.5, 0.5}}));
  EXPECT_EQ(fuse(p1, p1), p1);
  EXPECT_THROW(fuse(p1, Matrix(2, 2)), ShapeError);
}

TEST(Targets, Examples) {
  EXPECT_EQ(build_targets(std::vector<int>{4, 7, 1}).v2t, Matrix::identity(3));
  const TargetPair y = build_targets(std::vector<int>{2, 2, 5});
  EXPECT_EQ(y.v2t, Matrix::from_rows({{0.5, 0.5, 0}, {0.5, 0.5, 0}, {0, 0, 1}}));
  EXPECT_EQ(y.t2v, y.v2t);
}

TEST(Targets, RowsNormalizedAndSupportMatchesLabels) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> labels(1 + trial % 9);
    for (int& l : labels) l = pick(rng);
    const TargetPair y = build_targets(labels);
    expect_row_stochastic(y.v2t);
    expect_row_stochastic(y.t2v);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = 0; j < labels.size(); ++j) {
        EXPECT_EQ(y.v2t(i, j) > 0, labels[i] == labels[j]);
      }
    }
  }
}

TEST(TotalLoss, UniformPredictionsGiveTwoLnTwo) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(7);
  const ClassBank classes = random_classes(3, 1, c.text_dim, rng);
  Batch batch = random_batch(2, c.visual_dim, 1, rng);
  batch.labels = {0, 2};
  const LossResult r = total_loss(c, ModelParams::zeros(c), batch, classes);
  EXPECT_NEAR(r.value, 2 * std::numbers::ln2, 1e-15);
}

TEST(TotalLoss, RejectsUnseenLabel) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(8);
  const ClassBank classes = random_classes(3, 1, c.text_dim, rng);
  Batch batch = random_batch(3, c.visual_dim, 3, rng);
  batch.labels[1] = 3;
  EXPECT_THROW(total_loss(c, ModelParams::initialize(c, 0), batch, classes), ContractViolation);
}

TEST(TotalLoss, OverfitsFixedBatch) {
  for (bool da_only : {false, true}) {
    const ModelConfig c = gradcheck_config(da_only);
    std::mt19937_64 rng(9);
    const ClassBank classes = random_classes(4, 1, c.text_dim, rng);
    const Batch batch = random_batch(6, c.visual_dim, 4, rng);
    ModelParams p = ModelParams::initialize(c, 9);
    AdamState state = AdamState::for_params(p);
    const double first = total_loss(c, p, batch, classes).value;
    double last = first;
    for (int step = 0; step < 50; ++step) {
      LossResult r = total_loss(c, p, batch, classes);
      last = r.value;
      adam_step(p, gradients(r.cache, p), state, 1e-2);
    }
    EXPECT_LT(last, 0.7 * first) << "da_only " << da_only;
  }
}

// Randomized invariants over many small instances and every module switch.
TEST(Invariants, SimilarityMatricesAndFusion) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    ModelConfig c = gradcheck_config(trial % 3 == 1);
    c.use_sde = trial % 2 == 0;
    if (trial % 3 == 2) {
      c.use_da = false;
      c.activation = static_cast<ScoreActivation>((trial / 3) % 3);
    }
    c.learnable_tau = trial % 5 == 0;
    const ClassBank classes = random_classes(4, 2, c.text_dim, rng);
    const Batch batch = random_batch(1 + trial % 8, c.visual_dim, 4, rng);
    const ModelParams p = ModelParams::initialize(c, trial);
    const LossResult r = total_loss(c, p, batch, classes);
    const ForwardCache& k = r.cache;
    EXPECT_GE(r.value, 0.0);
    for (Var v : {k.p_v2t, k.p_t2v}) expect_row_stochastic(k.tape.value(v));
    for (const auto& v : {k.p1_v2t, k.p1_t2v, k.p2_v2t, k.p2_t2v}) {
      if (v) expect_row_stochastic(k.tape.value(*v));
    }
    if (c.use_da && c.use_aa) {
      const Matrix& a = k.tape.value(*k.p1_v2t);
      const Matrix& b = k.tape.value(*k.p2_v2t);
      const Matrix& f = k.tape.value(k.p_v2t);
      for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_LE(std::min(a.data()[i], b.data()[i]), f.data()[i] + 1e-15);
        EXPECT_GE(std::max(a.data()[i], b.data()[i]), f.data()[i] - 1e-15);
      }
    }
    const ClassScores s = score_classes(c, p, batch.visual, classes);
    expect_row_stochastic(s.fused);
  }
}

TEST(Invariants, DirectOnlyReducesToCosineSoftmax) {
  ModelConfig c = gradcheck_config(true);
  c.use_sde = false;
  std::mt19937_64 rng(11);
  const ClassBank classes = random_classes(5, 0, c.text_dim, rng);
  Batch batch = random_batch(5, c.visual_dim, 5, rng);
  batch.labels = {3, 1, 4, 0, 2};
  const ModelParams p = ModelParams::initialize(c, 11);
  const LossResult r = total_loss(c, p, batch, classes);
  Matrix text(5, c.text_dim);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto src = classes.label_embeddings().row(classes.row_of(batch.labels[i]));
    std::copy(src.begin(), src.end(), text.row(i).begin());
  }
  const SimilarityPair expected =
      direct_similarity(project_visual(c, p, batch.visual), project_text(c, p, text), c.tau);
  const Matrix& got = r.cache.tape.value(r.cache.p_v2t);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], expected.v2t.data()[i], 1e-14);
}

TEST(Classify, SingleUnseenClass) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(12);
  const ClassBank classes = random_classes(3, 1, c.text_dim, rng);
  const Classification r =
      classify(c, ModelParams::initialize(c, 1), random_matrix(1, c.visual_dim, rng), classes);
  EXPECT_EQ(r.predicted, 3);
  ASSERT_EQ(r.scores.size(), 1u);
  EXPECT_DOUBLE_EQ(r.scores[0], 1.0);
}

TEST(Classify, ScoresNormalizedAndScaleInvariant) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(13);
  const ClassBank classes = random_classes(2, 4, c.text_dim, rng);
  const ModelParams p = ModelParams::initialize(c, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix v = random_matrix(1, c.visual_dim, rng);
    const Classification r = classify(c, p, v, classes);
    double s = 0.0;
    for (double x : r.scores) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_EQ(r.class_ids, (std::vector<int>{2, 3, 4, 5}));
    EXPECT_EQ(classify(c, p, scale(v, 7.5), classes).predicted, r.predicted);
    EXPECT_EQ(classify(c, p, scale(v, 0.01), classes).predicted, r.predicted);
  }
}

TEST(Classify, TiesGoToLowestId) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(14);
  const ClassBank classes = random_classes(1, 3, c.text_dim, rng);
  const Classification r =
      classify(c, ModelParams::zeros(c), random_matrix(1, c.visual_dim, rng), classes);
  EXPECT_EQ(r.predicted, 1);
}

TEST(Classify, NeedsUnseenClasses) {
  const ModelConfig c = gradcheck_config();
  std::mt19937_64 rng(15);
  const ClassBank classes = random_classes(3, 0, c.text_dim, rng);
  EXPECT_THROW(classify(c, ModelParams::zeros(c), Matrix(1, c.visual_dim, 1.0), classes),
               std::invalid_argument);
}

}  // namespace
}  // namespace dvta
