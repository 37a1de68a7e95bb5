#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dvta/alignment/model.hpp"
#include "dvta/dataio/synthetic.hpp"
#include "dvta/errors.hpp"
#include "dvta/zeroshot/ablation.hpp"
#include "dvta/zeroshot/evaluate.hpp"
#include "dvta/zeroshot/export.hpp"

namespace dvta {
namespace {

ModelConfig toy_model(const Dataset& d) {
  ModelConfig c;
  c.visual_dim = d.samples.visual.cols();
  c.text_dim = d.classes.text_dim();
  c.embed_dim = 64;
  c.visual_hidden = 128;
  c.metric_hidden = {128, 64};
  return c;
}

// Linear, direct-only model whose projectors are identities: a visual row
// equal to a label embedding is classified as that label.
struct IdentityModel {
  ModelConfig config;
  ModelParams params;
  explicit IdentityModel(std::size_t d) {
    config.visual_dim = config.text_dim = config.embed_dim = d;
    config.deep_visual_projector = false;
    config.use_sde = false;
    config.use_aa = false;
    params = ModelParams::zeros(config);
    params.at("visual.w") = Matrix::identity(d);
    params.at("text.w") = Matrix::identity(d);
  }
};

SyntheticSpec five_unseen() {
  SyntheticSpec s;
  s.classes = 10;
  s.seen = 5;
  s.unseen = 5;
  return s;
}

TEST(Evaluate, PerfectPredictions) {
  SyntheticSpec spec = five_unseen();
  spec.visual_dim = spec.text_dim;
  Dataset d = generate_synthetic(spec).data;
  // Replace every visual row with its class's label embedding.
  for (std::size_t i = 0; i < d.samples.labels.size(); ++i) {
    const auto e = d.classes.label_embeddings().row(d.classes.row_of(d.samples.labels[i]));
    std::copy(e.begin(), e.end(), d.samples.visual.row(i).begin());
  }
  const IdentityModel m(spec.text_dim);
  const UnseenBank unseen = restrict_to_split<Split::kUnseen>(d.samples, d.classes);
  const EvalReport r = evaluate(m.params, m.config, unseen, d.classes);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.total, 250u);
  ASSERT_EQ(r.confusion.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(r.confusion[i][j], i == j ? 50u : 0u);
    EXPECT_EQ(r.per_class[i].id, static_cast<int>(5 + i));
    EXPECT_EQ(r.per_class[i].accuracy, 1.0);
  }
}

TEST(Evaluate, UntrainedModelNearChance) {
  double sum = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec = five_unseen();
    spec.seed = seed;
    const Dataset d = generate_synthetic(spec).data;
    const ModelConfig c = toy_model(d);
    const UnseenBank unseen = restrict_to_split<Split::kUnseen>(d.samples, d.classes);
    const EvalReport r = evaluate(ModelParams::initialize(c, seed), c, unseen, d.classes);
    sum += r.accuracy;
    detail << r.accuracy << ' ';
  }
  const double mean = sum / 10;
  EXPECT_GE(mean, 0.1) << detail.str();
  EXPECT_LE(mean, 0.35) << detail.str();
}

class EvaluateReport : public ::testing::Test {
 protected:
  Dataset d = generate_synthetic(five_unseen()).data;
  ModelConfig c = toy_model(d);
  ModelParams p = ModelParams::initialize(c, 3);
  UnseenBank unseen = restrict_to_split<Split::kUnseen>(d.samples, d.classes);
};

TEST_F(EvaluateReport, AccountingIdentities) {
  const EvalReport r = evaluate(p, c, unseen, d.classes);
  std::size_t samples = 0, trace = 0, weighted = 0;
  for (std::size_t i = 0; i < r.per_class.size(); ++i) {
    samples += r.per_class[i].samples;
    weighted += r.per_class[i].correct;
    trace += r.confusion[i][i];
    std::size_t row = 0;
    for (std::size_t x : r.confusion[i]) row += x;
    EXPECT_EQ(row, r.per_class[i].samples);
  }
  EXPECT_EQ(samples, r.total);
  EXPECT_EQ(r.total, unseen.size());
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / r.total);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(weighted) / r.total);
  EXPECT_EQ(r.predictions.size(), r.total);
}

TEST_F(EvaluateReport, PureAndThreadIndependent) {
  const std::uint32_t before = p.checksum();
  const EvalReport a = evaluate(p, c, unseen, d.classes);
  EXPECT_EQ(p.checksum(), before);
  EXPECT_EQ(a.params_checksum, before);
  const EvalReport b = evaluate(p, c, unseen, d.classes);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EvalOptions threaded;
  threaded.threads = 4;
  threaded.chunk = 7;
  EXPECT_EQ(to_json(evaluate(p, c, unseen, d.classes, threaded)).dump(), to_json(a).dump());
  EXPECT_EQ(a.config_fingerprint, config_fingerprint(c));
}

TEST_F(EvaluateReport, RejectsSeenSamples) {
  EXPECT_THROW(evaluate(p, c, d.samples, d.classes), ContractViolation);
}

TEST_F(EvaluateReport, Serialization) {
  const EvalReport r = evaluate(p, c, unseen, d.classes);
  const std::string csv = per_class_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class_id,name,samples,correct,accuracy");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("accuracy").get<double>(), r.accuracy);
  // Text round trip keeps every bit.
  for (double v : {0.1, 1.0 / 3.0, 0.123456789012345678}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Ablation, ModulesPlanLattice) {
  const AblationPlan plan = modules_plan(ModelConfig{}, {0, 1, 2});
  ASSERT_EQ(plan.variants.size(), 5u);
  const char* names[] = {"baseline", "SDE", "SDE+DA", "SDE+AA", "DVTA"};
  const bool flags[5][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {1, 0, 1}, {1, 1, 1}};
  for (std::size_t i = 0; i < 5; ++i) {
    const AblationVariant& v = plan.variants[i];
    EXPECT_EQ(v.name, names[i]);
    EXPECT_EQ(v.row, static_cast<int>(i + 1));
    EXPECT_EQ(v.config.use_sde, flags[i][0]);
    EXPECT_EQ(v.config.deep_visual_projector, flags[i][1]);
    EXPECT_EQ(v.config.use_aa, flags[i][2]);
    EXPECT_TRUE(v.config.use_da || v.config.use_aa);
  }
  EXPECT_TRUE(validate(plan).empty());
}

TEST(Ablation, GammaAndLossPlans) {
  const AblationPlan g = gamma_plan(ModelConfig{}, {0});
  ASSERT_EQ(g.variants.size(), 6u);
  EXPECT_EQ(g.variants[0].name, "None");
  EXPECT_EQ(g.variants[0].config.activation, ScoreActivation::kNone);
  EXPECT_EQ(g.variants[1].name, "Sigmoid");
  EXPECT_EQ(g.variants[1].config.activation, ScoreActivation::kSigmoid);
  const double gammas[] = {0.005, 0.01, 0.1, 0.5};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(g.variants[2 + i].config.activation, ScoreActivation::kLeakySigmoid);
    EXPECT_EQ(g.variants[2 + i].config.gamma, gammas[i]);
  }
  const AblationPlan l = loss_plan(ModelConfig{}, {0}, {0.05, 0.1});
  ASSERT_EQ(l.variants.size(), 6u);
  EXPECT_EQ(l.variants[0].loss_label, "InfoNCE");
  EXPECT_EQ(l.variants[2].loss_label, "SoftmaxCE");
  EXPECT_EQ(l.variants[4].loss_label, "KLD");
  EXPECT_EQ(l.variants[5].config.loss, LossKind::kKld);
  EXPECT_EQ(l.variants[5].config.tau, 0.1);
}

TEST(Ablation, PlanFromJson) {
  std::vector<std::string> problems;
  const auto plan = ablation_plan_from_json(
      nlohmann::json::parse(R"({"preset":"gamma","seeds":[3,4],"gammas":[0.2]})"), ModelConfig{}, problems);
  EXPECT_TRUE(problems.empty());
  EXPECT_EQ(plan.variants.size(), 3u);
  EXPECT_EQ(plan.seeds, (std::vector<std::uint64_t>{3, 4}));
  ablation_plan_from_json(nlohmann::json::parse(R"({"preset":"nope"})"), ModelConfig{}, problems);
  EXPECT_FALSE(problems.empty());
}

class AblationRunTest : public ::testing::Test {
 protected:
  Dataset d = [] {
    SyntheticSpec s;
    s.samples_per_class = 12;
    return generate_synthetic(s).data;
  }();
  TrainConfig train_config = [] {
    TrainConfig t;
    t.epochs = 2;
    t.batch_size = 32;
    t.learning_rate = 1e-3;
    return t;
  }();
  ModelConfig base = [this] {
    ModelConfig c = toy_model(d);
    c.embed_dim = 8;
    c.visual_hidden = 8;
    c.metric_hidden = {8, 4};
    return c;
  }();
};

TEST_F(AblationRunTest, ModulesTableLayoutAndPairing) {
  const AblationTable t = run_ablation(modules_plan(base, {0, 1}), d, train_config);
  ASSERT_EQ(t.runs.size(), 10u);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t v = 1; v < 5; ++v) EXPECT_EQ(t.run(v, s).data_order_digest, t.run(0, s).data_order_digest);
  }
  EXPECT_NE(t.run(0, 0).data_order_digest, t.run(0, 1).data_order_digest);
  const std::string csv = ablation_csv(t);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,name,sde,da,aa,seed_0,seed_1,average");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("(1),baseline,0,0,0,", 0), 0u) << line;
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  EXPECT_EQ(ablation_runs_csv(t).substr(0, 51), "variant,seed,accuracy,final_loss,data_order_digest\n");
}

TEST_F(AblationRunTest, SingleVariantEqualsTrainEval) {
  AblationPlan plan;
  plan.variants.push_back({"only", base});
  plan.seeds = {5};
  const AblationTable t = run_ablation(plan, d, train_config);
  TrainConfig tc = train_config;
  tc.seed = 5;
  const TrainResult r = train(tc, base, restrict_to_split<Split::kSeen>(d.samples, d.classes), d.classes);
  const EvalReport e =
      evaluate(r.params, base, restrict_to_split<Split::kUnseen>(d.samples, d.classes), d.classes);
  EXPECT_EQ(t.runs.at(0).report.accuracy, e.accuracy);
  EXPECT_EQ(t.runs.at(0).report.predictions, e.predictions);
  EXPECT_EQ(t.runs.at(0).final_loss, r.history.back().loss);
  EXPECT_EQ(ablation_csv(t).substr(0, 5), "name,");
}

TEST_F(AblationRunTest, GammaAndLossLayouts) {
  const std::string g = ablation_csv(run_ablation(gamma_plan(base, {0}), d, train_config));
  EXPECT_EQ(g.substr(0, g.find('\n')), "activation,seed_0,average");
  EXPECT_NE(g.find("\nNone,"), std::string::npos);
  EXPECT_NE(g.find("\nSigmoid,"), std::string::npos);
  EXPECT_NE(g.find("\n0.005,"), std::string::npos);
  const std::string l = ablation_csv(run_ablation(loss_plan(base, {0}, {0.1, 0.5}), d, train_config));
  EXPECT_EQ(l.substr(0, l.find('\n')), "loss,tau_0.1,tau_0.5");
  for (const char* row : {"\nInfoNCE,", "\nSoftmaxCE,", "\nKLD,"}) EXPECT_NE(l.find(row), std::string::npos);
}

TEST(ExportSimilarity, MatricesConsistent) {
  const Dataset d = generate_synthetic({}).data;
  const ModelConfig c = toy_model(d);
  const ModelParams p = ModelParams::initialize(c, 1);
  Batch batch = gather_batch(d.samples, {0, 1, 60, 61, 120, 450, 451, 2});
  const SimilarityExport s = export_similarity_matrix(p, c, batch, d.classes);
  ASSERT_TRUE(s.p1 && s.p2);
  EXPECT_EQ(s.y, build_targets(batch.labels).v2t);
  for (std::size_t i = 0; i < s.p.size(); ++i) {
    EXPECT_NEAR(s.p.data()[i], (s.p1->data()[i] + s.p2->data()[i]) / 2, 1e-12);
  }
  for (const Matrix* m : {&s.p, &*s.p1, &*s.p2, &s.y}) {
    for (std::size_t i = 0; i < m->rows(); ++i) {
      double sum = 0.0;
      for (double x : m->row(i)) sum += x;
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
  const std::string csv = matrix_csv(s.y);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
}

TEST(ExportEmbeddings, PcaProperties) {
  const Dataset d = generate_synthetic({}).data;
  const ModelConfig c = toy_model(d);
  const EmbeddingExport e = export_embeddings(ModelParams::initialize(c, 2), c, d.samples);
  ASSERT_EQ(e.embeddings.rows(), 500u);
  const Matrix& xy = e.pca.coordinates;
  ASSERT_EQ(xy.cols(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < xy.rows(); ++i) mean += xy(i, k);
    EXPECT_NEAR(mean / xy.rows(), 0.0, 1e-9);
  }
  double dot = 0.0;
  for (std::size_t k = 0; k < e.pca.components.cols(); ++k) {
    dot += e.pca.components(0, k) * e.pca.components(1, k);
  }
  EXPECT_NEAR(dot, 0.0, 1e-6);
  EXPECT_GE(e.pca.variances[0], e.pca.variances[1]);
  const std::string csv = embeddings_csv(e);
  EXPECT_EQ(csv.substr(0, 14), "label,pc1,pc2,");
}

TEST(ExportEmbeddings, RankOneData) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> dir(16);
  for (double& x : dir) x = n(rng);
  Matrix rows(200, 16);
  for (std::size_t i = 0; i < 200; ++i) {
    const double t = n(rng);
    for (std::size_t k = 0; k < 16; ++k) rows(i, k) = 3.0 + t * dir[k] + 1e-4 * n(rng);
  }
  const PrincipalComponents pc = principal_components(rows);
  EXPECT_GT(pc.variances[0] / pc.total_variance, 0.999);
}

}  // namespace
}  // namespace dvta
