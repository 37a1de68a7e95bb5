#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "dvta/dataio/feature_file.hpp"
#include "dvta/dataio/synthetic.hpp"
#include "dvta/errors.hpp"
#include "dvta/trainer/adam.hpp"
#include "dvta/trainer/checkpoint.hpp"
#include "dvta/trainer/gradcheck.hpp"
#include "dvta/trainer/trainer.hpp"

namespace fs = std::filesystem;

namespace dvta {
namespace {

ModelParams scalar(double v) {
  ModelParams p;
  p.add("theta", Matrix(1, 1, v));
  return p;
}

TEST(Adam, FirstStepIsLrTimesSign) {
  ModelParams p = scalar(1.0);
  AdamState s = AdamState::for_params(p);
  adam_step(p, scalar(1.0), s, 0.1);
  EXPECT_NEAR(p.at("theta")(0, 0), 0.9, 1e-8);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  ModelParams p = scalar(2.0);
  AdamState s = AdamState::for_params(p);
  adam_step(p, scalar(0.0), s, 0.1);
  EXPECT_EQ(p.at("theta")(0, 0), 2.0);

  adam_step(p, scalar(1.0), s, 0.1);
  const double m = s.first_moment.at("theta")(0, 0);
  const double v = s.second_moment.at("theta")(0, 0);
  const double before = p.at("theta")(0, 0);
  adam_step(p, scalar(0.0), s, 0.0);
  EXPECT_EQ(p.at("theta")(0, 0), before);
  EXPECT_DOUBLE_EQ(s.first_moment.at("theta")(0, 0), 0.9 * m);
  EXPECT_DOUBLE_EQ(s.second_moment.at("theta")(0, 0), 0.999 * v);
}

TEST(Adam, ConvergesOnQuadratic) {
  ModelParams p = scalar(1.0);
  AdamState s = AdamState::for_params(p);
  for (int i = 0; i < 200; ++i) adam_step(p, scalar(2.0 * p.at("theta")(0, 0)), s, 0.1);
  EXPECT_LT(std::abs(p.at("theta")(0, 0)), 0.05);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ModelParams p = scalar(1.0);
  AdamState s = AdamState::for_params(p);
  try {
    adam_step(p, scalar(std::nan("")), s, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("theta"), std::string::npos);
  }
}

TEST(CosineSchedule, Endpoints) {
  EXPECT_EQ(cosine_annealed_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_annealed_lr(1e-3, 50, 100), 5e-4, 1e-18);
  EXPECT_NEAR(cosine_annealed_lr(1e-3, 100, 100), 0.0, 1e-18);
  EXPECT_LE(cosine_annealed_lr(1e-3, 99, 100), 1e-3 * (1 + std::cos(std::numbers::pi * 99 / 100)) / 2);
  for (int t = 1; t <= 100; ++t) {
    EXPECT_LE(cosine_annealed_lr(1.0, t, 100), cosine_annealed_lr(1.0, t - 1, 100));
  }
}

TEST(Checkpoint, RoundTrip) {
  ModelConfig c = gradcheck_config();
  c.learnable_tau = true;
  const ModelParams p = ModelParams::initialize(c, 5);
  const fs::path path = fs::temp_directory_path() / "dvta_test_ckpt.bin";
  save_checkpoint(path, c, p);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.config, c);
  ASSERT_EQ(back.params.count(), p.count());
  for (std::size_t i = 0; i < p.count(); ++i) {
    EXPECT_EQ(back.params.name(i), p.name(i));
    for (std::size_t k = 0; k < p.tensor(i).size(); ++k) {
      EXPECT_EQ(back.params.tensor(i).data()[k], static_cast<double>(static_cast<float>(p.tensor(i).data()[k])));
    }
  }
  // A reloaded checkpoint is a fixed point.
  EXPECT_EQ(encode_checkpoint(back.config, back.params), read_file_bytes(path));
}

TEST(Checkpoint, CorruptionDetected) {
  const ModelConfig c = gradcheck_config(true);
  auto bytes = encode_checkpoint(c, ModelParams::initialize(c, 1));
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= std::byte{1};
  EXPECT_THROW(decode_checkpoint(flipped), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() - 7)), FormatError);
  bytes[0] = std::byte{'X'};
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

struct Fixture {
  Dataset data = generate_synthetic({}).data;
  SeenBank seen = restrict_to_split<Split::kSeen>(data.samples, data.classes);
};

ModelConfig small_model(const Dataset& d) {
  ModelConfig c;
  c.visual_dim = d.samples.visual.cols();
  c.text_dim = d.classes.text_dim();
  c.embed_dim = 16;
  c.visual_hidden = 24;
  c.metric_hidden = {16, 8};
  return c;
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  Fixture f;
  TrainConfig t;
  t.epochs = 0;
  t.seed = 4;
  const ModelConfig c = small_model(f.data);
  const TrainResult r = train(t, c, f.seen, f.data.classes);
  EXPECT_EQ(r.params, ModelParams::initialize(c, init_seed(4)));
  EXPECT_TRUE(r.history.empty());
}

TEST(Train, DeterministicAndHistoryShape) {
  Fixture f;
  TrainConfig t;
  t.epochs = 3;
  t.learning_rate = 1e-3;
  t.batch_size = 64;
  t.seed = 12;
  t.checkpoint_interval = 2;
  const ModelConfig c = small_model(f.data);
  std::vector<std::size_t> emitted;
  const TrainResult a = train(t, c, f.seen, f.data.classes,
                              [&](std::size_t epoch, const ModelParams&) { emitted.push_back(epoch); });
  const TrainResult b = train(t, c, f.seen, f.data.classes);
  ASSERT_EQ(a.history.size(), 3u * 7u);  // ceil(400 / 64) steps per epoch
  EXPECT_EQ(emitted, (std::vector<std::size_t>{2}));
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.data_order_digest, b.data_order_digest);
  EXPECT_EQ(loss_history_csv(a.history), loss_history_csv(b.history));
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss, b.history[i].loss);
    EXPECT_TRUE(std::isfinite(a.history[i].loss));
    EXPECT_EQ(a.history[i].learning_rate, cosine_annealed_lr(1e-3, static_cast<std::int64_t>(i), 21));
  }
  EXPECT_EQ(encode_checkpoint(c, a.params), encode_checkpoint(c, b.params));

  t.seed = 13;
  EXPECT_NE(train(t, c, f.seen, f.data.classes).data_order_digest, a.data_order_digest);
}

TEST(Train, SeedStreamsSeparate) {
  EXPECT_NE(init_seed(0), sampler_seed(0));
  EXPECT_NE(init_seed(0), init_seed(1));
  Fixture f;
  TrainConfig t;
  t.epochs = 1;
  t.learning_rate = 1e-3;
  ModelConfig da = small_model(f.data);
  da.use_aa = false;
  const ModelConfig full = small_model(f.data);
  EXPECT_EQ(train(t, da, f.seen, f.data.classes).data_order_digest,
            train(t, full, f.seen, f.data.classes).data_order_digest);
}

TEST(Train, SyntheticLossDropsBelowQuarter) {
  Fixture f;
  TrainConfig t;
  t.epochs = 20;
  t.learning_rate = 1e-3;
  ModelConfig c;
  c.visual_dim = 32;
  c.text_dim = 64;
  c.embed_dim = 64;
  c.visual_hidden = 128;
  c.metric_hidden = {128, 64};
  const TrainResult r = train(t, c, f.seen, f.data.classes);
  const std::vector<double> means = epoch_means(r.history, 4);
  ASSERT_EQ(means.size(), 20u);
  EXPECT_LT(means.back(), 0.25 * means.front()) << means.front() << " -> " << means.back();
}

TEST(Gradcheck, PassesAndCatchesTampering) {
  for (bool da_only : {false, true}) {
    const GradcheckReport r = gradcheck(gradcheck_config(da_only), 3);
    EXPECT_TRUE(r.pass) << format_report(r);
  }
  GradcheckOptions bad;
  bad.tamper = [](ModelParams& g) { g.at("text.b")(0, 2) *= 1.01; };
  const GradcheckReport r = gradcheck(gradcheck_config(), 3, bad);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.first_failure(), "text.b");
  EXPECT_NE(format_report(r).find("FAIL"), std::string::npos);
}

TEST(Gradcheck, RejectsLargeToyDims) {
  ModelConfig c = gradcheck_config();
  c.embed_dim = 32;
  EXPECT_THROW(gradcheck(c, 0), std::invalid_argument);
}

}  // namespace
}  // namespace dvta
