#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"
#include "dvta/dataio/bank.hpp"
#include "dvta/trainer/adam.hpp"

namespace dvta {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Emit a checkpoint every this many epochs; 0 disables periodic checkpoints.
  std::size_t checkpoint_interval = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::vector<std::string> validate(const TrainConfig& config, const std::string& prefix = "/train");
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc, std::vector<std::string>& problems,
                                   TrainConfig base = {}, const std::string& prefix = "/train");

struct LossRecord {
  std::int64_t step = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
};

struct TrainState {
  std::int64_t step = 0;
  std::int64_t total_steps = 0;
  double learning_rate = 0.0;
  double best_loss = 0.0;
  AdamState adam;
};

struct TrainResult {
  ModelParams params;
  std::vector<LossRecord> history;
  TrainState state;
  /// CRC-32 over every batch's row indices, in order. Equal digests mean
  /// identical batch sequences.
  std::uint32_t data_order_digest = 0;
};

/// Called after each completed epoch that falls on the checkpoint interval.
using CheckpointFn = std::function<void(std::size_t epoch, const ModelParams& params)>;

/// Seed streams derived from the run seed. Parameter initialization and batch
/// order draw from separate streams so variants with different parameter
/// layouts still see identical batch sequences.
std::uint64_t init_seed(std::uint64_t run_seed);
std::uint64_t sampler_seed(std::uint64_t run_seed);

/// Adam with a per-step cosine-annealed learning rate over
/// epochs * ceil(N / batch_size) steps. Deterministic for a fixed seed.
/// Throws NumericError when a loss or gradient goes non-finite.
TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const SeenBank& bank,
                  const ClassBank& classes, const CheckpointFn& on_checkpoint = {});

/// Mean loss per epoch, given the number of steps per epoch.
std::vector<double> epoch_means(const std::vector<LossRecord>& history, std::size_t steps_per_epoch);

std::string loss_history_csv(const std::vector<LossRecord>& history);

}  // namespace dvta
