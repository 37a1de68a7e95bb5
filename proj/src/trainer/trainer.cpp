#include "dvta/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "dvta/alignment/model.hpp"
#include "dvta/dataio/crc32.hpp"
#include "dvta/dataio/sampler.hpp"
#include "dvta/errors.hpp"

namespace dvta {
namespace {

using nlohmann::json;

// splitmix64 finalizer; decorrelates the derived streams.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t init_seed(std::uint64_t run_seed) { return mix(run_seed * 2 + 1); }
std::uint64_t sampler_seed(std::uint64_t run_seed) { return mix(run_seed * 2 + 2); }

std::vector<std::string> validate(const TrainConfig& c, const std::string& prefix) {
  std::vector<std::string> problems;
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    problems.push_back(prefix + "/learning_rate: learning rate must be positive");
  }
  if (c.batch_size < 1) problems.push_back(prefix + "/batch_size: must be >= 1");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) problems.push_back(prefix + "/beta1: must be in [0, 1)");
  if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) problems.push_back(prefix + "/beta2: must be in [0, 1)");
  if (!(c.adam.epsilon > 0.0)) problems.push_back(prefix + "/epsilon: must be positive");
  if (!(c.adam.weight_decay >= 0.0)) problems.push_back(prefix + "/weight_decay: must be >= 0");
  if (!(c.adam.grad_clip >= 0.0)) problems.push_back(prefix + "/grad_clip: must be >= 0");
  return problems;
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"epsilon", c.adam.epsilon},
              {"weight_decay", c.adam.weight_decay},
              {"grad_clip", c.adam.grad_clip},
              {"seed", c.seed},
              {"checkpoint_interval", c.checkpoint_interval}};
}

TrainConfig train_config_from_json(const json& doc, std::vector<std::string>& problems,
                                   TrainConfig base, const std::string& prefix) {
  if (!doc.is_object()) {
    problems.push_back(prefix + ": expected an object");
    return base;
  }
  static const std::set<std::string> known{"learning_rate", "epochs", "batch_size", "beta1",
                                           "beta2", "epsilon", "weight_decay", "grad_clip",
                                           "seed", "checkpoint_interval"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) problems.push_back(prefix + "/" + key + ": unknown key");
  }
  auto number = [&](const char* key, double& out) {
    if (auto it = doc.find(key); it != doc.end()) {
      if (it->is_number()) out = it->get<double>();
      else problems.push_back(prefix + "/" + key + ": expected a number");
    }
  };
  auto count = [&](const char* key, auto& out) {
    if (auto it = doc.find(key); it != doc.end()) {
      if (it->is_number_integer() && it->get<long long>() >= 0) {
        out = it->get<std::remove_reference_t<decltype(out)>>();
      } else {
        problems.push_back(prefix + "/" + key + ": expected a non-negative integer");
      }
    }
  };
  TrainConfig c = base;
  number("learning_rate", c.learning_rate);
  number("beta1", c.adam.beta1);
  number("beta2", c.adam.beta2);
  number("epsilon", c.adam.epsilon);
  number("weight_decay", c.adam.weight_decay);
  number("grad_clip", c.adam.grad_clip);
  count("epochs", c.epochs);
  count("batch_size", c.batch_size);
  count("seed", c.seed);
  count("checkpoint_interval", c.checkpoint_interval);
  return c;
}

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const SeenBank& bank,
                  const ClassBank& classes, const CheckpointFn& on_checkpoint) {
  if (auto problems = validate(config); !problems.empty()) throw ValidationError(problems);
  if (auto problems = validate(model_config); !problems.empty()) throw ValidationError(problems);
  if (bank.size() == 0) throw std::invalid_argument("train: seen bank is empty");

  TrainResult result;
  result.params = ModelParams::initialize(model_config, init_seed(config.seed));
  BatchSampler sampler(bank.size(), config.batch_size, sampler_seed(config.seed));

  TrainState& state = result.state;
  state.adam = AdamState::for_params(result.params);
  state.total_steps = static_cast<std::int64_t>(config.epochs * sampler.batches_per_epoch());
  state.best_loss = std::numeric_limits<double>::infinity();
  result.history.reserve(static_cast<std::size_t>(state.total_steps));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t b = 0; b < sampler.batches_per_epoch(); ++b) {
      const auto index = sampler.next_indices();
      result.data_order_digest = crc32(std::as_bytes(std::span(index)), result.data_order_digest);
      const Batch batch = gather_batch(bank.samples(), index);
      LossResult lr = total_loss(model_config, result.params, batch, classes);
      if (!std::isfinite(lr.value)) {
        throw NumericError("non-finite loss at step " + std::to_string(state.step));
      }
      const ModelParams grads = gradients(lr.cache, result.params);
      state.learning_rate = cosine_annealed_lr(config.learning_rate, state.step, state.total_steps);
      adam_step(result.params, grads, state.adam, state.learning_rate, config.adam);
      if (!result.params.all_finite()) {
        throw NumericError("parameters became non-finite at step " + std::to_string(state.step));
      }
      result.history.push_back({state.step, state.learning_rate, lr.value});
      state.best_loss = std::min(state.best_loss, lr.value);
      ++state.step;
    }
    if (on_checkpoint && config.checkpoint_interval > 0 &&
        (epoch + 1) % config.checkpoint_interval == 0) {
      on_checkpoint(epoch + 1, result.params);
    }
  }
  return result;
}

std::vector<double> epoch_means(const std::vector<LossRecord>& history, std::size_t steps_per_epoch) {
  std::vector<double> out;
  if (steps_per_epoch == 0) return out;
  for (std::size_t start = 0; start < history.size(); start += steps_per_epoch) {
    const std::size_t end = std::min(history.size(), start + steps_per_epoch);
    double total = 0.0;
    for (std::size_t i = start; i < end; ++i) total += history[i].loss;
    out.push_back(total / static_cast<double>(end - start));
  }
  return out;
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,lr,loss\n";
  char line[128];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g\n", static_cast<long long>(r.step),
                  r.learning_rate, r.loss);
    out += line;
  }
  return out;
}

}  // namespace dvta
