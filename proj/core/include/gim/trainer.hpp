#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gim/ingestion.hpp"
#include "gim/qnet.hpp"

namespace gim {

/// Step t of a sequence paired with its successor t+1 in the same episode.
/// Terminal transitions have no successor and carry the episode's goal vector.
struct Transition {
  std::size_t sequence = 0;
  std::size_t step = 0;
  bool terminal = false;
  GoalVector goal{0.0, 0.0, 0.0};
};

std::vector<Transition> make_transitions(std::span<const Sequence> sequences);

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  double final_learning_rate = -1.0;  // < 0 keeps the rate constant; otherwise linear decay to it over max_steps
  std::size_t max_steps = 100000;
  std::size_t eval_every = 1000;
  std::uint64_t seed = 1;
  double gradient_clip = 10.0;  // L2 norm cap; <= 0 disables clipping
  bool full_gradient = false;   // also differentiate through the bootstrap target
  std::size_t eval_sample = 4096;  // transitions in the fixed evaluation subset; 0 = all
  std::size_t plateau_patience = 0;  // evaluations without improvement before stopping; 0 = never
  double plateau_min_delta = 1e-6;
  unsigned threads = 1;

  /// Throws UsageError for a zero batch size or non-positive learning rate.
  void validate() const;
  /// Step size used on update `step` (1-based).
  double rate_at(std::size_t step) const;
};

/// Sarsa target: the goal vector at episode end, otherwise the network's own
/// prediction for the next step (undiscounted, held constant).
QOutput sarsa_target(const Transition& transition, std::span<const Sequence> sequences, const NetworkParams& params);

struct StepResult {
  double loss = 0.0;           // mean over the batch of the summed squared error
  double gradient_norm = 0.0;  // before clipping
};

/// Reusable per-sample buffers for train_step.
class TrainWorkspace {
 public:
  void prepare(std::size_t batch_size, std::size_t num_params);
  std::vector<std::vector<double>>& sample_gradients() { return sample_gradients_; }
  std::vector<double>& gradient() { return gradient_; }
  std::vector<double>& losses() { return losses_; }

 private:
  std::vector<std::vector<double>> sample_gradients_;
  std::vector<double> gradient_;
  std::vector<double> losses_;
};

/// One clipped SGD step on the batch loss. Per-sample gradients are reduced
/// in batch order, so the result does not depend on the thread count.
StepResult train_step(NetworkParams& params, std::span<const Sequence> sequences, std::span<const Transition> batch,
                      const TrainConfig& config, TrainWorkspace& workspace);

/// Gradient of the batch loss with the target frozen (or not, per config),
/// without updating the parameters.
StepResult batch_gradient(const NetworkParams& params, std::span<const Sequence> sequences,
                          std::span<const Transition> batch, const TrainConfig& config, TrainWorkspace& workspace);

/// Mean over transitions of the summed squared TD error. Throws on an empty set.
double td_error_eval(const NetworkParams& params, std::span<const Sequence> sequences,
                     std::span<const Transition> transitions);

struct LogRow {
  std::size_t step = 0;
  double batch_loss = 0.0;     // mean batch loss since the previous row
  double eval_td_error = 0.0;  // on the fixed evaluation subset
};

struct TrainResult {
  NetworkParams params;
  std::vector<LogRow> curve;
  std::size_t steps = 0;
  bool stopped_on_plateau = false;
};

using EvalCallback = std::function<void(const NetworkParams&, const LogRow&)>;

/// Epochs over uniformly shuffled transitions. An evaluation row is emitted at
/// step 0, every eval_every steps, and at the end.
TrainResult train(const Dataset& dataset, const NetworkConfig& network, const TrainConfig& config,
                  const EvalCallback& on_eval = {});

}  // namespace gim
