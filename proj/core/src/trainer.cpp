#include "gim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "gim/error.hpp"
#include "gim/random.hpp"

namespace gim {

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning_rate must be >= 0");
  if (eval_every < 1) throw UsageError("eval_every must be >= 1");
  if (threads < 1) throw UsageError("threads must be >= 1");
  if (!std::isfinite(final_learning_rate)) throw UsageError("final_learning_rate must be finite");
}

double TrainConfig::rate_at(std::size_t step) const {
  if (final_learning_rate < 0.0 || max_steps <= 1) return learning_rate;
  const std::size_t s = std::clamp<std::size_t>(step, 1, max_steps);
  const double f = static_cast<double>(s - 1) / static_cast<double>(max_steps - 1);
  return learning_rate + f * (final_learning_rate - learning_rate);
}

std::vector<Transition> make_transitions(std::span<const Sequence> sequences) {
  std::vector<Transition> out;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const Sequence& seq = sequences[s];
    for (std::size_t t = 0; t < seq.size(); ++t) {
      Transition tr;
      tr.sequence = s;
      tr.step = t;
      tr.terminal = seq.is_terminal(t);
      tr.goal = seq.goal(t);
      out.push_back(tr);
    }
  }
  return out;
}

namespace {

std::span<const EncodedStep> window_at(std::span<const Sequence> sequences, std::size_t s, std::size_t t,
                                       const NetworkParams& params) {
  return sequences[s].window(t, params.config().max_trace);
}

}  // namespace

QOutput sarsa_target(const Transition& tr, std::span<const Sequence> sequences, const NetworkParams& params) {
  if (tr.terminal) return tr.goal;
  return forward(params, window_at(sequences, tr.sequence, tr.step + 1, params));
}

void TrainWorkspace::prepare(std::size_t batch_size, std::size_t num_params) {
  if (sample_gradients_.size() != batch_size || (batch_size > 0 && sample_gradients_[0].size() != num_params)) {
    sample_gradients_.assign(batch_size, std::vector<double>(num_params, 0.0));
  }
  gradient_.assign(num_params, 0.0);
  losses_.assign(batch_size, 0.0);
}

StepResult batch_gradient(const NetworkParams& params, std::span<const Sequence> sequences,
                          std::span<const Transition> batch, const TrainConfig& config, TrainWorkspace& ws) {
  if (batch.empty()) throw UsageError("train_step: empty batch");
  ws.prepare(batch.size(), params.size());
  const double scale = 2.0 / static_cast<double>(batch.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    ForwardCache current;
    ForwardCache next;
    for (std::size_t b = begin; b < end; ++b) {
      const Transition& tr = batch[b];
      auto& grad = ws.sample_gradients()[b];
      std::fill(grad.begin(), grad.end(), 0.0);
      const QOutput q = forward(params, window_at(sequences, tr.sequence, tr.step, params), &current);
      QOutput target = tr.goal;
      const bool bootstrap = !tr.terminal;
      if (bootstrap) target = forward(params, window_at(sequences, tr.sequence, tr.step + 1, params), &next);
      QOutput upstream{};
      double loss = 0.0;
      for (std::size_t k = 0; k < kNumHeads; ++k) {
        const double d = q[k] - target[k];
        loss += d * d;
        upstream[k] = scale * d;
      }
      ws.losses()[b] = loss;
      backward(params, current, upstream, grad);
      if (config.full_gradient && bootstrap) {
        for (double& u : upstream) u = -u;
        backward(params, next, upstream, grad);
      }
    }
  };

  const std::size_t nthreads = std::min<std::size_t>(config.threads, batch.size());
  if (nthreads <= 1) {
    work(0, batch.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (batch.size() + nthreads - 1) / nthreads;
    for (std::size_t begin = 0; begin < batch.size(); begin += chunk) {
      pool.emplace_back(work, begin, std::min(batch.size(), begin + chunk));
    }
  }

  // Fixed-order reduction.
  auto& grad = ws.gradient();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& g = ws.sample_gradients()[b];
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    loss += ws.losses()[b];
  }
  StepResult r;
  r.loss = loss / static_cast<double>(batch.size());
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  r.gradient_norm = std::sqrt(sq);
  return r;
}

StepResult train_step(NetworkParams& params, std::span<const Sequence> sequences, std::span<const Transition> batch,
                      const TrainConfig& config, TrainWorkspace& ws) {
  const StepResult r = batch_gradient(params, sequences, batch, config, ws);
  if (!std::isfinite(r.loss) || !std::isfinite(r.gradient_norm)) {
    std::ostringstream msg;
    msg << "non-finite loss (" << r.loss << ") or gradient norm (" << r.gradient_norm << ") on a batch of "
        << batch.size() << " transitions starting at sequence " << batch[0].sequence << " step " << batch[0].step;
    throw NumericalError(msg.str());
  }
  double step = config.learning_rate;
  if (config.gradient_clip > 0.0 && r.gradient_norm > config.gradient_clip) {
    step *= config.gradient_clip / r.gradient_norm;
  }
  if (step != 0.0) {
    auto values = params.values();
    const auto& grad = ws.gradient();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= step * grad[i];
  }
  return r;
}

double td_error_eval(const NetworkParams& params, std::span<const Sequence> sequences,
                     std::span<const Transition> transitions) {
  if (transitions.empty()) throw UsageError("td_error_eval: empty transition set");
  double total = 0.0;
  for (const auto& tr : transitions) {
    const QOutput q = forward(params, window_at(sequences, tr.sequence, tr.step, params));
    const QOutput y = sarsa_target(tr, sequences, params);
    for (std::size_t k = 0; k < kNumHeads; ++k) total += (q[k] - y[k]) * (q[k] - y[k]);
  }
  return total / static_cast<double>(transitions.size());
}

TrainResult train(const Dataset& dataset, const NetworkConfig& network, const TrainConfig& config,
                  const EvalCallback& on_eval) {
  config.validate();
  NetworkConfig net = network;
  net.input_width = encoded_width(dataset.vocabulary.size());
  net.validate();

  TrainResult result{init_params(net, config.seed, dataset.scaler, dataset.vocabulary), {}, 0, false};
  const std::span<const Sequence> sequences(dataset.sequences);
  std::vector<Transition> transitions = make_transitions(sequences);
  if (transitions.empty()) throw DataError("train: dataset has no transitions");

  Rng rng(config.seed ^ 0xA5A5A5A5DEADBEEFULL);
  std::vector<Transition> eval_set;
  if (config.eval_sample == 0 || config.eval_sample >= transitions.size()) {
    eval_set = transitions;
  } else {
    std::vector<std::size_t> idx(transitions.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx.begin(), idx.end());
    idx.resize(config.eval_sample);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) eval_set.push_back(transitions[i]);
  }

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  auto evaluate = [&](std::size_t step, double mean_loss) {
    LogRow row{step, mean_loss, td_error_eval(result.params, sequences, eval_set)};
    result.curve.push_back(row);
    if (on_eval) on_eval(result.params, row);
    if (row.eval_td_error < best - config.plateau_min_delta) {
      best = row.eval_td_error;
      since_best = 0;
    } else {
      ++since_best;
    }
  };

  evaluate(0, std::numeric_limits<double>::quiet_NaN());
  TrainWorkspace ws;
  std::size_t cursor = transitions.size();  // forces a shuffle on the first step
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;
  std::vector<Transition> batch;
  batch.reserve(config.batch_size);
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor >= transitions.size()) {
        rng.shuffle(transitions.begin(), transitions.end());
        cursor = 0;
      }
      batch.push_back(transitions[cursor++]);
    }
    TrainConfig step_config = config;
    step_config.learning_rate = config.rate_at(step);
    const StepResult r = train_step(result.params, sequences, batch, step_config, ws);
    interval_loss += r.loss;
    ++interval_steps;
    result.steps = step;
    if (step % config.eval_every == 0 || step == config.max_steps) {
      evaluate(step, interval_loss / static_cast<double>(interval_steps));
      interval_loss = 0.0;
      interval_steps = 0;
      if (config.plateau_patience > 0 && since_best >= config.plateau_patience) {
        result.stopped_on_plateau = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace gim
