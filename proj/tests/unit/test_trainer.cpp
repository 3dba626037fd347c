#include <gtest/gtest.h>

#include <cmath>

#include "gim/error.hpp"
#include "gim/oracle_sim.hpp"
#include "gim/trainer.hpp"
#include "test_support.hpp"

namespace gim {
namespace {

using testing::make_event;
using testing::make_game;

const TeamSide H = TeamSide::Home;
const TeamSide A = TeamSide::Away;

Dataset two_episode_dataset() {
  // Episode 1: 3 events ending in a Home goal; episode 2: 4 events, no goal.
  std::vector<Event> ev{make_event("", "h1", H, 10, "pass"),     make_event("", "h2", H, 20, "shot"),
                        make_event("", "h2", H, 21, "goal"),     make_event("", "a1", A, 30, "lpr"),
                        make_event("", "a1", A, 40, "carry"),    make_event("", "h1", H, 50, "check"),
                        make_event("", "h3", H, 60, "pass")};
  return ingest_games({make_game("g1", ev)}, ActionVocabulary::default_hockey());
}

TEST(MakeTransitions, OnePerStepWithOneTerminalPerEpisode) {
  const Dataset ds = two_episode_dataset();
  ASSERT_EQ(ds.sequences.size(), 2u);
  const auto tr = make_transitions(ds.sequences);
  ASSERT_EQ(tr.size(), 7u);
  std::size_t terminals = 0;
  for (const auto& t : tr) {
    terminals += t.terminal;
    if (t.terminal) {
      EXPECT_EQ(t.step + 1, ds.sequences[t.sequence].size());
    } else {
      EXPECT_EQ(t.goal, (GoalVector{0, 0, 0}));
    }
  }
  EXPECT_EQ(terminals, 2u);
  EXPECT_EQ(tr[2].goal, (GoalVector{1, 0, 0}));
  EXPECT_EQ(tr[6].goal, (GoalVector{0, 0, 1}));
}

TEST(SarsaTarget, TerminalIgnoresParams) {
  const Dataset ds = two_episode_dataset();
  const auto tr = make_transitions(ds.sequences);
  const auto p = init_params(testing::tiny_network(ds), 4, ds.scaler, ds.vocabulary);
  EXPECT_EQ(sarsa_target(tr[2], ds.sequences, p), (QOutput{1, 0, 0}));
}

TEST(SarsaTarget, ZeroParamsGiveUniformBootstrap) {
  const Dataset ds = two_episode_dataset();
  const auto tr = make_transitions(ds.sequences);
  const NetworkParams zero(testing::tiny_network(ds), ds.scaler, ds.vocabulary);
  for (double v : sarsa_target(tr[0], ds.sequences, zero)) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
  const auto p = init_params(testing::tiny_network(ds), 4, ds.scaler, ds.vocabulary);
  for (const auto& t : tr) {
    const QOutput y = sarsa_target(t, ds.sequences, p);
    EXPECT_NEAR(y[0] + y[1] + y[2], 1.0, 1e-12);
  }
}

TEST(TrainStep, ZeroLearningRateLeavesParamsAndReportsLoss) {
  const Dataset ds = two_episode_dataset();
  const auto tr = make_transitions(ds.sequences);
  auto p = init_params(testing::tiny_network(ds), 4, ds.scaler, ds.vocabulary);
  const auto before = p;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  TrainWorkspace ws;
  const auto r = train_step(p, ds.sequences, tr, cfg, ws);
  EXPECT_EQ(p, before);
  EXPECT_GT(r.loss, 0.0);
}

TEST(TrainStep, PredictionEqualToTargetGivesZeroGradient) {
  // Two identical consecutive steps in one play: Q(s_t) equals its bootstrap target.
  std::vector<Event> ev{make_event("", "p", H, 10, "pass"), make_event("", "p", H, 10, "pass")};
  const Dataset ds = ingest_games({make_game("g", ev)}, ActionVocabulary::default_hockey());
  auto p = init_params(testing::tiny_network(ds), 8, ds.scaler, ds.vocabulary);
  p.set_max_trace(1);
  const auto tr = make_transitions(ds.sequences);
  const Transition first = tr[0];
  ASSERT_FALSE(first.terminal);
  ASSERT_EQ(ds.sequences[0].encoded[0], ds.sequences[0].encoded[1]);
  const auto before = p;
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  TrainWorkspace ws;
  const auto r = train_step(p, ds.sequences, std::span<const Transition>(&first, 1), cfg, ws);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.gradient_norm, 0.0);
  EXPECT_EQ(p, before);
}

// Only the first output bias is nonzero; every hidden activation is zero, so
// q = softmax(beta, 0, 0) and the update on beta can be worked out by hand.
TEST(TrainStep, OneParameterToyMatchesHandSgd) {
  const Dataset ds = two_episode_dataset();
  NetworkParams p(testing::tiny_network(ds), ds.scaler, ds.vocabulary);
  const std::size_t beta_index = p.layout().output_bias;
  const double beta = 0.7;
  p.values()[beta_index] = beta;
  const auto tr = make_transitions(ds.sequences);
  const Transition terminal = tr[2];  // Home goal, target (1, 0, 0)

  const double e = std::exp(beta);
  const double q0 = e / (e + 2.0);
  const double q1 = 1.0 / (e + 2.0);
  const double dq0 = q0 * (1.0 - q0);
  const double dq1 = -q0 * q1;
  const double grad = 2.0 * (q0 - 1.0) * dq0 + 2.0 * 2.0 * q1 * dq1;
  const double alpha = 0.1;
  const double expected = beta - alpha * grad;

  TrainConfig cfg;
  cfg.learning_rate = alpha;
  cfg.gradient_clip = 0.0;
  TrainWorkspace ws;
  const auto r = train_step(p, ds.sequences, std::span<const Transition>(&terminal, 1), cfg, ws);
  EXPECT_NEAR(p.values()[beta_index], expected, 1e-14);
  EXPECT_NEAR(r.loss, (q0 - 1) * (q0 - 1) + 2 * q1 * q1, 1e-14);
}

double frozen_loss(const NetworkParams& p, const Dataset& ds, std::span<const Transition> batch,
                   const std::vector<QOutput>& targets) {
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const QOutput q = forward(p, ds.sequences[batch[b].sequence].window(batch[b].step, p.config().max_trace));
    for (std::size_t k = 0; k < 3; ++k) loss += (q[k] - targets[b][k]) * (q[k] - targets[b][k]);
  }
  return loss / static_cast<double>(batch.size());
}

double full_loss(const NetworkParams& p, const Dataset& ds, std::span<const Transition> batch) {
  std::vector<QOutput> targets;
  for (const auto& t : batch) targets.push_back(sarsa_target(t, ds.sequences, p));
  return frozen_loss(p, ds, batch, targets);
}

TEST(BatchGradient, SemiGradientMatchesFrozenTargetFiniteDifferences) {
  const Dataset ds = testing::small_sim_dataset(2, 60);
  auto p = init_params(testing::tiny_network(ds, 6, 6), 21, ds.scaler, ds.vocabulary);
  const auto all = make_transitions(ds.sequences);
  const std::vector<Transition> batch(all.begin() + 5, all.begin() + 21);
  std::vector<QOutput> targets;
  for (const auto& t : batch) targets.push_back(sarsa_target(t, ds.sequences, p));
  TrainConfig cfg;
  TrainWorkspace ws;
  batch_gradient(p, ds.sequences, batch, cfg, ws);
  const auto grad = ws.gradient();
  const double eps = 1e-6;
  for (std::size_t i = 0; i < p.size(); i += 7) {
    const double orig = p.values()[i];
    p.values()[i] = orig + eps;
    const double up = frozen_loss(p, ds, batch, targets);
    p.values()[i] = orig - eps;
    const double down = frozen_loss(p, ds, batch, targets);
    p.values()[i] = orig;
    const double fd = (up - down) / (2 * eps);
    EXPECT_NEAR(grad[i], fd, 1e-6 + 1e-4 * std::abs(fd)) << "param " << i;
  }
}

TEST(BatchGradient, FullGradientMatchesMovingTargetFiniteDifferences) {
  const Dataset ds = testing::small_sim_dataset(2, 60);
  auto p = init_params(testing::tiny_network(ds, 6, 6), 22, ds.scaler, ds.vocabulary);
  const auto all = make_transitions(ds.sequences);
  const std::vector<Transition> batch(all.begin(), all.begin() + 12);
  TrainConfig cfg;
  cfg.full_gradient = true;
  TrainWorkspace ws;
  batch_gradient(p, ds.sequences, batch, cfg, ws);
  const auto grad = ws.gradient();
  cfg.full_gradient = false;
  batch_gradient(p, ds.sequences, batch, cfg, ws);
  EXPECT_NE(grad, ws.gradient());
  const double eps = 1e-6;
  for (std::size_t i = 0; i < p.size(); i += 11) {
    const double orig = p.values()[i];
    p.values()[i] = orig + eps;
    const double up = full_loss(p, ds, batch);
    p.values()[i] = orig - eps;
    const double down = full_loss(p, ds, batch);
    p.values()[i] = orig;
    const double fd = (up - down) / (2 * eps);
    EXPECT_NEAR(grad[i], fd, 1e-6 + 1e-4 * std::abs(fd)) << "param " << i;
  }
}

TEST(TrainStep, ThreadCountDoesNotChangeTheResult) {
  const Dataset ds = testing::small_sim_dataset(2, 80);
  const auto all = make_transitions(ds.sequences);
  const std::vector<Transition> batch(all.begin(), all.begin() + 32);
  auto a = init_params(testing::tiny_network(ds), 5, ds.scaler, ds.vocabulary);
  auto b = a;
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  TrainWorkspace ws;
  train_step(a, ds.sequences, batch, cfg, ws);
  cfg.threads = 4;
  train_step(b, ds.sequences, batch, cfg, ws);
  EXPECT_EQ(a, b);
}

TEST(TrainStep, LossDoesNotIncreaseOnAFixedBatch) {
  const Dataset ds = testing::small_sim_dataset(2, 60);
  const auto all = make_transitions(ds.sequences);
  const std::vector<Transition> batch(all.begin(), all.begin() + 32);
  auto p = init_params(testing::tiny_network(ds), 6, ds.scaler, ds.vocabulary);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  TrainWorkspace ws;
  double prev = full_loss(p, ds, batch);
  for (int step = 0; step < 50; ++step) {
    train_step(p, ds.sequences, batch, cfg, ws);
    const double now = full_loss(p, ds, batch);
    EXPECT_LE(now, prev + 1e-9) << "step " << step;
    prev = now;
  }
}

TEST(TrainStep, NonFiniteLossAborts) {
  const Dataset ds = two_episode_dataset();
  auto p = init_params(testing::tiny_network(ds), 4, ds.scaler, ds.vocabulary);
  p.values()[p.layout().output_weights] = std::numeric_limits<double>::quiet_NaN();
  const auto tr = make_transitions(ds.sequences);
  TrainConfig cfg;
  TrainWorkspace ws;
  EXPECT_THROW(train_step(p, ds.sequences, tr, cfg, ws), NumericalError);
}

TEST(TrainConfig, RejectsBadValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.threads = 0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(TrainConfig, LearningRateScheduleIsLinear) {
  TrainConfig c;
  c.learning_rate = 2.0;
  c.max_steps = 5;
  EXPECT_EQ(c.rate_at(1), 2.0);
  EXPECT_EQ(c.rate_at(5), 2.0);
  c.final_learning_rate = 0.0;
  EXPECT_EQ(c.rate_at(1), 2.0);
  EXPECT_DOUBLE_EQ(c.rate_at(2), 1.5);
  EXPECT_DOUBLE_EQ(c.rate_at(3), 1.0);
  EXPECT_EQ(c.rate_at(5), 0.0);
  EXPECT_EQ(c.rate_at(0), 2.0);
  EXPECT_EQ(c.rate_at(99), 0.0);
}

TEST(TdErrorEval, TerminalHomeGoalsWithZeroParams) {
  const Dataset ds = two_episode_dataset();
  const NetworkParams zero(testing::tiny_network(ds), ds.scaler, ds.vocabulary);
  const auto tr = make_transitions(ds.sequences);
  const std::vector<Transition> terminal{tr[2], tr[2]};
  EXPECT_NEAR(td_error_eval(zero, ds.sequences, terminal), 2.0 / 3.0, 1e-15);
  EXPECT_THROW(td_error_eval(zero, ds.sequences, std::span<const Transition>{}), UsageError);
  const auto p = init_params(testing::tiny_network(ds), 3, ds.scaler, ds.vocabulary);
  EXPECT_GE(td_error_eval(p, ds.sequences, tr), 0.0);
}

TEST(TdErrorEval, DeterministicSingleStateChainIsZero) {
  // Every episode is one identical event ending with a Home goal, and the
  // network reproduces (1, 0, 0) up to softmax saturation.
  std::vector<Game> games;
  for (int g = 0; g < 3; ++g) games.push_back(make_game("g" + std::to_string(g), {make_event("", "p", H, 10, "goal")}));
  const Dataset ds = ingest_games(games, ActionVocabulary::default_hockey());
  NetworkParams p(testing::tiny_network(ds), ds.scaler, ds.vocabulary);
  p.values()[p.layout().output_bias] = 800.0;
  EXPECT_EQ(td_error_eval(p, ds.sequences, make_transitions(ds.sequences)), 0.0);
}

TEST(Train, ZeroStepsReturnsInitialisation) {
  const Dataset ds = two_episode_dataset();
  const NetworkConfig net = testing::tiny_network(ds);
  TrainConfig cfg;
  cfg.max_steps = 0;
  cfg.seed = 9;
  const auto r = train(ds, net, cfg);
  EXPECT_EQ(r.params, init_params(net, 9, ds.scaler, ds.vocabulary));
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].step, 0u);
  EXPECT_TRUE(std::isnan(r.curve[0].batch_loss));
}

TEST(Train, FixedSeedGivesIdenticalCurves) {
  const Dataset ds = testing::small_sim_dataset(2, 60);
  TrainConfig cfg;
  cfg.max_steps = 30;
  cfg.eval_every = 10;
  cfg.learning_rate = 0.01;
  const auto a = train(ds, testing::tiny_network(ds), cfg);
  const auto b = train(ds, testing::tiny_network(ds), cfg);
  ASSERT_EQ(a.curve.size(), 4u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].step, b.curve[i].step);
    EXPECT_EQ(a.curve[i].eval_td_error, b.curve[i].eval_td_error);
  }
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, PlateauStopsEarly) {
  const Dataset ds = two_episode_dataset();
  TrainConfig cfg;
  cfg.max_steps = 1000;
  cfg.eval_every = 1;
  cfg.learning_rate = 0.0;
  cfg.plateau_patience = 3;
  const auto r = train(ds, testing::tiny_network(ds), cfg);
  EXPECT_TRUE(r.stopped_on_plateau);
  EXPECT_EQ(r.steps, 3u);
}

// One-hot-distinct windows make the problem tabular; Sarsa's fixed point is the
// empirical next-goal frequency of each window.
TEST(Train, TabularToyConvergesToEmpiricalFrequencies) {
  std::vector<Game> games;
  int id = 0;
  auto add = [&](std::vector<Event> ev) { games.push_back(make_game("g" + std::to_string(id++), std::move(ev))); };
  for (int i = 0; i < 3; ++i) add({make_event("", "p", H, 10, "pass"), make_event("", "p", H, 20, "goal")});
  add({make_event("", "p", H, 10, "pass"), make_event("", "q", A, 20, "goal")});
  for (int i = 0; i < 2; ++i) add({make_event("", "p", H, 10, "carry")});
  for (int i = 0; i < 2; ++i) add({make_event("", "p", H, 10, "carry"), make_event("", "p", H, 20, "goal")});
  const Dataset ds = ingest_games(games, ActionVocabulary::default_hockey());

  TrainConfig cfg;
  cfg.batch_size = 14;
  cfg.learning_rate = 0.1;
  cfg.max_steps = 12000;
  cfg.eval_every = 1000;
  cfg.gradient_clip = 0.0;
  const auto r = train(ds, testing::tiny_network(ds, 8, 8), cfg);
  const auto& pass_seq = ds.sequences[0];
  const auto& carry_seq = ds.sequences[4];
  ASSERT_EQ(pass_seq.events[0].action, "pass");
  ASSERT_EQ(carry_seq.events[0].action, "carry");
  const QOutput qp = forward(r.params, pass_seq.window(0, 10));
  const QOutput qc = forward(r.params, carry_seq.window(0, 10));
  const QOutput expected_pass{0.75, 0.25, 0.0};
  const QOutput expected_carry{0.5, 0.0, 0.5};
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(qp[k], expected_pass[k], 0.02) << k;
    EXPECT_NEAR(qc[k], expected_carry[k], 0.02) << k;
  }
}

TEST(Train, OracleErrorDecreases) {
  sim::SimSpec spec;
  spec.events_per_game = 150;
  spec.teams = 4;
  const auto season = sim::simulate_season(spec, 12, 17);
  const Dataset ds = ingest_games(sim::season_games(season), ActionVocabulary::default_hockey());
  const sim::OracleQ oracle = sim::solve_oracle_q(spec);
  TrainConfig cfg;
  cfg.max_steps = 600;
  cfg.eval_every = 300;
  cfg.learning_rate = 0.05;
  cfg.eval_sample = 512;
  std::vector<double> errors;
  train(ds, testing::tiny_network(ds, 16, 16), cfg, [&](const NetworkParams& p, const LogRow&) {
    errors.push_back(sim::compare_to_oracle(oracle, ds, network_provider(p), 20).mean_abs_error);
  });
  ASSERT_EQ(errors.size(), 3u);
  EXPECT_LT(errors.back(), errors.front());
}

}  // namespace
}  // namespace gim
