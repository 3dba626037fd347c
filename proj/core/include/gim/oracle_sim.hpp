#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "gim/event_model.hpp"
#include "gim/ingestion.hpp"
#include "gim/valuation.hpp"

namespace gim::sim {

/// Rink zone relative to the team in possession.
enum class Zone : std::uint8_t { Defensive = 0, Neutral = 1, Offensive = 2 };
inline constexpr std::size_t kZones = 3;

enum class SimAction : std::uint8_t { Lpr = 0, Pass = 1, Carry = 2, Shot = 3, DumpIn = 4, Goal = 5 };
inline constexpr std::size_t kSimActions = 6;
/// Actions the behavior policy chooses between after a recovery or a completed play.
inline constexpr std::array<SimAction, 4> kPolicyActions{SimAction::Pass, SimAction::Carry, SimAction::Shot,
                                                         SimAction::DumpIn};

const char* action_name(SimAction a);
const char* zone_name(Zone z);

/// Non-absorbing game state: zone and manpower relative to the possessor.
struct State {
  Zone zone = Zone::Neutral;
  Manpower manpower = Manpower::Even;
  TeamSide possession = TeamSide::Home;

  std::size_t index() const;
  static State from_index(std::size_t i);
  bool operator==(const State&) const = default;
};
inline constexpr std::size_t kStates = kZones * 3 * 2;

/// Oracle cell: state, action and realized outcome.
struct Cell {
  State state;
  SimAction action = SimAction::Lpr;
  ActionOutcome outcome = ActionOutcome::Success;

  std::size_t index() const;
  static Cell from_index(std::size_t i);
};
inline constexpr std::size_t kCells = kStates * kSimActions * 2;

struct Successor {
  double probability = 0.0;
  State state;
  SimAction action = SimAction::Lpr;
};

struct SimSpec {
  std::size_t events_per_game = 750;  // 0 = stationary (no clock), requires end_probability > 0
  double end_probability = 0.0;       // per-event chance the episode ends with no goal

  /// Behavior policy per zone over kPolicyActions.
  std::array<std::array<double, 4>, kZones> policy{{{0.5, 0.35, 0.0, 0.15},
                                                    {0.4, 0.35, 0.0, 0.25},
                                                    {0.45, 0.2, 0.35, 0.0}}};
  /// Base success probability per action (Lpr, Pass, Carry, Shot, DumpIn) and zone.
  std::array<std::array<double, kZones>, 5> success{{{0.85, 0.85, 0.85},
                                                     {0.8, 0.75, 0.7},
                                                     {0.75, 0.7, 0.65},
                                                     {0.02, 0.02, 0.1},
                                                     {0.8, 0.8, 0.8}}};
  double pass_advance = 0.25;
  double carry_advance = 0.5;
  double dump_in_retain = 0.35;
  double penalty_rate = 0.004;  // per event, per team, at even strength
  double penalty_end = 0.03;    // per event while one side is on the power play
  double power_play_edge = 0.1; // success multiplier 1 +/- edge on PP / SH

  std::size_t teams = 8;
  /// Skill multipliers of each team's players; must average exactly 1.
  std::vector<double> skills{0.6, 0.8, 1.0, 1.2, 1.4};

  /// Throws ValidationError when any distribution fails to sum to 1 within
  /// 1e-12 or a probability falls outside [0, 1].
  void validate() const;

  /// Success probability for an average-skill actor.
  double base_success(const State& s, SimAction a) const;
  /// Success probability for an actor with the given skill.
  double success_probability(const State& s, SimAction a, double skill) const;
  /// Distribution of the next (state, action) after a non-goal cell; empty for
  /// shot successes, which lead to the scorer's Goal cell.
  std::vector<Successor> successors(const Cell& cell) const;

  static SimSpec load(const std::string& path);
  void save(std::ostream& out) const;
  std::string to_string() const;
};

/// Q = (I - P)^{-1} R for an absorbing chain with transient-to-transient
/// matrix P and transient-to-absorbing matrix R. Throws NumericalError when
/// the residual exceeds 1e-10.
Eigen::MatrixXd solve_absorbing_chain(const Eigen::MatrixXd& transient, const Eigen::MatrixXd& absorbing);

/// Exact next-goal probabilities per cell and, for finite games, per event index.
class OracleQ {
 public:
  OracleQ() = default;
  OracleQ(SimSpec spec, std::vector<QOutput> values);

  const SimSpec& spec() const { return spec_; }
  bool stationary() const { return spec_.events_per_game == 0; }
  std::size_t horizon() const { return stationary() ? 1 : spec_.events_per_game; }

  const QOutput& value(std::size_t event_index, const Cell& cell) const;
  const QOutput& value(std::size_t event_index, std::size_t cell) const;

  /// Maps an ingested event back to its oracle cell and event index.
  Cell cell_of(const Event& event) const;
  std::size_t event_index_of(const Event& event) const;
  QOutput lookup(const Event& event) const;
  QProvider provider() const;

  double max_row_sum_error() const;

 private:
  SimSpec spec_;
  std::vector<QOutput> values_;  // [event_index * kCells + cell]
};

OracleQ solve_oracle_q(const SimSpec& spec);

struct SeasonOutput {
  std::vector<std::string> csv_lines;  // header first, ingestion schema
  StatsTable stats;
  std::size_t num_events = 0;
};

/// Round-robin season; game g is seeded with seed + g.
SeasonOutput simulate_season(const SimSpec& spec, std::size_t n_games, std::uint64_t seed);
void write_season(const SeasonOutput& season, const std::string& events_path, const std::string& stats_path);
/// The season parsed straight into games, as ingestion would from the CSV.
std::vector<Game> season_games(const SeasonOutput& season);

std::string player_id(std::size_t team, std::size_t player);
std::string team_id(std::size_t team);

PlayerLedger oracle_gim(const OracleQ& oracle, const Dataset& dataset);

struct OracleComparison {
  double mean_abs_error = 0.0;  // over qualifying cells
  std::size_t cells_used = 0;
  std::size_t events_used = 0;
  std::size_t cells_visited = 0;
};

/// Per event, mean over the three heads of |Q_hat - Q*|; averaged within each
/// (state, action, outcome) cell, then across cells with at least min_visits events.
OracleComparison compare_to_oracle(const OracleQ& oracle, const Dataset& dataset, const QProvider& provider,
                                   std::size_t min_visits = 50);

}  // namespace gim::sim
