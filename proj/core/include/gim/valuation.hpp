#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gim/ingestion.hpp"
#include "gim/qnet.hpp"

namespace gim {

/// Q triple for every step of one sequence.
using QSeries = std::vector<QOutput>;
/// Any Q-function: network, tabular, or exact oracle.
using QProvider = std::function<QSeries(const Sequence&)>;

QSeries network_q_series(const NetworkParams& params, const Sequence& sequence);
QProvider network_provider(const NetworkParams& params);

/// Change in the acting player's team head between steps t-1 and t. Zero at t = 0.
double impact(const QSeries& q, const Sequence& sequence, std::size_t t);
double impact(const NetworkParams& params, const Sequence& sequence, std::size_t t);

struct ImpactRecord {
  std::string game_id;
  std::size_t event_index = 0;  // within the game
  std::string player_id;
  std::string team_id;
  TeamSide side = TeamSide::Home;
  std::size_t action = 0;  // vocabulary index
  double value = 0.0;
};

/// One record per event, in (sequence, step) order.
std::vector<ImpactRecord> compute_impacts(std::span<const Sequence> sequences, const ActionVocabulary& vocabulary,
                                          const QProvider& provider);

struct PlayerRecord {
  std::string player_id;
  std::string team_id;
  double gim = 0.0;
  std::vector<std::size_t> action_counts;  // by vocabulary index
  std::size_t games = 0;
  std::map<std::string, double> gim_by_game;
};

class PlayerLedger {
 public:
  PlayerLedger() = default;
  /// Sorted by GIM descending, ties by player id.
  explicit PlayerLedger(std::vector<PlayerRecord> players);

  const std::vector<PlayerRecord>& players() const { return players_; }
  const PlayerRecord* find(const std::string& player_id) const;
  bool empty() const { return players_.empty(); }
  std::size_t size() const { return players_.size(); }

  /// Player id -> GIM.
  std::map<std::string, double> gim_map() const;

 private:
  std::vector<PlayerRecord> players_;
};

PlayerLedger ledger_from_impacts(std::span<const ImpactRecord> impacts, std::size_t vocabulary_size);

PlayerLedger compute_gim(const NetworkParams& params, const Dataset& dataset);
PlayerLedger compute_gim(const Dataset& dataset, const QProvider& provider);

/// Per-player success measures joined into rankings.
struct PlayerStats {
  double goals = 0.0;
  double assists = 0.0;
  double points = 0.0;
  double games = 0.0;
  std::optional<double> skill;  // simulator ground truth only
};

using StatsTable = std::map<std::string, PlayerStats>;

/// Reads player_id, goals, assists, points, games (and optional skill).
StatsTable load_stats_csv(const std::string& path);
void write_stats_csv(const StatsTable& stats, const std::string& path);

struct RankingRow {
  std::size_t rank = 0;
  std::string player_id;
  std::string team_id;
  double gim = 0.0;
  std::optional<PlayerStats> stats;
  std::size_t games = 0;
};

std::vector<RankingRow> rank_players(const PlayerLedger& ledger, const StatsTable* stats = nullptr);
/// Header: rank,player_id,team_id,gim,goals,assists,points,games.
void write_rankings_csv(std::span<const RankingRow> rows, const std::string& path);

struct TickerRow {
  double game_time = 0.0;
  QOutput q{};
};

using TickerSeries = std::vector<TickerRow>;

/// Throws DataError naming the game when it is absent.
TickerSeries value_ticker(const Dataset& dataset, const std::string& game_id, const QProvider& provider);
TickerSeries value_ticker(const NetworkParams& params, const Dataset& dataset, const std::string& game_id);
/// Header: game_time,q_home,q_away,q_neither.
void write_ticker_csv(const TickerSeries& ticker, const std::string& path);

/// Mean q_neither over the last fraction of game time minus the first fraction.
struct TickerEnds {
  double opening_neither = 0.0;
  double closing_neither = 0.0;
};
TickerEnds ticker_ends(const TickerSeries& ticker, double fraction = 0.05, double game_seconds = kGameSeconds);

/// Bins for the discretized Scoring Impact baseline.
struct DiscretizationSpec {
  std::size_t x_bins = 10;
  std::size_t y_bins = 5;
  std::size_t time_bins = 12;
  std::size_t manpower_bins = 3;  // 1 pools all situations
  std::size_t score_bins = 5;     // centered on 0, extremes clamp
  bool split_actions = true;

  void validate() const;
  std::size_t cells(std::size_t vocabulary_size) const;
  std::size_t cell_of(const Event& event, const ActionVocabulary& vocabulary) const;

  static DiscretizationSpec single_cell();
};

struct TabularOptions {
  std::size_t max_sweeps = 100000;
  double tolerance = 1e-12;
};

/// Tabular next-goal Q over discretized (state, action) cells.
class TabularQ {
 public:
  TabularQ() = default;
  TabularQ(DiscretizationSpec spec, ActionVocabulary vocabulary, std::vector<QOutput> values,
           std::vector<std::size_t> visits, std::size_t sweeps);

  /// Unvisited cells fall back to the uniform (1/3, 1/3, 1/3).
  QOutput lookup(const Event& event) const;
  QOutput cell_value(std::size_t cell) const;
  std::size_t visits(std::size_t cell) const { return visits_.at(cell); }
  std::size_t num_cells() const { return values_.size(); }
  std::size_t sweeps() const { return sweeps_; }
  const DiscretizationSpec& spec() const { return spec_; }

  QProvider provider() const;

 private:
  DiscretizationSpec spec_;
  ActionVocabulary vocabulary_;
  std::vector<QOutput> values_;
  std::vector<std::size_t> visits_;
  std::size_t sweeps_ = 0;
};

/// Batch Sarsa over the dataset: each visited cell's value is the mean of its
/// Sarsa targets (goal vector at episode end, next cell's value otherwise),
/// iterated Gauss-Seidel style to the fixed point that incremental tabular
/// Sarsa with 1/n step sizes converges to.
TabularQ train_tabular_si(const Dataset& dataset, const DiscretizationSpec& spec, const TabularOptions& options = {});

PlayerLedger si_gim(const TabularQ& table, const Dataset& dataset);

}  // namespace gim
