#include "gim/valuation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <unordered_map>

#include "gim/csv.hpp"
#include "gim/error.hpp"

namespace gim {

QSeries network_q_series(const NetworkParams& params, const Sequence& sequence) {
  QSeries q(sequence.size());
  ForwardCache cache;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    q[t] = forward(params, sequence.window(t, params.config().max_trace), &cache);
  }
  return q;
}

QProvider network_provider(const NetworkParams& params) {
  return [&params](const Sequence& s) { return network_q_series(params, s); };
}

double impact(const QSeries& q, const Sequence& sequence, std::size_t t) {
  if (t == 0) return 0.0;
  const std::size_t head = head_of(sequence.events.at(t).obs.side);
  return q.at(t)[head] - q.at(t - 1)[head];
}

double impact(const NetworkParams& params, const Sequence& sequence, std::size_t t) {
  if (t == 0) return 0.0;
  const int cap = params.config().max_trace;
  const std::size_t head = head_of(sequence.events.at(t).obs.side);
  return forward(params, sequence.window(t, cap))[head] - forward(params, sequence.window(t - 1, cap))[head];
}

std::vector<ImpactRecord> compute_impacts(std::span<const Sequence> sequences, const ActionVocabulary& vocabulary,
                                          const QProvider& provider) {
  std::vector<ImpactRecord> out;
  std::unordered_map<std::string, std::size_t> game_offset;
  for (const auto& seq : sequences) {
    const QSeries q = provider(seq);
    if (q.size() != seq.size()) throw UsageError("Q provider returned a series of the wrong length");
    std::size_t& offset = game_offset[seq.game_id];
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const Event& e = seq.events[t];
      ImpactRecord r;
      r.game_id = seq.game_id;
      r.event_index = offset + t;
      r.player_id = e.player_id;
      r.team_id = e.team_id;
      r.side = e.obs.side;
      r.action = vocabulary.index_of(e.action);
      r.value = impact(q, seq, t);
      if (!std::isfinite(r.value)) {
        throw NumericalError("non-finite impact in game " + seq.game_id + " at event " + std::to_string(r.event_index));
      }
      out.push_back(std::move(r));
    }
    offset += seq.size();
  }
  return out;
}

PlayerLedger::PlayerLedger(std::vector<PlayerRecord> players) : players_(std::move(players)) {
  std::sort(players_.begin(), players_.end(), [](const PlayerRecord& a, const PlayerRecord& b) {
    if (a.gim != b.gim) return a.gim > b.gim;
    return a.player_id < b.player_id;
  });
}

const PlayerRecord* PlayerLedger::find(const std::string& player_id) const {
  for (const auto& p : players_) {
    if (p.player_id == player_id) return &p;
  }
  return nullptr;
}

std::map<std::string, double> PlayerLedger::gim_map() const {
  std::map<std::string, double> m;
  for (const auto& p : players_) m[p.player_id] = p.gim;
  return m;
}

PlayerLedger ledger_from_impacts(std::span<const ImpactRecord> impacts, std::size_t vocabulary_size) {
  std::map<std::string, PlayerRecord> by_player;
  for (const auto& r : impacts) {
    auto& p = by_player[r.player_id];
    if (p.player_id.empty()) {
      p.player_id = r.player_id;
      p.team_id = r.team_id;
      p.action_counts.assign(vocabulary_size, 0);
    }
    p.gim += r.value;
    p.gim_by_game[r.game_id] += r.value;
    if (r.action < p.action_counts.size()) ++p.action_counts[r.action];
  }
  std::vector<PlayerRecord> players;
  players.reserve(by_player.size());
  for (auto& [id, p] : by_player) {
    p.games = p.gim_by_game.size();
    players.push_back(std::move(p));
  }
  return PlayerLedger(std::move(players));
}

PlayerLedger compute_gim(const Dataset& dataset, const QProvider& provider) {
  const auto impacts = compute_impacts(dataset.sequences, dataset.vocabulary, provider);
  return ledger_from_impacts(impacts, dataset.vocabulary.size());
}

PlayerLedger compute_gim(const NetworkParams& params, const Dataset& dataset) {
  return compute_gim(dataset, network_provider(params));
}

StatsTable load_stats_csv(const std::string& path) {
  const csv::Table t = csv::read_table_file(path);
  const auto id = t.require_column("player_id", path);
  const auto goals = t.require_column("goals", path);
  const auto assists = t.require_column("assists", path);
  const auto points = t.require_column("points", path);
  const auto games = t.require_column("games", path);
  const auto skill = t.column("skill");
  StatsTable out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    auto num = [&](std::size_t c) {
      auto v = csv::parse_double(row[c]);
      if (!v) throw RowError(path, t.lines[i], "unparseable number '" + row[c] + "' in column '" + t.header[c] + "'");
      return *v;
    };
    PlayerStats s;
    s.goals = num(goals);
    s.assists = num(assists);
    s.points = num(points);
    s.games = num(games);
    if (skill && !row[*skill].empty()) s.skill = num(*skill);
    out[row[id]] = s;
  }
  return out;
}

void write_stats_csv(const StatsTable& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write stats file '" + path + "'");
  out << "player_id,skill,goals,assists,points,games\n";
  using csv::format_double;
  for (const auto& [id, s] : stats) {
    out << csv::escape(id) << ',';
    if (s.skill) out << format_double(*s.skill);
    out << ',' << format_double(s.goals) << ',' << format_double(s.assists) << ',' << format_double(s.points) << ','
        << format_double(s.games) << '\n';
  }
}

std::vector<RankingRow> rank_players(const PlayerLedger& ledger, const StatsTable* stats) {
  std::vector<RankingRow> rows;
  std::size_t rank = 0;
  for (const auto& p : ledger.players()) {
    RankingRow r;
    r.rank = ++rank;
    r.player_id = p.player_id;
    r.team_id = p.team_id;
    r.gim = p.gim;
    r.games = p.games;
    if (stats) {
      if (auto it = stats->find(p.player_id); it != stats->end()) r.stats = it->second;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_rankings_csv(std::span<const RankingRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write rankings file '" + path + "'");
  out << "rank,player_id,team_id,gim,goals,assists,points,games\n";
  for (const auto& r : rows) {
    out << r.rank << ',' << csv::escape(r.player_id) << ',' << csv::escape(r.team_id) << ',' << std::fixed
        << std::setprecision(6) << r.gim << std::defaultfloat << std::setprecision(17) << ',';
    if (r.stats) {
      out << r.stats->goals << ',' << r.stats->assists << ',' << r.stats->points << ',';
    } else {
      out << ",,,";
    }
    out << r.games << '\n';
  }
}

TickerSeries value_ticker(const Dataset& dataset, const std::string& game_id, const QProvider& provider) {
  TickerSeries ticker;
  bool found = false;
  for (const auto& seq : dataset.sequences) {
    if (seq.game_id != game_id) continue;
    found = true;
    const QSeries q = provider(seq);
    for (std::size_t t = 0; t < seq.size(); ++t) ticker.push_back({seq.events[t].game_time, q[t]});
  }
  if (!found) throw DataError("game '" + game_id + "' not found in dataset");
  return ticker;
}

TickerSeries value_ticker(const NetworkParams& params, const Dataset& dataset, const std::string& game_id) {
  return value_ticker(dataset, game_id, network_provider(params));
}

void write_ticker_csv(const TickerSeries& ticker, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ticker file '" + path + "'");
  out << "game_time,q_home,q_away,q_neither\n" << std::setprecision(10);
  for (const auto& row : ticker) {
    out << row.game_time << ',' << row.q[0] << ',' << row.q[1] << ',' << row.q[2] << '\n';
  }
}

TickerEnds ticker_ends(const TickerSeries& ticker, double fraction, double game_seconds) {
  double open_sum = 0.0;
  double close_sum = 0.0;
  std::size_t open_n = 0;
  std::size_t close_n = 0;
  for (const auto& row : ticker) {
    if (row.game_time < fraction * game_seconds) {
      open_sum += row.q[kNeitherHead];
      ++open_n;
    }
    if (row.game_time >= (1.0 - fraction) * game_seconds) {
      close_sum += row.q[kNeitherHead];
      ++close_n;
    }
  }
  if (open_n == 0 || close_n == 0) throw DataError("ticker does not cover both ends of the game");
  return {open_sum / static_cast<double>(open_n), close_sum / static_cast<double>(close_n)};
}

void DiscretizationSpec::validate() const {
  if (x_bins == 0 || y_bins == 0 || time_bins == 0) throw UsageError("discretization bins must be >= 1");
  if (manpower_bins != 1 && manpower_bins != 3) throw UsageError("manpower_bins must be 1 or 3");
  if (score_bins == 0 || score_bins % 2 == 0) throw UsageError("score_bins must be odd");
}

std::size_t DiscretizationSpec::cells(std::size_t vocabulary_size) const {
  return x_bins * y_bins * time_bins * manpower_bins * score_bins * (split_actions ? vocabulary_size : 1);
}

DiscretizationSpec DiscretizationSpec::single_cell() {
  return DiscretizationSpec{1, 1, 1, 1, 1, false};
}

namespace {

std::size_t bin(double value, double lo, double hi, std::size_t n) {
  if (n <= 1) return 0;
  const double f = (value - lo) / (hi - lo);
  const auto b = static_cast<long long>(std::floor(f * static_cast<double>(n)));
  return static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(n) - 1));
}

}  // namespace

std::size_t DiscretizationSpec::cell_of(const Event& e, const ActionVocabulary& vocabulary) const {
  std::size_t idx = bin(e.obs.x, -100.0, 100.0, x_bins);
  idx = idx * y_bins + bin(e.obs.y, -42.5, 42.5, y_bins);
  idx = idx * time_bins + bin(e.obs.time_remain, 0.0, kGameSeconds, time_bins);
  idx = idx * manpower_bins + (manpower_bins == 3 ? static_cast<std::size_t>(e.obs.manpower) : 0);
  const long long half = static_cast<long long>(score_bins / 2);
  const auto sd = std::clamp<long long>(std::llround(e.obs.score_diff), -half, half);
  idx = idx * score_bins + static_cast<std::size_t>(sd + half);
  const std::size_t actions = split_actions ? vocabulary.size() : 1;
  idx = idx * actions + (split_actions ? vocabulary.index_of(e.action) : 0);
  return idx;
}

TabularQ::TabularQ(DiscretizationSpec spec, ActionVocabulary vocabulary, std::vector<QOutput> values,
                   std::vector<std::size_t> visits, std::size_t sweeps)
    : spec_(spec), vocabulary_(std::move(vocabulary)), values_(std::move(values)), visits_(std::move(visits)),
      sweeps_(sweeps) {}

QOutput TabularQ::cell_value(std::size_t cell) const {
  if (visits_.at(cell) == 0) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  return values_[cell];
}

QOutput TabularQ::lookup(const Event& event) const { return cell_value(spec_.cell_of(event, vocabulary_)); }

QProvider TabularQ::provider() const {
  return [this](const Sequence& s) {
    QSeries q(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) q[t] = lookup(s.events[t]);
    return q;
  };
}

TabularQ train_tabular_si(const Dataset& dataset, const DiscretizationSpec& spec, const TabularOptions& options) {
  spec.validate();
  const std::size_t ncells = spec.cells(dataset.vocabulary.size());
  std::vector<std::size_t> visits(ncells, 0);
  // Per visited cell: summed terminal goal vectors, self-loop count, and
  // successor-cell counts.
  struct CellStats {
    GoalVector goal_sum{0.0, 0.0, 0.0};
    std::size_t self_loops = 0;
    std::map<std::size_t, std::size_t> successors;
  };
  std::map<std::size_t, CellStats> stats;
  for (const auto& seq : dataset.sequences) {
    std::vector<std::size_t> cells(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) cells[t] = spec.cell_of(seq.events[t], dataset.vocabulary);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      ++visits[cells[t]];
      auto& cs = stats[cells[t]];
      if (seq.is_terminal(t)) {
        const GoalVector g = seq.goal(t);
        for (std::size_t k = 0; k < kNumHeads; ++k) cs.goal_sum[k] += g[k];
      } else if (cells[t + 1] == cells[t]) {
        ++cs.self_loops;
      } else {
        ++cs.successors[cells[t + 1]];
      }
    }
  }

  std::vector<QOutput> values(ncells, QOutput{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  std::size_t sweep = 0;
  for (; sweep < options.max_sweeps; ++sweep) {
    double change = 0.0;
    for (const auto& [cell, cs] : stats) {
      const double denom = static_cast<double>(visits[cell] - cs.self_loops);
      QOutput next = cs.goal_sum;
      for (const auto& [succ, count] : cs.successors) {
        for (std::size_t k = 0; k < kNumHeads; ++k) next[k] += static_cast<double>(count) * values[succ][k];
      }
      if (denom > 0.0) {
        for (auto& v : next) v /= denom;
      } else {
        // Only self-loops and no exit: keep the uniform prior.
        next = values[cell];
      }
      for (std::size_t k = 0; k < kNumHeads; ++k) change = std::max(change, std::abs(next[k] - values[cell][k]));
      values[cell] = next;
    }
    if (change <= options.tolerance) {
      ++sweep;
      break;
    }
  }
  return TabularQ(spec, dataset.vocabulary, std::move(values), std::move(visits), sweep);
}

PlayerLedger si_gim(const TabularQ& table, const Dataset& dataset) { return compute_gim(dataset, table.provider()); }

}  // namespace gim
