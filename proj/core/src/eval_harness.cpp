#include "gim/eval_harness.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "gim/csv.hpp"
#include "gim/error.hpp"

namespace gim::eval {

Aligned align(const MetricVector& a, const MetricVector& b) {
  Aligned out;
  for (const auto& [id, va] : a) {
    auto it = b.find(id);
    if (it == b.end()) continue;
    if (!std::isfinite(va) || !std::isfinite(it->second)) {
      throw DataError("non-finite metric value for player '" + id + "'");
    }
    out.players.push_back(id);
    out.a.push_back(va);
    out.b.push_back(it->second);
  }
  return out;
}

MetricVector filter_min_games(const MetricVector& metric, const MetricVector& games, double min_games) {
  MetricVector out;
  for (const auto& [id, v] : metric) {
    auto it = games.find(id);
    if (it != games.end() && it->second >= min_games) out[id] = v;
  }
  return out;
}

namespace {

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b, const std::string& name_a,
               const std::string& name_b) {
  if (a.size() != b.size()) throw UsageError("pearson: vectors differ in length");
  if (a.size() < 2) throw DataError("pearson: fewer than 2 common players");
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0) throw DataError("correlation undefined: '" + name_a + "' has zero variance");
  if (sbb == 0.0) throw DataError("correlation undefined: '" + name_b + "' has zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double pearson(const MetricVector& a, const MetricVector& b, const std::string& name_a, const std::string& name_b) {
  const Aligned al = align(a, b);
  return pearson(al.a, al.b, name_a, name_b);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b, const std::string& name_a,
                const std::string& name_b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb, name_a, name_b);
}

double spearman(const MetricVector& a, const MetricVector& b, const std::string& name_a, const std::string& name_b) {
  const Aligned al = align(a, b);
  return spearman(al.a, al.b, name_a, name_b);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("paired_t_test: vectors differ in length");
  if (a.size() < 2) throw DataError("paired_t_test: fewer than 2 common players");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  TTestResult r;
  r.n = d.size();
  r.mean_difference = mean(d);
  double ss = 0.0;
  for (double x : d) ss += (x - r.mean_difference) * (x - r.mean_difference);
  r.sd_difference = std::sqrt(ss / static_cast<double>(r.n - 1));
  if (r.sd_difference == 0.0) {
    if (r.mean_difference == 0.0) throw DataError("paired_t_test: differences are all zero (t undefined)");
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
    r.p = 0.0;
    return r;
  }
  r.t = r.mean_difference / (r.sd_difference / std::sqrt(static_cast<double>(r.n)));
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(dist, -std::abs(r.t)));
  return r;
}

TTestResult paired_t_test(const MetricVector& a, const MetricVector& b) {
  const Aligned al = align(a, b);
  return paired_t_test(al.a, al.b);
}

std::size_t SeasonSchedule::rounds() const {
  std::size_t n = 0;
  for (const auto& [team, games] : team_games) n = std::max(n, games.size());
  return n;
}

SeasonSchedule schedule_of(const Dataset& dataset) {
  SeasonSchedule s;
  for (const auto& seq : dataset.sequences) {
    for (const auto& e : seq.events) {
      auto& games = s.team_games[e.team_id];
      if (std::find(games.begin(), games.end(), seq.game_id) == games.end()) games.push_back(seq.game_id);
    }
  }
  return s;
}

PerGameValues per_game_values(const PlayerLedger& ledger) {
  PerGameValues v;
  for (const auto& p : ledger.players()) {
    v.values[p.player_id] = p.gim_by_game;
    v.team[p.player_id] = p.team_id;
  }
  return v;
}

std::vector<MetricVector> cumulative_by_round(const PerGameValues& values, const SeasonSchedule& schedule) {
  std::vector<MetricVector> rounds(schedule.rounds());
  for (const auto& [player, by_game] : values.values) {
    auto t = values.team.find(player);
    if (t == values.team.end()) continue;
    auto sched = schedule.team_games.find(t->second);
    if (sched == schedule.team_games.end()) continue;
    double total = 0.0;
    for (std::size_t n = 0; n < sched->second.size(); ++n) {
      if (auto g = by_game.find(sched->second[n]); g != by_game.end()) total += g->second;
      rounds[n][player] = total;
    }
  }
  return rounds;
}

std::vector<CurvePoint> round_by_round(std::span<const MetricVector> rounds, const MetricVector& season) {
  std::vector<CurvePoint> curve;
  for (std::size_t n = 0; n < rounds.size(); ++n) {
    CurvePoint p;
    p.round = n + 1;
    const Aligned al = align(rounds[n], season);
    if (al.a.size() >= 2) {
      try {
        p.r = pearson(al.a, al.b);
      } catch (const DataError&) {
        p.r.reset();
      }
    }
    curve.push_back(p);
  }
  return curve;
}

std::vector<CurvePoint> auto_correlation(std::span<const MetricVector> rounds, const MetricVector& season_total) {
  return round_by_round(rounds, season_total);
}

namespace {

std::ofstream open_report(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out << std::setprecision(10);
  return out;
}

}  // namespace

void write_correlation_csv(const std::string& path, std::span<const NamedMetric> metrics,
                           std::span<const NamedMetric> measures, Correlation method) {
  auto out = open_report(path);
  out << "metric";
  for (const auto& m : measures) out << ',' << csv::escape(m.first);
  out << '\n';
  for (const auto& [name, metric] : metrics) {
    out << csv::escape(name);
    for (const auto& [mname, measure] : measures) {
      out << ',';
      try {
        out << (method == Correlation::Pearson ? pearson(metric, measure, name, mname)
                                               : spearman(metric, measure, name, mname));
      } catch (const DataError&) {
      }
    }
    out << '\n';
  }
}

void write_curves_csv(const std::string& path,
                      std::span<const std::pair<std::string, std::vector<CurvePoint>>> curves) {
  auto out = open_report(path);
  out << "round";
  std::size_t rounds = 0;
  for (const auto& [name, c] : curves) {
    out << ',' << csv::escape(name);
    rounds = std::max(rounds, c.size());
  }
  out << '\n';
  for (std::size_t n = 0; n < rounds; ++n) {
    out << n + 1;
    for (const auto& [name, c] : curves) {
      out << ',';
      if (n < c.size() && c[n].r) out << *c[n].r;
    }
    out << '\n';
  }
}

void write_t_tests_csv(const std::string& path, std::span<const NamedTTest> tests) {
  auto out = open_report(path);
  out << "metric_a,metric_b,n,mean_difference,t,p\n";
  for (const auto& t : tests) {
    out << csv::escape(t.a) << ',' << csv::escape(t.b) << ',' << t.result.n << ',' << t.result.mean_difference << ','
        << t.result.t << ',' << t.result.p << '\n';
  }
}

}  // namespace gim::eval
