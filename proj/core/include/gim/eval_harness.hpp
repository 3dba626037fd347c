#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gim/ingestion.hpp"
#include "gim/valuation.hpp"

namespace gim::eval {

/// Player id -> metric value.
using MetricVector = std::map<std::string, double>;

struct Aligned {
  std::vector<std::string> players;
  std::vector<double> a;
  std::vector<double> b;
};

/// Players present in both vectors, in id order. Non-finite values throw DataError.
Aligned align(const MetricVector& a, const MetricVector& b);

/// Keeps players with at least min_games games.
MetricVector filter_min_games(const MetricVector& metric, const MetricVector& games, double min_games = 5.0);

double pearson(std::span<const double> a, std::span<const double> b, const std::string& name_a = "a",
               const std::string& name_b = "b");
double pearson(const MetricVector& a, const MetricVector& b, const std::string& name_a = "a",
               const std::string& name_b = "b");

/// 1-based ranks, ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);
double spearman(std::span<const double> a, std::span<const double> b, const std::string& name_a = "a",
                const std::string& name_b = "b");
double spearman(const MetricVector& a, const MetricVector& b, const std::string& name_a = "a",
                const std::string& name_b = "b");

struct TTestResult {
  double t = 0.0;  // +/-infinity when the differences are constant and nonzero
  double p = 1.0;  // two-sided
  std::size_t n = 0;
  double mean_difference = 0.0;
  double sd_difference = 0.0;
};

/// Paired two-sided t-test on a - b over the common players, n - 1 degrees of freedom.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);
TTestResult paired_t_test(const MetricVector& a, const MetricVector& b);

/// Each team's games in order of first appearance in the dataset.
struct SeasonSchedule {
  std::map<std::string, std::vector<std::string>> team_games;
  std::size_t rounds() const;  // most games played by any team
};

SeasonSchedule schedule_of(const Dataset& dataset);

/// Player -> game -> value, plus each player's team.
struct PerGameValues {
  std::map<std::string, std::map<std::string, double>> values;
  std::map<std::string, std::string> team;
};

PerGameValues per_game_values(const PlayerLedger& ledger);

/// Entry n-1 holds each player's total over the first n games of their team;
/// players whose team has fewer than n games are absent from that round.
std::vector<MetricVector> cumulative_by_round(const PerGameValues& values, const SeasonSchedule& schedule);

struct CurvePoint {
  std::size_t round = 0;
  std::optional<double> r;  // empty when fewer than 2 players qualify or a vector is constant
};

/// Pearson of each round's metric against a fixed season-total vector.
std::vector<CurvePoint> round_by_round(std::span<const MetricVector> rounds, const MetricVector& season);
/// round_by_round against the metric's own season total.
std::vector<CurvePoint> auto_correlation(std::span<const MetricVector> rounds, const MetricVector& season_total);

using NamedMetric = std::pair<std::string, MetricVector>;

/// Rows are metrics, columns are measures, cells the chosen correlation.
enum class Correlation { Pearson, Spearman };
void write_correlation_csv(const std::string& path, std::span<const NamedMetric> metrics,
                           std::span<const NamedMetric> measures, Correlation method);
/// Header: round,<name>...
void write_curves_csv(const std::string& path,
                      std::span<const std::pair<std::string, std::vector<CurvePoint>>> curves);
struct NamedTTest {
  std::string a;
  std::string b;
  TTestResult result;
};
/// Header: metric_a,metric_b,n,mean_difference,t,p
void write_t_tests_csv(const std::string& path, std::span<const NamedTTest> tests);

}  // namespace gim::eval
