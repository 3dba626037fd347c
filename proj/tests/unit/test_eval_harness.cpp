#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gim/error.hpp"
#include "gim/eval_harness.hpp"
#include "gim/random.hpp"

namespace gim::eval {
namespace {

MetricVector mv(std::initializer_list<double> values) {
  MetricVector m;
  int i = 0;
  for (double v : values) m["p" + std::to_string(i++)] = v;
  return m;
}

std::string temp_path(const char* name) { return (std::filesystem::temp_directory_path() / name).string(); }

TEST(Pearson, IdentityAndNegation) {
  const auto a = mv({1, 4, 2, 8, 5});
  const auto neg = mv({-1, -4, -2, -8, -5});
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  EXPECT_NEAR(pearson(a, neg), -1.0, 1e-15);
}

TEST(Pearson, WorkedExample) {
  // Hand formula: r = 3 / sqrt(2 * (14/3)) = 0.981981...
  EXPECT_NEAR(pearson(mv({1, 2, 3}), mv({1, 2, 4})), 0.98198050606, 1e-9);
}

TEST(Pearson, ZeroVarianceNamesTheVector) {
  try {
    pearson(mv({1, 2, 3}), mv({5, 5, 5}), "gim", "points");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("points"), std::string::npos);
  }
  EXPECT_THROW(pearson(mv({1}), mv({2})), DataError);
}

TEST(Pearson, UsesTheIntersectionOfPlayers) {
  MetricVector a{{"x", 1}, {"y", 2}, {"z", 3}, {"only_a", 100}};
  MetricVector b{{"x", 1}, {"y", 2}, {"z", 4}, {"only_b", -7}};
  EXPECT_NEAR(pearson(a, b), 0.98198050606, 1e-9);
  const Aligned al = align(a, b);
  EXPECT_EQ(al.players, (std::vector<std::string>{"x", "y", "z"}));
}

TEST(Pearson, NonFiniteValuesRejected) {
  EXPECT_THROW(pearson(mv({1, std::numeric_limits<double>::quiet_NaN(), 3}), mv({1, 2, 3})), DataError);
}

TEST(Spearman, MonotoneTransformsAndReversal) {
  const auto a = mv({0.3, -1, 2, 7, 4});
  const auto cubed = mv({0.027, -1, 8, 343, 64});
  const auto rev = mv({-0.3, 1, -2, -7, -4});
  EXPECT_NEAR(spearman(a, cubed), 1.0, 1e-15);
  EXPECT_NEAR(spearman(a, rev), -1.0, 1e-15);
}

TEST(Spearman, WorkedExample) {
  // 1 - 6 * 2 / (4 * 15) = 0.8
  EXPECT_NEAR(spearman(mv({1, 2, 3, 4}), mv({1, 3, 2, 4})), 0.8, 1e-12);
}

TEST(Spearman, TiesShareAverageRanks) {
  const std::vector<double> v{10, 20, 20, 5, 20};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{2, 4, 4, 1, 4}));
}

TEST(Correlation, PropertiesOnRandomVectors) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + rng.index(30);
    MetricVector a;
    MetricVector b;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "p" + std::to_string(i);
      a[id] = rng.normal();
      b[id] = 0.5 * a[id] + rng.normal();
    }
    const double r = pearson(a, b);
    const double s = spearman(a, b);
    EXPECT_LE(std::abs(r), 1.0);
    EXPECT_LE(std::abs(s), 1.0);
    EXPECT_NEAR(r, pearson(b, a), 1e-14);
    EXPECT_NEAR(s, spearman(b, a), 1e-14);
    MetricVector affine;
    for (const auto& [id, v] : a) affine[id] = 3.5 * v - 2.0;
    EXPECT_NEAR(pearson(affine, b), r, 1e-12);
    EXPECT_NEAR(spearman(affine, b), s, 1e-12);
  }
}

TEST(PairedTTest, IdenticalVectorsAreDegenerate) {
  EXPECT_THROW(paired_t_test(mv({1, 2, 3}), mv({1, 2, 3})), DataError);
}

TEST(PairedTTest, ConstantNonzeroDifferenceIsInfinite) {
  const auto r = paired_t_test(mv({2, 3, 4}), mv({1, 2, 3}));
  EXPECT_TRUE(std::isinf(r.t));
  EXPECT_GT(r.t, 0.0);
  EXPECT_EQ(r.p, 0.0);
  EXPECT_LT(paired_t_test(mv({1, 2, 3}), mv({2, 3, 4})).t, 0.0);
}

TEST(PairedTTest, WorkedExample) {
  // d = (1, -1, 2, -2, 3): mean 0.6, sd sqrt(17.2 / 4) = 2.0736, t = 0.6 / (sd / sqrt 5).
  const std::vector<double> a{1, -1, 2, -2, 3};
  const std::vector<double> b(5, 0.0);
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.mean_difference, 0.6, 1e-15);
  EXPECT_NEAR(r.sd_difference, 2.0736441353, 1e-9);
  EXPECT_NEAR(r.t, 0.6469966, 1e-6);
  EXPECT_NEAR(r.p, 0.5528894, 1e-6);
}

TEST(PairedTTest, CriticalValueGivesFivePercent) {
  // Upper 2.5% point of Student's t with 4 degrees of freedom.
  const double t975 = 2.7764451051977987;
  const double sd = 1.0;
  std::vector<double> d{-2, -1, 0, 1, 2};  // sample sd sqrt(2.5)
  const double scale = std::sqrt(2.5) / std::sqrt(5.0);
  for (double& x : d) x += t975 * scale * sd;
  const auto r = paired_t_test(d, std::vector<double>(5, 0.0));
  EXPECT_NEAR(r.t, t975, 1e-12);
  EXPECT_NEAR(r.p, 0.05, 1e-8);
}

TEST(PairedTTest, AntisymmetricInT) {
  const auto a = mv({1.5, 2, 7, 3, 0.1});
  const auto b = mv({1, 2.5, 4, 3.3, 0.5});
  const auto ab = paired_t_test(a, b);
  const auto ba = paired_t_test(b, a);
  EXPECT_NEAR(ab.t, -ba.t, 1e-14);
  EXPECT_NEAR(ab.p, ba.p, 1e-14);
}

TEST(FilterMinGames, DropsLightPlayers) {
  MetricVector m{{"a", 1}, {"b", 2}, {"c", 3}};
  MetricVector g{{"a", 5}, {"b", 4}};
  const auto f = filter_min_games(m, g);
  EXPECT_EQ(f.size(), 1u);
  EXPECT_TRUE(f.count("a"));
}

PerGameValues toy_values() {
  PerGameValues v;
  v.team = {{"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"c1", "C"}};
  v.values["a1"] = {{"g1", 1.0}, {"g2", 2.0}, {"g3", 0.5}};
  v.values["a2"] = {{"g1", 0.2}, {"g3", 1.0}};
  v.values["b1"] = {{"g1", -1.0}, {"g2", 0.0}};
  v.values["c1"] = {{"g2", 3.0}, {"g3", -2.0}};
  return v;
}

SeasonSchedule toy_schedule() {
  SeasonSchedule s;
  s.team_games = {{"A", {"g1", "g2", "g3"}}, {"B", {"g1", "g2"}}, {"C", {"g2", "g3"}}};
  return s;
}

TEST(Rounds, CumulativeTotalsFollowEachTeamsSchedule) {
  const auto rounds = cumulative_by_round(toy_values(), toy_schedule());
  ASSERT_EQ(rounds.size(), 3u);
  EXPECT_EQ(rounds[0].at("a1"), 1.0);
  EXPECT_EQ(rounds[0].at("c1"), 3.0);
  EXPECT_EQ(rounds[1].at("a2"), 0.2);
  EXPECT_EQ(rounds[1].at("c1"), 1.0);
  EXPECT_EQ(rounds[2].at("a1"), 3.5);
  EXPECT_FALSE(rounds[2].count("b1"));
}

TEST(Rounds, CurveShapeAndFinalRoundIdentity) {
  const auto rounds = cumulative_by_round(toy_values(), toy_schedule());
  MetricVector season;
  for (const auto& [p, games] : toy_values().values) {
    double s = 0.0;
    for (const auto& [g, v] : games) s += v;
    season[p] = s;
  }
  const auto curve = auto_correlation(rounds, season);
  ASSERT_EQ(curve.size(), 3u);
  for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_EQ(curve[i].round, i + 1);
  MetricVector measure{{"a1", 10}, {"a2", 4}, {"b1", 1}, {"c1", 2}};
  const auto rbr = round_by_round(rounds, measure);
  ASSERT_TRUE(rbr.back().r.has_value());
  EXPECT_NEAR(*rbr.back().r, pearson(rounds.back(), measure), 1e-15);
}

TEST(Rounds, TooFewPlayersLeavesAnEmptyCell) {
  std::vector<MetricVector> rounds{MetricVector{{"a", 1}}, MetricVector{{"a", 1}, {"b", 3}}};
  const auto curve = round_by_round(rounds, MetricVector{{"a", 2}, {"b", 5}});
  EXPECT_FALSE(curve[0].r.has_value());
  ASSERT_TRUE(curve[1].r.has_value());
  EXPECT_NEAR(*curve[1].r, 1.0, 1e-15);
}

TEST(Rounds, CurveAtRoundNUsesOnlyEarlierGames) {
  PerGameValues v = toy_values();
  const auto before = cumulative_by_round(v, toy_schedule());
  v.values["a1"]["g3"] = 1000.0;
  const auto after = cumulative_by_round(v, toy_schedule());
  EXPECT_EQ(before[0], after[0]);
  EXPECT_EQ(before[1], after[1]);
  EXPECT_NE(before[2], after[2]);
}

TEST(Reports, CsvLayouts) {
  const std::vector<NamedMetric> metrics{{"GIM", mv({1, 2, 3})}, {"SI", mv({3, 3, 3})}};
  const std::vector<NamedMetric> measures{{"points", mv({1, 2, 4})}};
  const auto path = temp_path("gim_corr.csv");
  write_correlation_csv(path, metrics, measures, Correlation::Pearson);
  std::ifstream in(path);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, "metric,points");
  EXPECT_EQ(l2.substr(0, 12), "GIM,0.981980");
  EXPECT_EQ(l3, "SI,");

  const std::vector<std::pair<std::string, std::vector<CurvePoint>>> curves{
      {"GIM", {{1, std::nullopt}, {2, 0.5}}}};
  write_curves_csv(path, curves);
  std::ifstream c(path);
  std::getline(c, l1);
  std::getline(c, l2);
  std::getline(c, l3);
  EXPECT_EQ(l1, "round,GIM");
  EXPECT_EQ(l2, "1,");
  EXPECT_EQ(l3, "2,0.5");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace gim::eval
