#include "gim/oracle_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gim/error.hpp"
#include "gim/ini.hpp"
#include "gim/random.hpp"

namespace gim::sim {

namespace {

constexpr double kStochasticTolerance = 1e-12;
constexpr double kSolverResidual = 1e-10;

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

TeamSide other(TeamSide s) { return opponent(s); }

Zone mirror(Zone z) { return static_cast<Zone>(2 - static_cast<int>(z)); }

Zone advance(Zone z) { return z == Zone::Offensive ? z : static_cast<Zone>(static_cast<int>(z) + 1); }

// Home-perspective manpower: 0 even, 1 home power play, 2 away power play.
int home_manpower(Manpower relative, TeamSide possessor) {
  if (relative == Manpower::Even) return 0;
  const bool possessor_pp = relative == Manpower::PowerPlay;
  const bool home_pp = possessor_pp == (possessor == TeamSide::Home);
  return home_pp ? 1 : 2;
}

Manpower relative_manpower(int home, TeamSide possessor) {
  if (home == 0) return Manpower::Even;
  const bool home_pp = home == 1;
  return home_pp == (possessor == TeamSide::Home) ? Manpower::PowerPlay : Manpower::ShortHanded;
}

QOutput one_hot(TeamSide side) {
  QOutput q{0.0, 0.0, 0.0};
  q[head_of(side)] = 1.0;
  return q;
}

constexpr QOutput kNeither{0.0, 0.0, 1.0};

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

const char* action_name(SimAction a) {
  switch (a) {
    case SimAction::Lpr: return "lpr";
    case SimAction::Pass: return "pass";
    case SimAction::Carry: return "carry";
    case SimAction::Shot: return "shot";
    case SimAction::DumpIn: return "dump-in";
    case SimAction::Goal: return "goal";
  }
  return "?";
}

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::Defensive: return "defensive";
    case Zone::Neutral: return "neutral";
    case Zone::Offensive: return "offensive";
  }
  return "?";
}

std::size_t State::index() const {
  return (static_cast<std::size_t>(zone) * 3 + static_cast<std::size_t>(manpower)) * 2 +
         static_cast<std::size_t>(possession);
}

State State::from_index(std::size_t i) {
  State s;
  s.possession = static_cast<TeamSide>(i % 2);
  s.manpower = static_cast<Manpower>((i / 2) % 3);
  s.zone = static_cast<Zone>(i / 6);
  return s;
}

std::size_t Cell::index() const {
  return (state.index() * kSimActions + static_cast<std::size_t>(action)) * 2 + static_cast<std::size_t>(outcome);
}

Cell Cell::from_index(std::size_t i) {
  Cell c;
  c.outcome = static_cast<ActionOutcome>(i % 2);
  c.action = static_cast<SimAction>((i / 2) % kSimActions);
  c.state = State::from_index(i / (2 * kSimActions));
  return c;
}

void SimSpec::validate() const {
  auto bad = [](const std::string& what) { throw ValidationError("invalid simulator spec: " + what); };
  if (events_per_game == 0 && !(end_probability > 0.0)) bad("a stationary spec (events_per_game = 0) needs end_probability > 0");
  if (!is_probability(end_probability)) bad("end_probability must lie in [0, 1]");
  for (std::size_t z = 0; z < kZones; ++z) {
    double sum = 0.0;
    for (double p : policy[z]) {
      if (!is_probability(p)) bad(std::string("policy.") + zone_name(static_cast<Zone>(z)) + " has a value outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kStochasticTolerance) {
      bad(std::string("policy.") + zone_name(static_cast<Zone>(z)) + " sums to " + fmt(sum) + ", not 1");
    }
  }
  if (!(power_play_edge >= 0.0 && power_play_edge < 1.0)) bad("power_play_edge must lie in [0, 1)");
  for (std::size_t a = 0; a < success.size(); ++a) {
    for (std::size_t z = 0; z < kZones; ++z) {
      const double p = success[a][z];
      if (!is_probability(p) || p * (1.0 + power_play_edge) > 1.0) {
        bad(std::string("success.") + action_name(static_cast<SimAction>(a)) +
            " must lie in [0, 1] after the power-play edge");
      }
    }
  }
  for (auto [name, p] : {std::pair{"pass_advance", pass_advance}, std::pair{"carry_advance", carry_advance},
                         std::pair{"dump_in_retain", dump_in_retain}, std::pair{"penalty_end", penalty_end}}) {
    if (!is_probability(p)) bad(std::string("dynamics.") + name + " must lie in [0, 1]");
  }
  if (!(penalty_rate >= 0.0 && 2.0 * penalty_rate <= 1.0)) bad("dynamics.penalty_rate must lie in [0, 0.5]");
  if (teams < 2 || teams % 2 != 0) bad("roster.teams must be an even number >= 2");
  if (skills.empty()) bad("roster.skills is empty");
  double sum = 0.0;
  for (double s : skills) {
    if (!(s >= 0.0 && s <= 2.0)) bad("roster.skills values must lie in [0, 2]");
    sum += s;
  }
  if (std::abs(sum / static_cast<double>(skills.size()) - 1.0) > kStochasticTolerance) {
    bad("roster.skills must average exactly 1");
  }
}

double SimSpec::base_success(const State& s, SimAction a) const {
  if (a == SimAction::Goal) return 1.0;
  double p = success[static_cast<std::size_t>(a)][static_cast<std::size_t>(s.zone)];
  if (s.manpower == Manpower::PowerPlay) p *= 1.0 + power_play_edge;
  if (s.manpower == Manpower::ShortHanded) p *= 1.0 - power_play_edge;
  return std::clamp(p, 0.0, 1.0);
}

double SimSpec::success_probability(const State& s, SimAction a, double skill) const {
  const double b = base_success(s, a);
  return std::clamp(b + (skill - 1.0) * std::min(b, 1.0 - b), 0.0, 1.0);
}

std::vector<Successor> SimSpec::successors(const Cell& cell) const {
  std::vector<Successor> out;
  if (cell.action == SimAction::Goal) return out;
  const bool success_outcome = cell.outcome == ActionOutcome::Success;
  if (cell.action == SimAction::Shot && success_outcome) return out;

  struct Branch {
    double p;
    Zone zone;
    TeamSide possession;
    bool from_policy;
    SimAction fixed;
  };
  std::vector<Branch> branches;
  const State& s = cell.state;
  const TeamSide opp = other(s.possession);
  if (!success_outcome) {
    branches.push_back({1.0, mirror(s.zone), opp, false, SimAction::Lpr});
  } else {
    switch (cell.action) {
      case SimAction::Lpr:
        branches.push_back({1.0, s.zone, s.possession, true, SimAction::Lpr});
        break;
      case SimAction::Pass:
      case SimAction::Carry: {
        const double adv = cell.action == SimAction::Pass ? pass_advance : carry_advance;
        if (s.zone == Zone::Offensive) {
          branches.push_back({1.0, s.zone, s.possession, true, SimAction::Lpr});
        } else {
          branches.push_back({adv, advance(s.zone), s.possession, true, SimAction::Lpr});
          branches.push_back({1.0 - adv, s.zone, s.possession, true, SimAction::Lpr});
        }
        break;
      }
      case SimAction::DumpIn:
        branches.push_back({dump_in_retain, Zone::Offensive, s.possession, false, SimAction::Lpr});
        branches.push_back({1.0 - dump_in_retain, Zone::Defensive, opp, false, SimAction::Lpr});
        break;
      default:
        break;
    }
  }

  const int mp = home_manpower(s.manpower, s.possession);
  std::array<double, 3> mp_next{0.0, 0.0, 0.0};
  if (mp == 0) {
    mp_next = {1.0 - 2.0 * penalty_rate, penalty_rate, penalty_rate};
  } else {
    mp_next[0] = penalty_end;
    mp_next[static_cast<std::size_t>(mp)] = 1.0 - penalty_end;
  }

  for (const auto& b : branches) {
    if (b.p <= 0.0) continue;
    for (int m = 0; m < 3; ++m) {
      const double pm = mp_next[static_cast<std::size_t>(m)];
      if (pm <= 0.0) continue;
      State next{b.zone, relative_manpower(m, b.possession), b.possession};
      if (!b.from_policy) {
        out.push_back({b.p * pm, next, b.fixed});
        continue;
      }
      const auto& row = policy[static_cast<std::size_t>(b.zone)];
      for (std::size_t k = 0; k < kPolicyActions.size(); ++k) {
        if (row[k] > 0.0) out.push_back({b.p * pm * row[k], next, kPolicyActions[k]});
      }
    }
  }
  return out;
}

SimSpec SimSpec::load(const std::string& path) {
  const auto doc = ini::Document::parse_file(path);
  std::set<std::string> allowed{"game.events_per_game", "game.end_probability", "policy.defensive",
                                "policy.neutral",       "policy.offensive",     "success.lpr",
                                "success.pass",         "success.carry",        "success.shot",
                                "success.dump-in",      "dynamics.pass_advance", "dynamics.carry_advance",
                                "dynamics.dump_in_retain", "dynamics.penalty_rate", "dynamics.penalty_end",
                                "dynamics.power_play_edge", "roster.teams",     "roster.skills"};
  doc.reject_unknown(allowed);
  SimSpec spec;
  auto where = [&](const std::string& section, const std::string& key) {
    const auto* e = doc.find(section, key);
    return path + ":" + std::to_string(e ? e->line : 0) + ": " + section + "." + key;
  };
  if (auto v = doc.get_int("game", "events_per_game")) {
    if (*v < 0) throw UsageError(where("game", "events_per_game") + " must be >= 0");
    spec.events_per_game = static_cast<std::size_t>(*v);
  }
  if (auto v = doc.get_double("game", "end_probability")) spec.end_probability = *v;
  const char* zones[] = {"defensive", "neutral", "offensive"};
  for (std::size_t z = 0; z < kZones; ++z) {
    if (auto v = doc.get_doubles("policy", zones[z])) {
      if (v->size() != 4) throw UsageError(where("policy", zones[z]) + " needs 4 values (pass, carry, shot, dump-in)");
      std::copy(v->begin(), v->end(), spec.policy[z].begin());
    }
  }
  for (std::size_t a = 0; a < spec.success.size(); ++a) {
    const std::string key = action_name(static_cast<SimAction>(a));
    if (auto v = doc.get_doubles("success", key)) {
      if (v->size() != kZones) throw UsageError(where("success", key) + " needs 3 values (defensive, neutral, offensive)");
      std::copy(v->begin(), v->end(), spec.success[a].begin());
    }
  }
  if (auto v = doc.get_double("dynamics", "pass_advance")) spec.pass_advance = *v;
  if (auto v = doc.get_double("dynamics", "carry_advance")) spec.carry_advance = *v;
  if (auto v = doc.get_double("dynamics", "dump_in_retain")) spec.dump_in_retain = *v;
  if (auto v = doc.get_double("dynamics", "penalty_rate")) spec.penalty_rate = *v;
  if (auto v = doc.get_double("dynamics", "penalty_end")) spec.penalty_end = *v;
  if (auto v = doc.get_double("dynamics", "power_play_edge")) spec.power_play_edge = *v;
  if (auto v = doc.get_int("roster", "teams")) {
    if (*v < 0) throw UsageError(where("roster", "teams") + " must be >= 0");
    spec.teams = static_cast<std::size_t>(*v);
  }
  if (auto v = doc.get_doubles("roster", "skills")) spec.skills = *v;
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return spec;
}

void SimSpec::save(std::ostream& out) const {
  auto list = [](auto first, auto last) {
    std::string s;
    for (auto it = first; it != last; ++it) s += (s.empty() ? "" : ", ") + fmt(*it);
    return s;
  };
  out << "[game]\n"
      << "events_per_game = " << events_per_game << "\n"
      << "end_probability = " << fmt(end_probability) << "\n\n"
      << "[policy]\n# pass, carry, shot, dump-in\n";
  const char* zones[] = {"defensive", "neutral", "offensive"};
  for (std::size_t z = 0; z < kZones; ++z) out << zones[z] << " = " << list(policy[z].begin(), policy[z].end()) << "\n";
  out << "\n[success]\n# defensive, neutral, offensive\n";
  for (std::size_t a = 0; a < success.size(); ++a) {
    out << action_name(static_cast<SimAction>(a)) << " = " << list(success[a].begin(), success[a].end()) << "\n";
  }
  out << "\n[dynamics]\n"
      << "pass_advance = " << fmt(pass_advance) << "\n"
      << "carry_advance = " << fmt(carry_advance) << "\n"
      << "dump_in_retain = " << fmt(dump_in_retain) << "\n"
      << "penalty_rate = " << fmt(penalty_rate) << "\n"
      << "penalty_end = " << fmt(penalty_end) << "\n"
      << "power_play_edge = " << fmt(power_play_edge) << "\n\n"
      << "[roster]\n"
      << "teams = " << teams << "\n"
      << "skills = " << list(skills.begin(), skills.end()) << "\n";
}

std::string SimSpec::to_string() const {
  std::ostringstream ss;
  save(ss);
  return ss.str();
}

Eigen::MatrixXd solve_absorbing_chain(const Eigen::MatrixXd& transient, const Eigen::MatrixXd& absorbing) {
  const auto n = transient.rows();
  if (transient.cols() != n || absorbing.rows() != n) throw UsageError("solve_absorbing_chain: shape mismatch");
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - transient;
  const Eigen::MatrixXd q = a.partialPivLu().solve(absorbing);
  const double residual = (a * q - absorbing).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > kSolverResidual) {
    throw NumericalError("absorbing chain solve residual " + fmt(residual) + " exceeds " + fmt(kSolverResidual) +
                         " (is every transient state able to reach absorption?)");
  }
  return q;
}

OracleQ::OracleQ(SimSpec spec, std::vector<QOutput> values) : spec_(std::move(spec)), values_(std::move(values)) {
  if (values_.size() != horizon() * kCells) throw UsageError("OracleQ: value table has the wrong size");
}

const QOutput& OracleQ::value(std::size_t event_index, std::size_t cell) const {
  const std::size_t k = stationary() ? 0 : event_index;
  if (k >= horizon() || cell >= kCells) throw UsageError("OracleQ::value: index out of range");
  return values_[k * kCells + cell];
}

const QOutput& OracleQ::value(std::size_t event_index, const Cell& cell) const {
  return value(event_index, cell.index());
}

Cell OracleQ::cell_of(const Event& e) const {
  Cell c;
  c.state.zone = e.obs.x < -25.0 ? Zone::Defensive : (e.obs.x > 25.0 ? Zone::Offensive : Zone::Neutral);
  c.state.manpower = e.obs.manpower;
  c.state.possession = e.obs.side;
  c.outcome = e.obs.outcome;
  for (std::size_t a = 0; a < kSimActions; ++a) {
    if (e.action == action_name(static_cast<SimAction>(a))) {
      c.action = static_cast<SimAction>(a);
      return c;
    }
  }
  throw DataError("action '" + e.action + "' in game " + e.game_id + " is not a simulator action");
}

std::size_t OracleQ::event_index_of(const Event& e) const {
  if (stationary()) return 0;
  const double t = static_cast<double>(spec_.events_per_game);
  const auto k = static_cast<long long>(std::floor(e.game_time * t / kGameSeconds));
  return static_cast<std::size_t>(std::clamp<long long>(k, 0, static_cast<long long>(spec_.events_per_game) - 1));
}

QOutput OracleQ::lookup(const Event& e) const { return value(event_index_of(e), cell_of(e)); }

QProvider OracleQ::provider() const {
  return [this](const Sequence& s) {
    QSeries q(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) q[t] = lookup(s.events[t]);
    return q;
  };
}

double OracleQ::max_row_sum_error() const {
  double worst = 0.0;
  for (const auto& q : values_) worst = std::max(worst, std::abs(q[0] + q[1] + q[2] - 1.0));
  return worst;
}

OracleQ solve_oracle_q(const SimSpec& spec) {
  spec.validate();
  std::vector<std::vector<Successor>> succ(kCells);
  std::vector<bool> scoring(kCells, false);
  for (std::size_t i = 0; i < kCells; ++i) {
    const Cell c = Cell::from_index(i);
    succ[i] = spec.successors(c);
    scoring[i] = c.action == SimAction::Goal || (c.action == SimAction::Shot && c.outcome == ActionOutcome::Success);
  }
  const double e = spec.end_probability;

  if (spec.events_per_game == 0) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(kCells, kCells);
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(kCells, kNumHeads);
    for (std::size_t i = 0; i < kCells; ++i) {
      const Cell c = Cell::from_index(i);
      if (scoring[i]) {
        r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(head_of(c.state.possession))) = 1.0;
        continue;
      }
      r(static_cast<Eigen::Index>(i), kNeitherHead) = e;
      for (const auto& s : succ[i]) {
        const double ps = spec.base_success(s.state, s.action);
        for (auto outcome : {ActionOutcome::Success, ActionOutcome::Failure}) {
          const double po = outcome == ActionOutcome::Success ? ps : 1.0 - ps;
          if (po <= 0.0) continue;
          const auto j = Cell{s.state, s.action, outcome}.index();
          p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += (1.0 - e) * s.probability * po;
        }
      }
    }
    const Eigen::MatrixXd q = solve_absorbing_chain(p, r);
    std::vector<QOutput> values(kCells);
    for (std::size_t i = 0; i < kCells; ++i) {
      for (std::size_t h = 0; h < kNumHeads; ++h) {
        values[i][h] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h));
      }
    }
    return OracleQ(spec, std::move(values));
  }

  const std::size_t horizon = spec.events_per_game;
  std::vector<QOutput> values(horizon * kCells);
  // Pre-outcome value of each (state, action) at the following event index.
  std::vector<QOutput> pre(kStates * kSimActions);
  for (std::size_t k = horizon; k-- > 0;) {
    QOutput* row = &values[k * kCells];
    for (std::size_t i = 0; i < kCells; ++i) {
      const Cell c = Cell::from_index(i);
      if (scoring[i]) {
        row[i] = one_hot(c.state.possession);
        continue;
      }
      QOutput cont = kNeither;
      if (k + 1 < horizon) {
        cont = {0.0, 0.0, 0.0};
        for (const auto& s : succ[i]) {
          const QOutput& v = pre[s.state.index() * kSimActions + static_cast<std::size_t>(s.action)];
          for (std::size_t h = 0; h < kNumHeads; ++h) cont[h] += s.probability * v[h];
        }
      }
      for (std::size_t h = 0; h < kNumHeads; ++h) row[i][h] = (1.0 - e) * cont[h] + e * kNeither[h];
    }
    for (std::size_t si = 0; si < kStates; ++si) {
      const State st = State::from_index(si);
      for (std::size_t a = 0; a < kSimActions; ++a) {
        const auto action = static_cast<SimAction>(a);
        const double ps = spec.base_success(st, action);
        const QOutput& qs = row[Cell{st, action, ActionOutcome::Success}.index()];
        const QOutput& qf = row[Cell{st, action, ActionOutcome::Failure}.index()];
        for (std::size_t h = 0; h < kNumHeads; ++h) pre[si * kSimActions + a][h] = ps * qs[h] + (1.0 - ps) * qf[h];
      }
    }
  }
  return OracleQ(spec, std::move(values));
}

std::string player_id(std::size_t team, std::size_t player) {
  return "T" + std::to_string(team + 1) + "P" + std::to_string(player + 1);
}

std::string team_id(std::size_t team) { return "T" + std::to_string(team + 1); }

namespace {

struct Fixture {
  std::size_t home;
  std::size_t away;
};

// Circle-method round robin, repeated with venues swapped every cycle.
Fixture fixture(std::size_t game, std::size_t teams) {
  const std::size_t per_round = teams / 2;
  const std::size_t rounds = teams - 1;
  const std::size_t round = game / per_round;
  const std::size_t pair = game % per_round;
  const std::size_t cycle = round / rounds;
  const std::size_t r = round % rounds;
  auto slot = [&](std::size_t i) -> std::size_t {
    if (i == 0) return 0;
    return 1 + (i - 1 + r) % (teams - 1);
  };
  std::size_t a = slot(pair);
  std::size_t b = slot(teams - 1 - pair);
  if ((pair + r + cycle) % 2 == 1) std::swap(a, b);
  return {a, b};
}

double zone_x(Zone z, Rng& rng) {
  switch (z) {
    case Zone::Defensive: return rng.uniform(-100.0, -25.0);
    case Zone::Neutral: return rng.uniform(-25.0, 25.0);
    case Zone::Offensive: return rng.uniform(25.0 + 1e-9, 100.0);
  }
  return 0.0;
}

struct GameResult {
  std::vector<std::string> lines;
  std::vector<std::array<std::size_t, 2>> goals_assists;  // indexed by team slot * players + player
};

GameResult simulate_game(const SimSpec& spec, std::size_t game, std::uint64_t seed) {
  Rng rng(seed + game);
  const Fixture fx = fixture(game, spec.teams);
  const std::size_t players = spec.skills.size();
  const std::size_t T = spec.events_per_game;
  const double dt = kGameSeconds / static_cast<double>(T);
  char gid_buf[16];
  std::snprintf(gid_buf, sizeof gid_buf, "G%05zu", game + 1);
  const std::string gid = gid_buf;

  GameResult out;
  out.goals_assists.assign(2 * players, {0, 0});
  std::array<int, 2> score{0, 0};

  auto team_of = [&](TeamSide side) { return side == TeamSide::Home ? fx.home : fx.away; };
  auto emit = [&](std::size_t actor, TeamSide side, double time, double x, double y, Manpower mp, SimAction a,
                  ActionOutcome o) {
    const int gd = score[static_cast<std::size_t>(side)] - score[static_cast<std::size_t>(other(side))];
    std::string line = gid;
    line += ',' + player_id(team_of(side), actor) + ',' + fmt(time) + ',' + team_id(team_of(side)) + ',' + fmt(x) +
            ',' + fmt(y) + ',' + std::string(to_string(mp)) + ',' + std::to_string(gd) + ',' + action_name(a) + ',' +
            (o == ActionOutcome::Success ? "S" : "F") + ',' + std::string(to_string(side)) + ',' +
            std::string(to_string(side));
    out.lines.push_back(std::move(line));
  };

  int mp_home = 0;
  auto fresh_start = [&]() {
    const TeamSide poss = rng.bernoulli(0.5) ? TeamSide::Home : TeamSide::Away;
    return Cell{State{Zone::Neutral, relative_manpower(mp_home, poss), poss}, SimAction::Lpr, ActionOutcome::Success};
  };
  Cell cell = fresh_start();
  constexpr std::size_t kNoPasser = static_cast<std::size_t>(-1);
  std::size_t last_passer = kNoPasser;
  TeamSide last_poss = cell.state.possession;

  for (std::size_t k = 0; k < T; ++k) {
    const TeamSide side = cell.state.possession;
    if (side != last_poss) last_passer = kNoPasser;
    last_poss = side;
    const std::size_t actor = rng.index(players);
    const double p = spec.success_probability(cell.state, cell.action, spec.skills[actor]);
    cell.outcome = rng.bernoulli(p) ? ActionOutcome::Success : ActionOutcome::Failure;
    const double u = rng.uniform(0.05, 0.95);
    const double time = (static_cast<double>(k) + u) * dt;
    const double x = zone_x(cell.state.zone, rng);
    const double y = rng.uniform(-42.5, 42.5);
    emit(actor, side, time, x, y, cell.state.manpower, cell.action, cell.outcome);

    const bool success = cell.outcome == ActionOutcome::Success;
    if (cell.action == SimAction::Pass && success) last_passer = actor;

    if (cell.action == SimAction::Shot && success) {
      const std::size_t slot = side == TeamSide::Home ? 0 : 1;
      ++score[static_cast<std::size_t>(side)];
      const double goal_time = (static_cast<double>(k) + (u + 1.0) / 2.0) * dt;
      emit(actor, side, goal_time, x, y, cell.state.manpower, SimAction::Goal, ActionOutcome::Success);
      ++out.goals_assists[slot * players + actor][0];
      if (last_passer != kNoPasser && last_passer != actor) ++out.goals_assists[slot * players + last_passer][1];
      last_passer = kNoPasser;
      if (spec.end_probability > 0.0 && rng.bernoulli(spec.end_probability)) break;
      cell = fresh_start();
      last_poss = cell.state.possession;
      continue;
    }
    if (spec.end_probability > 0.0 && rng.bernoulli(spec.end_probability)) break;
    const auto next = spec.successors(cell);
    std::vector<double> weights(next.size());
    for (std::size_t i = 0; i < next.size(); ++i) weights[i] = next[i].probability;
    const Successor& s = next[rng.categorical(weights)];
    mp_home = home_manpower(s.state.manpower, s.state.possession);
    cell = Cell{s.state, s.action, ActionOutcome::Success};
  }
  return out;
}

}  // namespace

SeasonOutput simulate_season(const SimSpec& spec, std::size_t n_games, std::uint64_t seed) {
  spec.validate();
  if (spec.events_per_game == 0) throw UsageError("simulate_season needs a finite events_per_game");
  SeasonOutput season;
  season.csv_lines.push_back("GID,PID,GT,TID,X,Y,MP,GD,Action,OC,P,HA");
  const std::size_t players = spec.skills.size();
  for (std::size_t t = 0; t < spec.teams; ++t) {
    for (std::size_t p = 0; p < players; ++p) {
      PlayerStats s;
      s.skill = spec.skills[p];
      season.stats[player_id(t, p)] = s;
    }
  }
  for (std::size_t g = 0; g < n_games; ++g) {
    GameResult r = simulate_game(spec, g, seed);
    season.num_events += r.lines.size();
    for (auto& l : r.lines) season.csv_lines.push_back(std::move(l));
    const Fixture fx = fixture(g, spec.teams);
    for (std::size_t slot = 0; slot < 2; ++slot) {
      const std::size_t team = slot == 0 ? fx.home : fx.away;
      for (std::size_t p = 0; p < players; ++p) {
        auto& s = season.stats[player_id(team, p)];
        s.goals += static_cast<double>(r.goals_assists[slot * players + p][0]);
        s.assists += static_cast<double>(r.goals_assists[slot * players + p][1]);
        s.games += 1.0;
      }
    }
  }
  for (auto& [id, s] : season.stats) s.points = s.goals + s.assists;
  if (n_games == 0) season.stats.clear();
  return season;
}

void write_season(const SeasonOutput& season, const std::string& events_path, const std::string& stats_path) {
  std::ofstream out(events_path);
  if (!out) throw DataError("cannot write events file '" + events_path + "'");
  for (const auto& l : season.csv_lines) out << l << '\n';
  if (!out) throw DataError("write failed for '" + events_path + "'");
  write_stats_csv(season.stats, stats_path);
}

std::vector<Game> season_games(const SeasonOutput& season) {
  std::stringstream ss;
  for (const auto& l : season.csv_lines) ss << l << '\n';
  return parse_events(ss, "<simulated season>", CsvSchema::defaults()).games;
}

PlayerLedger oracle_gim(const OracleQ& oracle, const Dataset& dataset) {
  return compute_gim(dataset, oracle.provider());
}

OracleComparison compare_to_oracle(const OracleQ& oracle, const Dataset& dataset, const QProvider& provider,
                                   std::size_t min_visits) {
  std::vector<double> err_sum(kCells, 0.0);
  std::vector<std::size_t> visits(kCells, 0);
  for (const auto& seq : dataset.sequences) {
    const QSeries q = provider(seq);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const Event& e = seq.events[t];
      const std::size_t c = oracle.cell_of(e).index();
      const QOutput& star = oracle.value(oracle.event_index_of(e), c);
      double err = 0.0;
      for (std::size_t h = 0; h < kNumHeads; ++h) err += std::abs(q[t][h] - star[h]);
      err_sum[c] += err / static_cast<double>(kNumHeads);
      ++visits[c];
    }
  }
  OracleComparison r;
  double total = 0.0;
  for (std::size_t c = 0; c < kCells; ++c) {
    if (visits[c] > 0) ++r.cells_visited;
    if (visits[c] < min_visits || visits[c] == 0) continue;
    total += err_sum[c] / static_cast<double>(visits[c]);
    ++r.cells_used;
    r.events_used += visits[c];
  }
  if (r.cells_used == 0) throw DataError("no oracle cell has at least " + std::to_string(min_visits) + " visits");
  r.mean_abs_error = total / static_cast<double>(r.cells_used);
  return r;
}

}  // namespace gim::sim
