#include "app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "gim/error.hpp"
#include "gim/eval_harness.hpp"
#include "gim/ingestion.hpp"
#include "gim/oracle_sim.hpp"
#include "gim/qnet.hpp"
#include "gim/trainer.hpp"
#include "gim/valuation.hpp"
#include "run_config.hpp"

namespace gim::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  RunConfig config;
  fs::path run_dir;
  std::ostream& out;
  std::ostream& err;

  std::string path(const std::string& name) const { return config.string("paths." + name); }
  std::string output(const std::string& file) const { return (run_dir / file).string(); }
};

struct Command {
  std::string name;
  std::string description;
  std::vector<std::string> required_paths;
  std::vector<std::string> optional_paths;
  std::function<void(Context&)> validate;  // parses every key the command uses before any work
  std::function<void(Context&)> execute;
};

void require_paths(const RunConfig& config, const Command& command) {
  for (const auto& p : command.required_paths) {
    const std::string key = "paths." + p;
    if (config.string(key).empty())
      throw UsageError(command.name + ": missing required " + config.where(key));
  }
  auto check = [&](const std::string& p) {
    const std::string key = "paths." + p;
    const std::string value = config.string(key);
    if (!value.empty() && !fs::is_regular_file(value))
      throw DataError(config.where(key) + ": no such file '" + value + "'");
  };
  for (const auto& p : command.required_paths) check(p);
  for (const auto& p : command.optional_paths) check(p);
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const RunConfig& config) {
  std::error_code ec;
  if (!config.string("run.dir").empty()) {
    fs::path dir = config.string("run.dir");
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
      throw DataError(config.where("run.dir") + ": cannot create directory '" + dir.string() + "'");
    return dir;
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config.hash()));
  const fs::path root = config.string("run.root");
  const std::string base = utc_stamp() + "-" + hash;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root))
    throw DataError(config.where("run.root") + ": cannot create directory '" + root.string() + "'");
  for (int n = 0;; ++n) {
    const fs::path dir = root / (n == 0 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw DataError(config.where("run.root") + ": cannot create '" + dir.string() + "': " + ec.message());
  }
}

void write_effective_config(const Context& ctx) {
  std::ofstream out(ctx.output("config.ini"));
  ctx.config.dump(out);
  if (!out) throw DataError("cannot write '" + ctx.output("config.ini") + "'");
}

sim::SimSpec load_sim_spec(const Context& ctx) {
  const std::string p = ctx.path("sim_spec");
  sim::SimSpec spec = p.empty() ? sim::SimSpec{} : sim::SimSpec::load(p);
  spec.validate();
  return spec;
}

NetworkConfig network_config(const RunConfig& c, const std::string& section) {
  NetworkConfig net;
  net.lstm_hidden = static_cast<std::size_t>(c.integer(section + ".lstm_hidden", 1));
  const auto widths = c.integers(section + ".dense_widths", 1);
  if (widths.size() != 2)
    throw UsageError(c.where(section + ".dense_widths") + ": expected exactly two widths, got '" +
                     c.string(section + ".dense_widths") + "'");
  net.dense_widths = {static_cast<std::size_t>(widths[0]), static_cast<std::size_t>(widths[1])};
  if (section == "network") net.max_trace = static_cast<int>(c.integer("network.max_trace", 1));
  return net;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.batch_size = static_cast<std::size_t>(c.integer("train.batch_size", 1));
  t.learning_rate = c.number("train.learning_rate");
  t.final_learning_rate = c.number("train.final_learning_rate");
  t.max_steps = static_cast<std::size_t>(c.integer("train.max_steps", 0));
  t.eval_every = static_cast<std::size_t>(c.integer("train.eval_every", 1));
  t.seed = c.seed("train.seed");
  t.gradient_clip = c.number("train.gradient_clip");
  t.full_gradient = c.boolean("train.full_gradient");
  t.eval_sample = static_cast<std::size_t>(c.integer("train.eval_sample", 0));
  t.plateau_patience = static_cast<std::size_t>(c.integer("train.plateau_patience", 0));
  t.plateau_min_delta = c.number("train.plateau_min_delta");
  t.threads = static_cast<unsigned>(c.integer("run.threads", 1));
  try {
    t.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("[train]: ") + e.what());
  }
  return t;
}

DiscretizationSpec si_spec(const RunConfig& c) {
  DiscretizationSpec s;
  s.x_bins = static_cast<std::size_t>(c.integer("si.x_bins", 1));
  s.y_bins = static_cast<std::size_t>(c.integer("si.y_bins", 1));
  s.time_bins = static_cast<std::size_t>(c.integer("si.time_bins", 1));
  s.manpower_bins = static_cast<std::size_t>(c.integer("si.manpower_bins", 1));
  s.score_bins = static_cast<std::size_t>(c.integer("si.score_bins", 1));
  s.split_actions = c.boolean("si.split_actions");
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("[si]: ") + e.what());
  }
  return s;
}

std::string fixed(double v, int precision = 10) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// ---- subcommands ----

void do_simulate(Context& ctx) {
  const sim::SimSpec spec = load_sim_spec(ctx);
  const auto games = static_cast<std::size_t>(ctx.config.integer("simulate.games", 1));
  const sim::SeasonOutput season = sim::simulate_season(spec, games, ctx.config.seed("simulate.seed"));
  sim::write_season(season, ctx.output("events.csv"), ctx.output("stats.csv"));
  std::ofstream spec_out(ctx.output("sim_spec.ini"));
  spec.save(spec_out);
  ctx.err << "simulated " << games << " games, " << season.num_events << " events\n";
}

void do_ingest(Context& ctx) {
  const CsvSchema schema = ctx.path("schema").empty() ? CsvSchema::defaults() : CsvSchema::load(ctx.path("schema"));
  const ActionVocabulary vocabulary = ctx.path("vocabulary").empty()
                                          ? ActionVocabulary::default_hockey()
                                          : ActionVocabulary::load(ctx.path("vocabulary"));
  ParseOptions options;
  options.lenient = ctx.config.boolean("ingest.lenient");
  ParseResult parsed = parse_events(ctx.path("events"), schema, options);
  for (const auto& w : parsed.warnings) ctx.err << "warning: " << w << '\n';
  if (parsed.games.empty()) throw DataError(ctx.path("events") + ": no events");
  const std::size_t games = parsed.games.size();
  const Dataset dataset = ingest_games(std::move(parsed.games), vocabulary);
  save_dataset(dataset, ctx.output("sequences.bin"));
  vocabulary.save(ctx.output("vocabulary.txt"));
  ctx.err << "ingested " << games << " games, " << dataset.sequences.size() << " episodes, " << dataset.num_events()
          << " events\n";
}

void do_train(Context& ctx) {
  const NetworkConfig net = network_config(ctx.config, "network");
  const TrainConfig tc = train_config(ctx.config);
  const Dataset dataset = load_dataset(ctx.path("sequences"));
  const std::string checkpoint = ctx.output("checkpoint.bin");
  std::ofstream log(ctx.output("train_log.csv"));
  log << "step,batch_loss,eval_td_error\n";
  auto on_eval = [&](const NetworkParams& params, const LogRow& row) {
    log << row.step << ',';
    if (std::isfinite(row.batch_loss)) log << fixed(row.batch_loss, 17);
    log << ',' << fixed(row.eval_td_error, 17) << '\n';
    log.flush();
    save_checkpoint(params, checkpoint);
    ctx.err << "step " << row.step << " eval_td_error " << fixed(row.eval_td_error, 6) << '\n';
  };
  const TrainResult result = train(dataset, net, tc, on_eval);
  save_checkpoint(result.params, checkpoint);
  if (!log) throw DataError("cannot write '" + ctx.output("train_log.csv") + "'");
  ctx.err << "trained " << result.steps << " steps" << (result.stopped_on_plateau ? " (plateau)" : "") << '\n';
}

NetworkParams load_model(const Context& ctx, const std::string& key, const Dataset& dataset) {
  return load_checkpoint(ctx.path(key), &dataset.vocabulary);
}

void do_rank(Context& ctx) {
  const Dataset dataset = load_dataset(ctx.path("sequences"));
  const NetworkParams params = load_model(ctx, "checkpoint", dataset);
  std::optional<StatsTable> stats;
  if (!ctx.path("stats").empty()) stats = load_stats_csv(ctx.path("stats"));
  const PlayerLedger ledger = compute_gim(params, dataset);
  const auto rows = rank_players(ledger, stats ? &*stats : nullptr);
  write_rankings_csv(rows, ctx.output("rankings.csv"));
  ctx.err << "ranked " << rows.size() << " players\n";
}

void do_ticker(Context& ctx) {
  const std::string game = ctx.config.string("ticker.game_id");
  if (game.empty()) throw UsageError("ticker: missing required " + ctx.config.where("ticker.game_id"));
  const Dataset dataset = load_dataset(ctx.path("sequences"));
  const bool present = std::any_of(dataset.sequences.begin(), dataset.sequences.end(),
                                   [&](const Sequence& s) { return s.game_id == game; });
  if (!present)
    throw DataError(ctx.config.where("ticker.game_id") + ": game '" + game + "' not found in " + ctx.path("sequences"));
  const NetworkParams params = load_model(ctx, "checkpoint", dataset);
  write_ticker_csv(value_ticker(params, dataset, game), ctx.output("ticker.csv"));
}

eval::MetricVector stat_vector(const StatsTable& stats, double PlayerStats::*field) {
  eval::MetricVector v;
  for (const auto& [id, s] : stats) v[id] = s.*field;
  return v;
}

void do_evaluate(Context& ctx) {
  const RunConfig& c = ctx.config;
  const DiscretizationSpec si = si_spec(c);
  const double min_games = c.number("evaluate.min_games");
  const bool use_oracle = c.boolean("evaluate.oracle");
  const auto min_visits = static_cast<std::size_t>(c.integer("evaluate.min_visits", 1));
  const Dataset dataset = load_dataset(ctx.path("sequences"));
  const StatsTable stats = load_stats_csv(ctx.path("stats"));

  struct Model {
    std::string name;
    PlayerLedger ledger;
    QProvider provider;
  };
  std::vector<Model> models;
  const NetworkParams gim = load_model(ctx, "checkpoint", dataset);
  models.push_back({"GIM", compute_gim(gim, dataset), network_provider(gim)});
  std::optional<NetworkParams> t1;
  if (!ctx.path("t1_checkpoint").empty()) {
    t1 = load_model(ctx, "t1_checkpoint", dataset);
    models.push_back({"GIM-T1", compute_gim(*t1, dataset), network_provider(*t1)});
  }
  const TabularQ table = train_tabular_si(dataset, si);
  models.push_back({"SI", si_gim(table, dataset), table.provider()});
  std::optional<sim::OracleQ> oracle;
  if (use_oracle) {
    oracle = sim::solve_oracle_q(load_sim_spec(ctx));
    models.push_back({"Oracle", sim::oracle_gim(*oracle, dataset), oracle->provider()});
  }

  const eval::MetricVector games = stat_vector(stats, &PlayerStats::games);
  std::vector<eval::NamedMetric> measures{{"goals", stat_vector(stats, &PlayerStats::goals)},
                                          {"assists", stat_vector(stats, &PlayerStats::assists)},
                                          {"points", stat_vector(stats, &PlayerStats::points)}};
  for (auto& [name, v] : measures) v = eval::filter_min_games(v, games, min_games);
  std::vector<eval::NamedMetric> metrics;
  for (const auto& m : models) metrics.push_back({m.name, eval::filter_min_games(m.ledger.gim_map(), games, min_games)});

  {
    std::ofstream out(ctx.output("metrics.csv"));
    out << "player_id,team_id,games";
    for (const auto& m : models) out << ',' << m.name;
    out << ",goals,assists,points\n";
    for (const auto& p : models.front().ledger.players()) {
      out << p.player_id << ',' << p.team_id << ',' << p.games;
      for (const auto& m : models) {
        const PlayerRecord* r = m.ledger.find(p.player_id);
        out << ',' << fixed(r ? r->gim : 0.0, 17);
      }
      auto s = stats.find(p.player_id);
      if (s != stats.end())
        out << ',' << fixed(s->second.goals) << ',' << fixed(s->second.assists) << ',' << fixed(s->second.points);
      else
        out << ",,,";
      out << '\n';
    }
    if (!out) throw DataError("cannot write '" + ctx.output("metrics.csv") + "'");
  }

  eval::write_correlation_csv(ctx.output("correlations_pearson.csv"), metrics, measures, eval::Correlation::Pearson);
  eval::write_correlation_csv(ctx.output("correlations_spearman.csv"), metrics, measures,
                              eval::Correlation::Spearman);

  std::vector<eval::NamedTTest> tests;
  for (std::size_t i = 0; i < metrics.size(); ++i)
    for (std::size_t j = i + 1; j < metrics.size(); ++j) {
      try {
        tests.push_back({metrics[i].first, metrics[j].first, eval::paired_t_test(metrics[i].second, metrics[j].second)});
      } catch (const DataError& e) {
        ctx.err << "warning: t-test " << metrics[i].first << " vs " << metrics[j].first << " skipped: " << e.what()
                << '\n';
      }
    }
  eval::write_t_tests_csv(ctx.output("t_tests.csv"), tests);

  const eval::SeasonSchedule schedule = eval::schedule_of(dataset);
  const eval::MetricVector& points = measures[2].second;
  std::vector<std::pair<std::string, std::vector<eval::CurvePoint>>> vs_points;
  std::vector<std::pair<std::string, std::vector<eval::CurvePoint>>> auto_corr;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto rounds = eval::cumulative_by_round(eval::per_game_values(models[i].ledger), schedule);
    vs_points.push_back({models[i].name, eval::round_by_round(rounds, points)});
    auto_corr.push_back({models[i].name, eval::auto_correlation(rounds, metrics[i].second)});
  }
  eval::write_curves_csv(ctx.output("round_by_round.csv"), vs_points);
  eval::write_curves_csv(ctx.output("auto_correlation.csv"), auto_corr);

  if (oracle) {
    std::ofstream out(ctx.output("oracle_comparison.csv"));
    out << "model,mean_abs_error,cells_used,events_used,cells_visited\n";
    for (const auto& m : models) {
      if (m.name == "Oracle") continue;
      const auto cmp = sim::compare_to_oracle(*oracle, dataset, m.provider, min_visits);
      out << m.name << ',' << fixed(cmp.mean_abs_error, 17) << ',' << cmp.cells_used << ',' << cmp.events_used << ','
          << cmp.cells_visited << '\n';
    }
    if (!out) throw DataError("cannot write '" + ctx.output("oracle_comparison.csv") + "'");
  }
  ctx.err << "evaluated " << metrics.size() << " metrics against " << measures.size() << " measures\n";
}

struct GradCheckSettings {
  NetworkConfig net;
  std::vector<long long> lengths;
  double tolerance = 0.0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

GradCheckSettings grad_check_settings(const RunConfig& c) {
  GradCheckSettings g;
  g.net = network_config(c, "check_grad");
  g.net.input_width = encoded_width(ActionVocabulary::default_hockey().size());
  g.lengths = c.integers("check_grad.trace_lengths", 1);
  g.net.max_trace = static_cast<int>(*std::max_element(g.lengths.begin(), g.lengths.end()));
  g.tolerance = c.number("check_grad.tolerance");
  g.epsilon = c.number("check_grad.epsilon");
  if (g.tolerance <= 0.0) throw UsageError(c.where("check_grad.tolerance") + ": must be positive");
  if (g.epsilon <= 0.0) throw UsageError(c.where("check_grad.epsilon") + ": must be positive");
  g.seed = c.seed("check_grad.seed");
  return g;
}

void do_check_grad(Context& ctx) {
  const GradCheckSettings g = grad_check_settings(ctx.config);
  const NetworkConfig& net = g.net;
  const auto& lengths = g.lengths;
  const double tolerance = g.tolerance;
  const double epsilon = g.epsilon;
  const std::uint64_t seed = g.seed;

  std::ofstream out(ctx.output("grad_check.csv"));
  out << "trace_length,num_params,params_checked,max_relative_error,max_absolute_error,passed\n";
  std::vector<long long> failed;
  for (long long tl : lengths) {
    const GradCheckReport r = grad_check(net, seed, tolerance, static_cast<int>(tl), epsilon);
    out << r.trace_length << ',' << r.num_params << ',' << r.params_checked << ',' << fixed(r.max_relative_error, 6)
        << ',' << fixed(r.max_absolute_error, 6) << ',' << (r.passed ? "true" : "false") << '\n';
    ctx.err << "trace length " << tl << ": max relative error " << fixed(r.max_relative_error, 6) << " over "
            << r.params_checked << " parameters " << (r.passed ? "ok" : "FAILED") << '\n';
    if (!r.passed) failed.push_back(tl);
  }
  out.close();
  if (!failed.empty()) {
    std::string list;
    for (auto tl : failed) list += (list.empty() ? "" : ",") + std::to_string(tl);
    throw NumericalError("gradient check failed at trace length " + list + " (tolerance " + fixed(tolerance, 6) + ")");
  }
}

std::vector<Command> commands() {
  return {
      {"simulate", "Generate a synthetic season: events.csv, stats.csv and the simulator spec", {}, {"sim_spec"},
       [](Context& ctx) {
         ctx.config.integer("simulate.games", 1);
         ctx.config.seed("simulate.seed");
       },
       do_simulate},
      {"ingest", "Parse an event CSV into processed sequences (sequences.bin, vocabulary.txt)", {"events"},
       {"schema", "vocabulary"}, [](Context& ctx) { ctx.config.boolean("ingest.lenient"); }, do_ingest},
      {"train", "Train the Q network with Sarsa: checkpoint.bin and train_log.csv", {"sequences"}, {},
       [](Context& ctx) {
         network_config(ctx.config, "network");
         train_config(ctx.config);
       },
       do_train},
      {"rank", "Score every player's actions and write rankings.csv", {"sequences", "checkpoint"}, {"stats"}, {},
       do_rank},
      {"ticker", "Write the per-event Q values of one game to ticker.csv", {"sequences", "checkpoint"}, {}, {},
       do_ticker},
      {"evaluate", "Compare GIM, GIM-T1 and the tabular baseline against player stats",
       {"sequences", "checkpoint", "stats"}, {"t1_checkpoint", "sim_spec"},
       [](Context& ctx) {
         si_spec(ctx.config);
         ctx.config.number("evaluate.min_games");
         ctx.config.boolean("evaluate.oracle");
         ctx.config.integer("evaluate.min_visits", 1);
       },
       do_evaluate},
      {"check-grad", "Compare analytic gradients with central finite differences (grad_check.csv)", {}, {},
       [](Context& ctx) { grad_check_settings(ctx.config); },
       do_check_grad},
  };
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Numerical: return 3;
  }
  return 2;
}

std::string aliases(const KeyDef& def) {
  std::string names = def.flag();
  if (def.name() == "run.threads") names += ",--threads";
  if (def.name() == "run.dir") names += ",--run-dir";
  if (def.name() == "ticker.game_id") names += ",--game-id";
  return names;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Next-goal Q learning and player impact metrics from play-by-play event data", "gim"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  const std::vector<Command> cmds = commands();
  std::string config_path;
  std::map<std::string, std::string> flag_values;
  std::vector<std::pair<CLI::Option*, std::string>> flag_options;

  auto add_config_options = [&](CLI::App* sub, const std::string& command) {
    sub->add_option("--config", config_path, "configuration file (key = value lines under [section] headers)");
    for (const auto& def : key_table()) {
      const bool all = command == "config";
      if (!all && std::find(def.commands.begin(), def.commands.end(), command) == def.commands.end()) continue;
      CLI::Option* opt = sub->add_option(aliases(def), flag_values[command + "/" + def.name()], def.help);
      opt->default_str(def.default_value)->group("[" + def.section + "]");
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      flag_options.push_back({opt, def.name()});
    }
  };

  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    add_config_options(sub, cmd.name);
    subs[cmd.name] = sub;
  }
  CLI::App* config_cmd = app.add_subcommand("config", "Print the effective configuration");
  bool dump = false;
  config_cmd->add_flag("--dump", dump, "print every key with its effective value");
  add_config_options(config_cmd, "config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  std::string active;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) active = name;
  if (config_cmd->parsed()) active = "config";

  try {
    RunConfig config;
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw UsageError("--config: no such file '" + config_path + "'");
      config.apply_file(config_path);
    }
    for (const auto& [opt, name] : flag_options)
      if (opt->count() > 0) config.apply_flag(name, opt->as<std::string>());

    if (active == "config") {
      if (!dump) throw UsageError("config: nothing to do; pass --dump");
      config.dump(out);
      return 0;
    }

    const Command& cmd = *std::find_if(cmds.begin(), cmds.end(), [&](const Command& c) { return c.name == active; });
    config.integer("run.threads", 1);
    Context ctx{std::move(config), {}, out, err};
    require_paths(ctx.config, cmd);
    if (cmd.validate) cmd.validate(ctx);
    ctx.run_dir = make_run_dir(ctx.config);
    write_effective_config(ctx);
    cmd.execute(ctx);
    out << ctx.run_dir.string() << '\n';
    return 0;
  } catch (const Error& e) {
    err << "gim " << active << ": error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "gim " << active << ": error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace gim::cli
