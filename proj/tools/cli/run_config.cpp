#include "run_config.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "gim/error.hpp"
#include "gim/ini.hpp"

namespace gim::cli {

namespace {

const std::vector<std::string> kAll{"simulate", "ingest", "train", "rank", "ticker", "evaluate", "check-grad"};

std::vector<KeyDef> build_table() {
  using C = std::vector<std::string>;
  const C train{"train"};
  const C valued{"rank", "ticker", "evaluate"};
  return {
      {"run", "root", "runs", "parent directory for timestamped run directories", kAll},
      {"run", "dir", "", "write outputs to exactly this directory instead of a new timestamped one", kAll},
      {"run", "threads", "1", "worker threads; 1 guarantees bitwise-reproducible output", kAll},

      {"paths", "events", "", "play-by-play event CSV", {"ingest"}},
      {"paths", "schema", "", "optional column mapping file (logical=header per line)", {"ingest"}},
      {"paths", "vocabulary", "", "optional action vocabulary file (one name per line)", {"ingest"}},
      {"paths", "sequences", "", "processed sequences written by ingest",
       {"train", "rank", "ticker", "evaluate"}},
      {"paths", "checkpoint", "", "network checkpoint written by train", valued},
      {"paths", "t1_checkpoint", "", "optional checkpoint trained with network.max_trace=1 (GIM-T1)", {"evaluate"}},
      {"paths", "stats", "", "per-player stats CSV (player_id,skill,goals,assists,points,games)",
       {"rank", "evaluate"}},
      {"paths", "sim_spec", "", "simulator definition file; empty uses the built-in desk-scale spec",
       {"simulate", "evaluate"}},

      {"simulate", "games", "200", "number of games in the simulated season", {"simulate"}},
      {"simulate", "seed", "7", "season seed; game g uses seed + g", {"simulate"}},

      {"ingest", "lenient", "false", "skip malformed rows with a warning instead of aborting", {"ingest"}},

      {"network", "lstm_hidden", "1000", "LSTM hidden units", train},
      {"network", "dense_widths", "1000,1000", "widths of the two relu layers", train},
      {"network", "max_trace", "10", "maximum LSTM trace length (1 gives the GIM-T1 baseline)", train},

      {"train", "batch_size", "32", "transitions per SGD step", train},
      {"train", "learning_rate", "0.0001", "SGD step size", train},
      {"train", "final_learning_rate", "-1", "if >= 0, step size decays linearly to this value by max_steps", train},
      {"train", "max_steps", "100000", "SGD steps; 0 writes the initialization", train},
      {"train", "eval_every", "1000", "steps between evaluations, log rows and checkpoints", train},
      {"train", "seed", "1", "shuffling seed", train},
      {"train", "gradient_clip", "10", "L2 norm cap on the batch gradient; <= 0 disables", train},
      {"train", "full_gradient", "false", "also differentiate through the bootstrap target", train},
      {"train", "eval_sample", "4096", "transitions in the fixed evaluation subset; 0 uses all", train},
      {"train", "plateau_patience", "0", "evaluations without improvement before stopping; 0 never stops", train},
      {"train", "plateau_min_delta", "1e-06", "improvement that resets the plateau counter", train},

      {"ticker", "game_id", "", "game to trace", {"ticker"}},

      {"si", "x_bins", "10", "tabular baseline: bins across rink length", {"evaluate"}},
      {"si", "y_bins", "5", "tabular baseline: bins across rink width", {"evaluate"}},
      {"si", "time_bins", "12", "tabular baseline: game-time bins", {"evaluate"}},
      {"si", "manpower_bins", "3", "tabular baseline: 3 splits manpower, 1 pools it", {"evaluate"}},
      {"si", "score_bins", "5", "tabular baseline: odd number of score-difference bins", {"evaluate"}},
      {"si", "split_actions", "true", "tabular baseline: separate cells per action", {"evaluate"}},

      {"evaluate", "min_games", "5", "players with fewer games are excluded from correlations", {"evaluate"}},
      {"evaluate", "oracle", "false", "also score the exact simulator Q (sequences must come from simulate)",
       {"evaluate"}},
      {"evaluate", "min_visits", "50", "oracle comparison: minimum events per cell", {"evaluate"}},

      {"check_grad", "lstm_hidden", "8", "LSTM hidden units of the checked network", {"check-grad"}},
      {"check_grad", "dense_widths", "8,8", "relu layer widths of the checked network", {"check-grad"}},
      {"check_grad", "trace_lengths", "1,10", "window lengths to check", {"check-grad"}},
      {"check_grad", "tolerance", "0.0001", "maximum relative error", {"check-grad"}},
      {"check_grad", "epsilon", "1e-05", "central difference step", {"check-grad"}},
      {"check_grad", "seed", "1", "parameter and window seed", {"check-grad"}},
  };
}

}  // namespace

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = build_table();
  return table;
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

RunConfig::RunConfig() {
  for (const auto& def : key_table()) values_[def.name()] = {def.default_value, "default"};
}

RunConfig::Value& RunConfig::slot(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw UsageError("unknown configuration key '" + name + "'");
  return it->second;
}

void RunConfig::apply_file(const std::string& path) {
  const ini::Document doc = ini::Document::parse_file(path);
  std::set<std::string> allowed;
  for (const auto& def : key_table()) allowed.insert(def.name());
  doc.reject_unknown(allowed);
  for (const auto& [section, entries] : doc.sections())
    for (const auto& [key, entry] : entries)
      slot(section + "." + key) = {entry.value, path + ":" + std::to_string(entry.line)};
}

void RunConfig::apply_flag(const std::string& name, const std::string& value) {
  slot(name) = {value, "flag"};
}

const std::string& RunConfig::text(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw UsageError("unknown configuration key '" + name + "'");
  return it->second.text;
}

const std::string& RunConfig::origin(const std::string& name) const {
  text(name);
  return values_.at(name).origin;
}

std::string RunConfig::where(const std::string& name) const {
  const std::string& o = origin(name);
  if (o == "flag" || o == "default") return "--" + name;
  return "--" + name + " (set at " + o + ")";
}

void RunConfig::bad(const std::string& name, const std::string& expected) const {
  throw UsageError(where(name) + ": expected " + expected + ", got '" + text(name) + "'");
}

double RunConfig::number(const std::string& name) const {
  const std::string& s = text(name);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) bad(name, "a finite number");
  return v;
}

long long RunConfig::integer(const std::string& name, long long min_value) const {
  const std::string& s = text(name);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < min_value)
    bad(name, "an integer >= " + std::to_string(min_value));
  return v;
}

std::uint64_t RunConfig::seed(const std::string& name) const {
  const std::string& s = text(name);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad(name, "an unsigned integer");
  return v;
}

bool RunConfig::boolean(const std::string& name) const {
  const std::string& s = text(name);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(name, "true or false");
}

std::vector<long long> RunConfig::integers(const std::string& name, long long min_value) const {
  std::vector<long long> out;
  std::stringstream ss(text(name));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = ini::trim(item);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || v < min_value)
      bad(name, "a comma-separated list of integers >= " + std::to_string(min_value));
    out.push_back(v);
  }
  if (out.empty()) bad(name, "a non-empty list");
  return out;
}

void RunConfig::dump(std::ostream& out) const {
  std::string section;
  for (const auto& def : key_table()) {
    if (def.section != section) {
      if (!section.empty()) out << '\n';
      section = def.section;
      out << '[' << section << "]\n";
    }
    out << "# " << def.help << '\n' << def.key << " = " << values_.at(def.name()).text << '\n';
  }
}

std::uint64_t RunConfig::hash() const {
  std::string canonical;
  for (const auto& def : key_table()) {
    if (def.section == "run") continue;
    canonical += def.name() + "=" + values_.at(def.name()).text + "\n";
  }
  return fnv1a(canonical);
}

}  // namespace gim::cli
