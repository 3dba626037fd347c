#include "gim/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "gim/binary_io.hpp"
#include "gim/csv.hpp"
#include "gim/error.hpp"

namespace gim {

namespace {

const std::vector<std::string>& logical_fields() {
  static const std::vector<std::string> fields = {"game_id", "player_id", "game_time", "team_id",
                                                  "x",       "y",         "manpower",  "score_diff",
                                                  "action",  "outcome",   "possession", "side"};
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

CsvSchema CsvSchema::defaults() {
  CsvSchema s;
  s.columns_ = {{"game_id", "GID"},   {"player_id", "PID"},  {"game_time", "GT"},  {"team_id", "TID"},
                {"x", "X"},           {"y", "Y"},            {"manpower", "MP"},   {"score_diff", "GD"},
                {"action", "Action"}, {"outcome", "OC"},     {"possession", "P"},  {"side", "HA"}};
  return s;
}

CsvSchema CsvSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  CsvSchema s = defaults();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw RowError(path, lineno, "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (std::find(logical_fields().begin(), logical_fields().end(), key) == logical_fields().end()) {
      throw RowError(path, lineno, "unknown schema field '" + key + "'");
    }
    s.columns_[key] = trim(line.substr(eq + 1));
  }
  return s;
}

const std::string& CsvSchema::header_for(const std::string& logical) const {
  auto it = columns_.find(logical);
  if (it == columns_.end()) throw UsageError("unknown schema field '" + logical + "'");
  return it->second;
}

void CsvSchema::set(const std::string& logical, const std::string& header) {
  if (std::find(logical_fields().begin(), logical_fields().end(), logical) == logical_fields().end()) {
    throw UsageError("unknown schema field '" + logical + "'");
  }
  columns_[logical] = header;
}

ParseResult parse_events(std::istream& in, const std::string& source, const CsvSchema& schema,
                         const ParseOptions& options) {
  ParseResult result;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = csv::split_line(line);

  std::unordered_map<std::string, std::size_t> col;
  for (const auto& field : logical_fields()) {
    const std::string& name = schema.header_for(field);
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(source + ": schema error: missing column '" + name + "' (" + field + ")");
    }
    col[field] = static_cast<std::size_t>(it - header.begin());
  }

  std::unordered_map<std::string, std::size_t> game_index;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const auto f = csv::split_line(line);
      if (f.size() != header.size()) {
        throw RowError(source, lineno,
                       "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
      }
      auto number = [&](const char* field) {
        const auto& text = f[col.at(field)];
        auto v = csv::parse_double(text);
        if (!v || !std::isfinite(*v)) {
          throw RowError(source, lineno, "unparseable number '" + text + "' in column '" +
                                             schema.header_for(field) + "'");
        }
        return *v;
      };
      auto discrete = [&](auto parse, const char* field) {
        try {
          return parse(f[col.at(field)]);
        } catch (const DataError& e) {
          throw RowError(source, lineno, e.what());
        }
      };
      Event e;
      e.source_line = lineno;
      e.game_id = trim(f[col.at("game_id")]);
      e.player_id = trim(f[col.at("player_id")]);
      e.team_id = trim(f[col.at("team_id")]);
      e.game_time = number("game_time");
      if (e.game_time < 0.0) throw RowError(source, lineno, "negative game time");
      e.obs.x = number("x");
      e.obs.y = number("y");
      e.obs.score_diff = number("score_diff");
      e.obs.manpower = discrete([](const std::string& t) { return parse_manpower(t); }, "manpower");
      e.obs.outcome = discrete([](const std::string& t) { return parse_outcome(t); }, "outcome");
      e.obs.side = discrete([](const std::string& t) { return parse_side(t); }, "side");
      e.possession = discrete([](const std::string& t) { return parse_side(t); }, "possession");
      e.action = normalize_action_name(f[col.at("action")]);
      if (e.action.empty()) throw RowError(source, lineno, "empty action");
      if (e.action == "goal") e.goal = e.obs.side;
      if (e.game_id.empty()) throw RowError(source, lineno, "empty game id");

      auto [it, inserted] = game_index.try_emplace(e.game_id, result.games.size());
      if (inserted) result.games.push_back(Game{e.game_id, {}});
      result.games[it->second].events.push_back(std::move(e));
    } catch (const RowError& err) {
      if (!options.lenient) throw;
      result.warnings.emplace_back(err.what());
    }
  }

  for (auto& g : result.games) {
    std::stable_sort(g.events.begin(), g.events.end(),
                     [](const Event& a, const Event& b) { return a.game_time < b.game_time; });
  }
  return result;
}

ParseResult parse_events(const std::string& path, const CsvSchema& schema, const ParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file '" + path + "'");
  return parse_events(in, path, schema, options);
}

double shot_angle(double x, double y) {
  if (x >= kGoalLineX) {
    if (y > 0.0) return std::numbers::pi / 2.0;
    if (y < 0.0) return -std::numbers::pi / 2.0;
    return 0.0;
  }
  return std::atan(std::abs(y) / (kGoalLineX - x));
}

void derive_features(Game& game) {
  for (std::size_t t = 0; t < game.events.size(); ++t) {
    Event& e = game.events[t];
    e.obs.time_remain = std::max(0.0, kGameSeconds - e.game_time);
    e.obs.angle = shot_angle(e.obs.x, e.obs.y);
    if (t == 0) {
      e.obs.duration = 0.0;
      e.obs.vx = e.obs.vy = 0.0;
      continue;
    }
    const Event& prev = game.events[t - 1];
    e.obs.duration = e.game_time - prev.game_time;
    if (e.obs.duration <= 0.0) {
      e.obs.duration = 0.0;
      e.obs.vx = e.obs.vy = 0.0;
      continue;
    }
    // Previous coordinates expressed in the current actor's adjusted frame.
    double px = prev.obs.x;
    double py = prev.obs.y;
    if (prev.obs.side != e.obs.side) {
      px = -px;
      py = -py;
    }
    e.obs.vx = (e.obs.x - px) / e.obs.duration;
    e.obs.vy = (e.obs.y - py) / e.obs.duration;
  }
}

void assign_play_numbers(Game& game) {
  int play = 1;
  for (std::size_t t = 0; t < game.events.size(); ++t) {
    if (t > 0 && game.events[t].possession != game.events[t - 1].possession) ++play;
    game.events[t].play_number = play;
  }
}

std::vector<Episode> segment_episodes(const Game& game) {
  std::vector<Episode> episodes;
  Episode cur{game.game_id, {}, EpisodeEnd::Neither};
  for (const auto& e : game.events) {
    cur.events.push_back(e);
    if (e.goal) {
      cur.terminal = episode_end_of(*e.goal);
      episodes.push_back(std::move(cur));
      cur = Episode{game.game_id, {}, EpisodeEnd::Neither};
    }
  }
  if (!cur.events.empty()) episodes.push_back(std::move(cur));
  return episodes;
}

std::vector<int> compute_trace_lengths(const Episode& episode, int max_trace) {
  std::vector<int> tl(episode.events.size());
  int run = 0;
  for (std::size_t t = 0; t < episode.events.size(); ++t) {
    if (t == 0 || episode.events[t].play_number != episode.events[t - 1].play_number) {
      run = 1;
    } else {
      ++run;
    }
    tl[t] = std::min(run, max_trace);
  }
  return tl;
}

std::span<const EncodedStep> Sequence::window(std::size_t t, int max_trace) const {
  const std::size_t len = static_cast<std::size_t>(std::max(1, std::min(trace_lengths.at(t), max_trace)));
  return std::span<const EncodedStep>(encoded).subspan(t + 1 - len, len);
}

std::vector<Sequence> build_sequences(const std::vector<Episode>& episodes, const FeatureScaler& scaler,
                                      const ActionVocabulary& vocabulary) {
  std::vector<Sequence> out;
  out.reserve(episodes.size());
  for (const auto& ep : episodes) {
    Sequence seq;
    seq.game_id = ep.game_id;
    seq.terminal = ep.terminal;
    seq.events = ep.events;
    seq.trace_lengths = compute_trace_lengths(ep);
    seq.encoded.reserve(ep.events.size());
    for (const auto& e : ep.events) {
      try {
        seq.encoded.push_back(encode_step(e, scaler, vocabulary));
      } catch (const DataError& err) {
        throw DataError("game " + e.game_id + ", line " + std::to_string(e.source_line) + ": " + err.what());
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::size_t Dataset::num_events() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

Dataset ingest_games(std::vector<Game> games, const ActionVocabulary& vocabulary,
                     const std::optional<FeatureScaler>& scaler) {
  ScalerAccumulator acc;
  for (auto& g : games) {
    derive_features(g);
    assign_play_numbers(g);
    for (const auto& e : g.events) acc.add(e);
  }
  Dataset ds;
  ds.vocabulary = vocabulary;
  ds.scaler = scaler ? *scaler : acc.finish();
  for (const auto& g : games) {
    auto seqs = build_sequences(segment_episodes(g), ds.scaler, vocabulary);
    for (auto& s : seqs) ds.sequences.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sequence file '" + path + "'");
  binary::Writer w(out);
  w.bytes(kSequenceMagic, sizeof(kSequenceMagic));
  w.u8(kSequenceVersion);
  w.u32(static_cast<std::uint32_t>(dataset.vocabulary.size()));
  for (const auto& n : dataset.vocabulary.names()) w.str(n);
  for (double m : dataset.scaler.mean()) w.f64(m);
  for (double s : dataset.scaler.stddev()) w.f64(s);
  const std::size_t width = encoded_width(dataset.vocabulary.size());
  w.u32(static_cast<std::uint32_t>(width));
  w.u64(dataset.sequences.size());
  for (const auto& seq : dataset.sequences) {
    w.str(seq.game_id);
    w.u8(static_cast<std::uint8_t>(seq.terminal));
    w.u32(static_cast<std::uint32_t>(seq.size()));
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const Event& e = seq.events[t];
      w.str(e.player_id);
      w.str(e.team_id);
      w.f64(e.game_time);
      w.u32(static_cast<std::uint32_t>(dataset.vocabulary.index_of(e.action)));
      w.f64(e.obs.x);
      w.f64(e.obs.y);
      w.f64(e.obs.vx);
      w.f64(e.obs.vy);
      w.f64(e.obs.time_remain);
      w.f64(e.obs.score_diff);
      w.u8(static_cast<std::uint8_t>(e.obs.manpower));
      w.f64(e.obs.duration);
      w.u8(static_cast<std::uint8_t>(e.obs.outcome));
      w.f64(e.obs.angle);
      w.u8(static_cast<std::uint8_t>(e.obs.side));
      w.u8(static_cast<std::uint8_t>(e.possession));
      w.i32(e.play_number);
      w.u8(e.goal ? static_cast<std::uint8_t>(1 + static_cast<int>(*e.goal)) : 0);
      w.u64(e.source_line);
      w.u8(static_cast<std::uint8_t>(seq.trace_lengths[t]));
      for (double v : seq.encoded[t]) w.f64(v);
    }
  }
  if (!out) throw DataError("error writing sequence file '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open sequence file '" + path + "'");
  binary::Reader r(in, path);
  char magic[sizeof(kSequenceMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kSequenceMagic, sizeof(magic)) != 0) {
    throw DataError(path + ": not a sequence file (bad magic)");
  }
  const auto version = r.u8();
  if (version != kSequenceVersion) {
    throw DataError(path + ": unsupported sequence file version " + std::to_string(version));
  }
  Dataset ds;
  const auto nvocab = r.u32();
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < nvocab; ++i) names.push_back(r.str());
  ds.vocabulary = ActionVocabulary(std::move(names));
  std::array<double, kNumContinuous> mean{};
  std::array<double, kNumContinuous> stddev{};
  for (auto& m : mean) m = r.f64();
  for (auto& s : stddev) s = r.f64();
  ds.scaler = FeatureScaler(mean, stddev);
  const auto width = r.u32();
  if (width != encoded_width(ds.vocabulary.size())) throw DataError(path + ": encoded width mismatch");
  const auto nseq = r.u64();
  for (std::uint64_t i = 0; i < nseq; ++i) {
    Sequence seq;
    seq.game_id = r.str();
    const auto term = r.u8();
    if (term > 2) throw DataError(path + ": corrupt episode terminal");
    seq.terminal = static_cast<EpisodeEnd>(term);
    const auto n = r.u32();
    for (std::uint32_t t = 0; t < n; ++t) {
      Event e;
      e.game_id = seq.game_id;
      e.player_id = r.str();
      e.team_id = r.str();
      e.game_time = r.f64();
      const auto action = r.u32();
      if (action >= ds.vocabulary.size()) throw DataError(path + ": action index out of range");
      e.action = ds.vocabulary.name(action);
      e.obs.x = r.f64();
      e.obs.y = r.f64();
      e.obs.vx = r.f64();
      e.obs.vy = r.f64();
      e.obs.time_remain = r.f64();
      e.obs.score_diff = r.f64();
      e.obs.manpower = static_cast<Manpower>(r.u8() % 3);
      e.obs.duration = r.f64();
      e.obs.outcome = static_cast<ActionOutcome>(r.u8() & 1);
      e.obs.angle = r.f64();
      e.obs.side = static_cast<TeamSide>(r.u8() & 1);
      e.possession = static_cast<TeamSide>(r.u8() & 1);
      e.play_number = r.i32();
      const auto goal = r.u8();
      if (goal > 0) e.goal = static_cast<TeamSide>((goal - 1) & 1);
      e.source_line = r.u64();
      seq.trace_lengths.push_back(r.u8());
      EncodedStep v(width);
      for (auto& x : v) x = r.f64();
      seq.events.push_back(std::move(e));
      seq.encoded.push_back(std::move(v));
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace gim
