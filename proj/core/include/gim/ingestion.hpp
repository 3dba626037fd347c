#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gim/event_model.hpp"

namespace gim {

/// Maps logical field names to CSV header names. Logical names:
/// game_id, player_id, game_time, team_id, x, y, manpower, score_diff,
/// action, outcome, possession, side.
class CsvSchema {
 public:
  static CsvSchema defaults();
  /// key=value lines overriding the defaults; '#' starts a comment.
  static CsvSchema load(const std::string& path);

  const std::string& header_for(const std::string& logical) const;
  void set(const std::string& logical, const std::string& header);
  const std::map<std::string, std::string>& columns() const { return columns_; }

 private:
  std::map<std::string, std::string> columns_;
};

struct ParseOptions {
  bool lenient = false;  // skip malformed rows with a warning instead of aborting
};

struct Game {
  std::string game_id;
  std::vector<Event> events;
};

struct ParseResult {
  std::vector<Game> games;  // in order of first appearance in the file
  std::vector<std::string> warnings;
};

ParseResult parse_events(std::istream& in, const std::string& source, const CsvSchema& schema,
                         const ParseOptions& options = {});
ParseResult parse_events(const std::string& path, const CsvSchema& schema, const ParseOptions& options = {});

/// Adjusted-frame x of the goal line used for the shot angle.
inline constexpr double kGoalLineX = 89.0;
inline constexpr double kGameSeconds = 3600.0;

double shot_angle(double x, double y);

/// Fills time_remain, duration, angle and velocity. Events must be time-sorted.
void derive_features(Game& game);

/// Play number starts at 1 and increments whenever the possessing team changes.
void assign_play_numbers(Game& game);

struct Episode {
  std::string game_id;
  std::vector<Event> events;
  EpisodeEnd terminal = EpisodeEnd::Neither;
};

std::vector<Episode> segment_episodes(const Game& game);

inline constexpr int kMaxTraceLength = 10;

std::vector<int> compute_trace_lengths(const Episode& episode, int max_trace = kMaxTraceLength);

/// One goal-scoring episode ready for the Q-network.
struct Sequence {
  std::string game_id;
  EpisodeEnd terminal = EpisodeEnd::Neither;
  std::vector<Event> events;
  std::vector<EncodedStep> encoded;
  std::vector<int> trace_lengths;

  std::size_t size() const { return events.size(); }
  bool is_terminal(std::size_t t) const { return t + 1 == events.size(); }
  GoalVector goal(std::size_t t) const {
    return goal_vector(is_terminal(t) ? std::optional<EpisodeEnd>(terminal) : std::nullopt);
  }
  /// The encoded steps ending at t, at most min(tl_t, max_trace) long.
  std::span<const EncodedStep> window(std::size_t t, int max_trace = kMaxTraceLength) const;
};

std::vector<Sequence> build_sequences(const std::vector<Episode>& episodes, const FeatureScaler& scaler,
                                      const ActionVocabulary& vocabulary);

/// A processed dataset: the vocabulary and scaler used to encode it plus its sequences.
struct Dataset {
  ActionVocabulary vocabulary;
  FeatureScaler scaler;
  std::vector<Sequence> sequences;

  std::size_t num_events() const;
};

/// Full pipeline over parsed games: derive, number plays, segment, encode.
/// The scaler is fitted on the games unless one is supplied.
Dataset ingest_games(std::vector<Game> games, const ActionVocabulary& vocabulary,
                     const std::optional<FeatureScaler>& scaler = std::nullopt);

/// Processed-sequence file. See docs/file-formats.md.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

inline constexpr char kSequenceMagic[8] = {'G', 'I', 'M', 'S', 'E', 'Q', '\0', '\0'};
inline constexpr unsigned char kSequenceVersion = 1;

}  // namespace gim
