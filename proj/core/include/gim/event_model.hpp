#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gim {

enum class TeamSide : unsigned char { Home = 0, Away = 1 };
enum class Manpower : unsigned char { Even = 0, ShortHanded = 1, PowerPlay = 2 };
enum class ActionOutcome : unsigned char { Success = 0, Failure = 1 };

/// How a goal-scoring episode ends. Index order matches the Q heads.
enum class EpisodeEnd : unsigned char { Home = 0, Away = 1, Neither = 2 };

inline constexpr std::size_t kNumHeads = 3;
inline constexpr std::size_t kHomeHead = 0;
inline constexpr std::size_t kAwayHead = 1;
inline constexpr std::size_t kNeitherHead = 2;

inline std::size_t head_of(TeamSide side) { return side == TeamSide::Home ? kHomeHead : kAwayHead; }
inline EpisodeEnd episode_end_of(TeamSide side) {
  return side == TeamSide::Home ? EpisodeEnd::Home : EpisodeEnd::Away;
}
inline TeamSide opponent(TeamSide side) {
  return side == TeamSide::Home ? TeamSide::Away : TeamSide::Home;
}

TeamSide parse_side(std::string_view text);
Manpower parse_manpower(std::string_view text);
ActionOutcome parse_outcome(std::string_view text);
std::string_view to_string(TeamSide side);
std::string_view to_string(Manpower manpower);
std::string_view to_string(ActionOutcome outcome);
std::string_view to_string(EpisodeEnd end);

/// Lower-cased, whitespace-trimmed action name used for vocabulary lookups.
std::string normalize_action_name(std::string_view name);

/// Ordered list of action names; the index of a name is its one-hot slot.
class ActionVocabulary {
 public:
  ActionVocabulary() = default;
  explicit ActionVocabulary(std::vector<std::string> names);

  /// shot, block, assist, pass, carry, lpr, check, goal, dump-in, dump-out,
  /// reception, faceoff, puck-protection.
  static ActionVocabulary default_hockey();

  /// One name per line; blank lines are ignored.
  static ActionVocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t index) const { return names_.at(index); }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws DataError naming the value when it is not in the vocabulary.
  std::size_t index_of(std::string_view name) const;

  friend bool operator==(const ActionVocabulary&, const ActionVocabulary&) = default;

 private:
  std::vector<std::string> names_;
};

struct Observation {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double time_remain = 0.0;
  double score_diff = 0.0;
  Manpower manpower = Manpower::Even;
  double duration = 0.0;
  ActionOutcome outcome = ActionOutcome::Success;
  double angle = 0.0;
  TeamSide side = TeamSide::Home;
};

struct Event {
  std::string game_id;
  std::string player_id;
  std::string team_id;
  double game_time = 0.0;
  std::string action;  // normalized name
  Observation obs;
  TeamSide possession = TeamSide::Home;
  int play_number = 1;
  std::optional<TeamSide> goal;  // set when the event is a goal
  std::size_t source_line = 0;
};

using GoalVector = std::array<double, kNumHeads>;

/// Non-terminal steps carry no reward; terminal steps mark the episode end.
GoalVector goal_vector(std::optional<EpisodeEnd> terminal);

/// Number of scaled continuous features: x, y, vx, vy, time_remain,
/// score_diff, duration, angle.
inline constexpr std::size_t kNumContinuous = 8;

class FeatureScaler {
 public:
  FeatureScaler();  // identity: mean 0, std 1
  FeatureScaler(std::array<double, kNumContinuous> mean, std::array<double, kNumContinuous> std);

  const std::array<double, kNumContinuous>& mean() const { return mean_; }
  const std::array<double, kNumContinuous>& stddev() const { return std_; }

  double scale(std::size_t feature, double value) const {
    return (value - mean_[feature]) / std_[feature];
  }

  friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;

 private:
  std::array<double, kNumContinuous> mean_;
  std::array<double, kNumContinuous> std_;
};

std::array<double, kNumContinuous> continuous_features(const Observation& obs);

/// Streaming population moments (Welford). Partial accumulators merge, so
/// callers may fit per partition.
class ScalerAccumulator {
 public:
  void add(const Event& event);
  void merge(const ScalerAccumulator& other);
  std::size_t count() const { return count_; }
  /// Throws DataError when no events were added.
  FeatureScaler finish() const;

 private:
  std::size_t count_ = 0;
  std::array<double, kNumContinuous> mean_{};
  std::array<double, kNumContinuous> m2_{};
};

FeatureScaler fit_scaler(std::span<const Event> events);

using EncodedStep = std::vector<double>;

/// 10 scalar slots (8 scaled continuous, outcome, side) + 3 manpower + |A| actions.
inline std::size_t encoded_width(std::size_t vocabulary_size) { return kNumContinuous + 2 + 3 + vocabulary_size; }

inline constexpr std::size_t kOutcomeSlot = kNumContinuous;
inline constexpr std::size_t kSideSlot = kNumContinuous + 1;
inline constexpr std::size_t kManpowerSlot = kNumContinuous + 2;
inline constexpr std::size_t kActionSlot = kNumContinuous + 5;

EncodedStep encode_step(const Event& event, const FeatureScaler& scaler, const ActionVocabulary& vocabulary);

}  // namespace gim
