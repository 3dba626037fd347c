#include "gim/event_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "gim/error.hpp"

namespace gim {

namespace {

std::string lower_trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  std::string out(text.substr(begin, end - begin));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

TeamSide parse_side(std::string_view text) {
  const std::string v = lower_trim(text);
  if (v == "h" || v == "home") return TeamSide::Home;
  if (v == "a" || v == "away") return TeamSide::Away;
  throw DataError("invalid team side '" + std::string(text) + "' (expected H/A)");
}

Manpower parse_manpower(std::string_view text) {
  const std::string v = lower_trim(text);
  if (v == "even" || v == "ev") return Manpower::Even;
  if (v == "sh" || v == "shorthanded" || v == "short-handed") return Manpower::ShortHanded;
  if (v == "pp" || v == "powerplay" || v == "power-play") return Manpower::PowerPlay;
  throw DataError("invalid manpower '" + std::string(text) + "' (expected EV/SH/PP)");
}

ActionOutcome parse_outcome(std::string_view text) {
  const std::string v = lower_trim(text);
  if (v == "s" || v == "successful" || v == "success") return ActionOutcome::Success;
  if (v == "f" || v == "failure" || v == "fail") return ActionOutcome::Failure;
  throw DataError("invalid outcome '" + std::string(text) + "' (expected S/F)");
}

std::string_view to_string(TeamSide side) { return side == TeamSide::Home ? "H" : "A"; }

std::string_view to_string(Manpower manpower) {
  switch (manpower) {
    case Manpower::Even: return "EV";
    case Manpower::ShortHanded: return "SH";
    case Manpower::PowerPlay: return "PP";
  }
  return "EV";
}

std::string_view to_string(ActionOutcome outcome) {
  return outcome == ActionOutcome::Success ? "S" : "F";
}

std::string_view to_string(EpisodeEnd end) {
  switch (end) {
    case EpisodeEnd::Home: return "Home";
    case EpisodeEnd::Away: return "Away";
    case EpisodeEnd::Neither: return "Neither";
  }
  return "Neither";
}

std::string normalize_action_name(std::string_view name) { return lower_trim(name); }

ActionVocabulary::ActionVocabulary(std::vector<std::string> names) {
  names_.reserve(names.size());
  for (const auto& n : names) {
    std::string norm = normalize_action_name(n);
    if (norm.empty()) throw DataError("empty action name in vocabulary");
    if (std::find(names_.begin(), names_.end(), norm) != names_.end()) {
      throw DataError("duplicate action name '" + norm + "' in vocabulary");
    }
    names_.push_back(std::move(norm));
  }
}

ActionVocabulary ActionVocabulary::default_hockey() {
  return ActionVocabulary({"shot", "block", "assist", "pass", "carry", "lpr", "check", "goal", "dump-in",
                           "dump-out", "reception", "faceoff", "puck-protection"});
}

ActionVocabulary ActionVocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open action vocabulary '" + path + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_action_name(line).empty()) continue;
    names.push_back(line);
  }
  if (names.empty()) throw DataError("action vocabulary '" + path + "' is empty");
  return ActionVocabulary(std::move(names));
}

void ActionVocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write action vocabulary '" + path + "'");
  for (const auto& n : names_) out << n << '\n';
}

std::optional<std::size_t> ActionVocabulary::find(std::string_view name) const {
  const std::string norm = normalize_action_name(name);
  auto it = std::find(names_.begin(), names_.end(), norm);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ActionVocabulary::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw DataError("unknown action '" + std::string(name) + "'");
}

GoalVector goal_vector(std::optional<EpisodeEnd> terminal) {
  GoalVector g{0.0, 0.0, 0.0};
  if (terminal) g[static_cast<std::size_t>(*terminal)] = 1.0;
  return g;
}

FeatureScaler::FeatureScaler() {
  mean_.fill(0.0);
  std_.fill(1.0);
}

FeatureScaler::FeatureScaler(std::array<double, kNumContinuous> mean, std::array<double, kNumContinuous> std)
    : mean_(mean), std_(std) {
  for (double s : std_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DataError("feature scaler std must be positive and finite");
  }
}

std::array<double, kNumContinuous> continuous_features(const Observation& obs) {
  return {obs.x, obs.y, obs.vx, obs.vy, obs.time_remain, obs.score_diff, obs.duration, obs.angle};
}

void ScalerAccumulator::add(const Event& event) {
  const auto f = continuous_features(event.obs);
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < kNumContinuous; ++i) {
    const double delta = f[i] - mean_[i];
    mean_[i] += delta / n;
    m2_[i] += delta * (f[i] - mean_[i]);
  }
}

void ScalerAccumulator::merge(const ScalerAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t i = 0; i < kNumContinuous; ++i) {
    const double delta = other.mean_[i] - mean_[i];
    mean_[i] += delta * nb / n;
    m2_[i] += other.m2_[i] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

FeatureScaler ScalerAccumulator::finish() const {
  if (count_ == 0) throw DataError("cannot fit feature scaler on an empty event stream");
  std::array<double, kNumContinuous> std{};
  for (std::size_t i = 0; i < kNumContinuous; ++i) {
    const double s = std::sqrt(m2_[i] / static_cast<double>(count_));
    // Degenerate (zero-variance) features pass through unscaled apart from centering.
    std[i] = s > 1e-12 ? s : 1.0;
  }
  return FeatureScaler(mean_, std);
}

FeatureScaler fit_scaler(std::span<const Event> events) {
  ScalerAccumulator acc;
  for (const auto& e : events) acc.add(e);
  return acc.finish();
}

EncodedStep encode_step(const Event& event, const FeatureScaler& scaler, const ActionVocabulary& vocabulary) {
  EncodedStep v(encoded_width(vocabulary.size()), 0.0);
  const auto f = continuous_features(event.obs);
  for (std::size_t i = 0; i < kNumContinuous; ++i) {
    v[i] = scaler.scale(i, f[i]);
    if (!std::isfinite(v[i])) {
      throw DataError("non-finite feature " + std::to_string(i) + " in game " + event.game_id + " at line " +
                      std::to_string(event.source_line));
    }
  }
  v[kOutcomeSlot] = event.obs.outcome == ActionOutcome::Success ? 1.0 : -1.0;
  v[kSideSlot] = event.obs.side == TeamSide::Home ? 1.0 : -1.0;
  v[kManpowerSlot + static_cast<std::size_t>(event.obs.manpower)] = 1.0;
  v[kActionSlot + vocabulary.index_of(event.action)] = 1.0;
  return v;
}

}  // namespace gim
