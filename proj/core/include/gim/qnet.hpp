#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gim/event_model.hpp"

namespace gim {

struct NetworkConfig {
  std::size_t input_width = encoded_width(13);
  std::size_t lstm_hidden = 1000;
  std::array<std::size_t, 2> dense_widths{1000, 1000};
  int max_trace = 10;

  static constexpr std::size_t kOutputs = kNumHeads;

  /// Throws UsageError on a zero width or a trace cap below 1.
  void validate() const;
  std::size_t num_params() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Offsets of each parameter block inside the flat parameter vector. The same
/// layout indexes gradients.
struct ParamLayout {
  explicit ParamLayout(const NetworkConfig& config);

  std::size_t lstm_weights;  // 4H x (I + H), gate order i, f, g, o; row-major
  std::size_t lstm_bias;     // 4H
  std::size_t dense1_weights;
  std::size_t dense1_bias;
  std::size_t dense2_weights;
  std::size_t dense2_bias;
  std::size_t output_weights;
  std::size_t output_bias;
  std::size_t total;
};

using QOutput = std::array<double, kNumHeads>;

/// Weights of the Q-network plus the encoding they were trained against.
class NetworkParams {
 public:
  NetworkParams() = default;
  /// All-zero weights.
  NetworkParams(NetworkConfig config, FeatureScaler scaler, ActionVocabulary vocabulary);

  const NetworkConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const FeatureScaler& scaler() const { return scaler_; }
  const ActionVocabulary& vocabulary() const { return vocabulary_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Changes the trace cap used at evaluation time (the GIM-T1 baseline uses 1).
  void set_max_trace(int max_trace);

  bool all_finite() const;

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.config_ == b.config_ && a.scaler_ == b.scaler_ && a.vocabulary_ == b.vocabulary_ &&
           a.values_ == b.values_;
  }

 private:
  NetworkConfig config_;
  ParamLayout layout_{NetworkConfig{}};
  FeatureScaler scaler_;
  ActionVocabulary vocabulary_;
  std::vector<double> values_;
};

/// Fan-in scaled uniform weights, zero biases, forget-gate bias 1.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed, FeatureScaler scaler = {},
                          ActionVocabulary vocabulary = ActionVocabulary::default_hockey());

/// Activations recorded by forward() and consumed by backward(). Reusable
/// across calls to avoid reallocation. Holds a view of the window, which must
/// outlive the cache's use.
struct ForwardCache {
  std::span<const EncodedStep> window;
  Eigen::MatrixXd gates;   // 4H x T, post-nonlinearity
  Eigen::MatrixXd cells;   // H x (T + 1), column 0 is the zero initial state
  Eigen::MatrixXd hidden;  // H x (T + 1)
  Eigen::MatrixXd cell_tanh;  // H x T
  Eigen::VectorXd dense1_pre, dense1, dense2_pre, dense2;
  Eigen::Vector3d output;
};

/// Runs the window through the LSTM in chronological order from a zero state,
/// then the ReLU dense layers and a softmax over the three heads.
QOutput forward(const NetworkParams& params, std::span<const EncodedStep> window, ForwardCache* cache = nullptr);

/// Accumulates d(upstream . q)/d(theta) into grad (size params.size()).
void backward(const NetworkParams& params, const ForwardCache& cache, const QOutput& upstream, std::span<double> grad);

/// Convenience: fresh forward pass then backward; returns the full gradient.
std::vector<double> backward(const NetworkParams& params, std::span<const EncodedStep> window,
                             const QOutput& upstream);

void save_checkpoint(const NetworkParams& params, const std::string& path);
/// When expected_vocabulary is given, a vocabulary of a different size is a
/// shape mismatch.
NetworkParams load_checkpoint(const std::string& path, const ActionVocabulary* expected_vocabulary = nullptr);

inline constexpr char kCheckpointMagic[8] = {'G', 'I', 'M', 'Q', 'N', 'E', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t params_checked = 0;
  std::size_t num_params = 0;
  int trace_length = 0;
  bool passed = false;
};

/// Compares backward() against central differences (step epsilon) of a random
/// linear functional of the output on a random network and window.
GradCheckReport grad_check(const NetworkConfig& config, std::uint64_t seed, double tolerance, int trace_length,
                           double epsilon = 1e-5);

/// Relative error used by grad_check: |a - n| / max(|a|, |n|, 1e-6).
double gradient_relative_error(double analytic, double numeric);

}  // namespace gim
