#include "gim/qnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "gim/binary_io.hpp"
#include "gim/error.hpp"
#include "gim/random.hpp"

namespace gim {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMajor>;
using Mat = Eigen::Map<RowMajor>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

template <typename M, typename V, typename Ptr>
struct Views {
  M lstm_w, d1_w, d2_w, out_w;
  V lstm_b, d1_b, d2_b, out_b;

  Views(const NetworkConfig& c, const ParamLayout& l, Ptr base)
      : lstm_w(base + l.lstm_weights, 4 * c.lstm_hidden, c.input_width + c.lstm_hidden),
        d1_w(base + l.dense1_weights, c.dense_widths[0], c.lstm_hidden),
        d2_w(base + l.dense2_weights, c.dense_widths[1], c.dense_widths[0]),
        out_w(base + l.output_weights, NetworkConfig::kOutputs, c.dense_widths[1]),
        lstm_b(base + l.lstm_bias, 4 * c.lstm_hidden),
        d1_b(base + l.dense1_bias, c.dense_widths[0]),
        d2_b(base + l.dense2_bias, c.dense_widths[1]),
        out_b(base + l.output_bias, NetworkConfig::kOutputs) {}
};

using ConstViews = Views<ConstMat, ConstVec, const double*>;
using MutViews = Views<Mat, Vec, double*>;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_width == 0 || lstm_hidden == 0 || dense_widths[0] == 0 || dense_widths[1] == 0) {
    throw UsageError("network widths must all be >= 1");
  }
  if (max_trace < 1) throw UsageError("max_trace must be >= 1");
}

std::size_t NetworkConfig::num_params() const { return ParamLayout(*this).total; }

ParamLayout::ParamLayout(const NetworkConfig& c) {
  const std::size_t h = c.lstm_hidden;
  std::size_t off = 0;
  lstm_weights = off;
  off += 4 * h * (c.input_width + h);
  lstm_bias = off;
  off += 4 * h;
  dense1_weights = off;
  off += c.dense_widths[0] * h;
  dense1_bias = off;
  off += c.dense_widths[0];
  dense2_weights = off;
  off += c.dense_widths[1] * c.dense_widths[0];
  dense2_bias = off;
  off += c.dense_widths[1];
  output_weights = off;
  off += NetworkConfig::kOutputs * c.dense_widths[1];
  output_bias = off;
  off += NetworkConfig::kOutputs;
  total = off;
}

NetworkParams::NetworkParams(NetworkConfig config, FeatureScaler scaler, ActionVocabulary vocabulary)
    : config_(config), layout_(config), scaler_(scaler), vocabulary_(std::move(vocabulary)) {
  config_.validate();
  values_.assign(layout_.total, 0.0);
}

void NetworkParams::set_max_trace(int max_trace) {
  if (max_trace < 1) throw UsageError("max_trace must be >= 1");
  config_.max_trace = max_trace;
}

bool NetworkParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed, FeatureScaler scaler,
                          ActionVocabulary vocabulary) {
  NetworkParams p(config, scaler, std::move(vocabulary));
  Rng rng(seed);
  MutViews v(config, p.layout(), p.values().data());
  auto fill = [&](auto& m, double limit) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
    }
  };
  const double lstm_fan_in = static_cast<double>(config.input_width + config.lstm_hidden);
  fill(v.lstm_w, 1.0 / std::sqrt(lstm_fan_in));
  fill(v.d1_w, std::sqrt(6.0 / static_cast<double>(config.lstm_hidden)));
  fill(v.d2_w, std::sqrt(6.0 / static_cast<double>(config.dense_widths[0])));
  fill(v.out_w, 1.0 / std::sqrt(static_cast<double>(config.dense_widths[1])));
  const auto h = static_cast<Eigen::Index>(config.lstm_hidden);
  v.lstm_b.segment(h, h).setOnes();
  return p;
}

QOutput forward(const NetworkParams& params, std::span<const EncodedStep> window, ForwardCache* cache) {
  const NetworkConfig& cfg = params.config();
  if (window.empty()) throw UsageError("forward: empty window");
  const auto in = static_cast<Eigen::Index>(cfg.input_width);
  const auto h = static_cast<Eigen::Index>(cfg.lstm_hidden);
  const auto steps = static_cast<Eigen::Index>(window.size());
  for (const auto& step : window) {
    if (step.size() != cfg.input_width) {
      throw DataError("forward: step width " + std::to_string(step.size()) + " does not match network input width " +
                      std::to_string(cfg.input_width));
    }
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.window = window;
  c.gates.resize(4 * h, steps);
  c.cells.resize(h, steps + 1);
  c.hidden.resize(h, steps + 1);
  c.cell_tanh.resize(h, steps);
  c.cells.col(0).setZero();
  c.hidden.col(0).setZero();

  const ConstViews v(cfg, params.layout(), params.values().data());
  const auto wx = v.lstm_w.leftCols(in);
  const auto wh = v.lstm_w.rightCols(h);
  Eigen::VectorXd z(4 * h);
  for (Eigen::Index s = 0; s < steps; ++s) {
    const ConstVec x(window[static_cast<std::size_t>(s)].data(), in);
    z.noalias() = v.lstm_b;
    z.noalias() += wx * x;
    z.noalias() += wh * c.hidden.col(s);
    auto gate = c.gates.col(s);
    for (Eigen::Index k = 0; k < h; ++k) {
      gate(k) = sigmoid(z(k));                   // input
      gate(h + k) = sigmoid(z(h + k));           // forget
      gate(2 * h + k) = std::tanh(z(2 * h + k)); // candidate
      gate(3 * h + k) = sigmoid(z(3 * h + k));   // output
    }
    c.cells.col(s + 1) = gate.segment(h, h).cwiseProduct(c.cells.col(s)) +
                         gate.segment(0, h).cwiseProduct(gate.segment(2 * h, h));
    c.cell_tanh.col(s) = c.cells.col(s + 1).array().tanh();
    c.hidden.col(s + 1) = gate.segment(3 * h, h).cwiseProduct(c.cell_tanh.col(s));
  }

  c.dense1_pre.noalias() = v.d1_w * c.hidden.col(steps) + v.d1_b;
  c.dense1 = c.dense1_pre.cwiseMax(0.0);
  c.dense2_pre.noalias() = v.d2_w * c.dense1 + v.d2_b;
  c.dense2 = c.dense2_pre.cwiseMax(0.0);
  Eigen::Vector3d logits = v.out_w * c.dense2 + v.out_b;
  const double m = logits.maxCoeff();
  Eigen::Vector3d e = (logits.array() - m).exp();
  c.output = e / e.sum();
  return {c.output(0), c.output(1), c.output(2)};
}

void backward(const NetworkParams& params, const ForwardCache& c, const QOutput& upstream, std::span<double> grad) {
  const NetworkConfig& cfg = params.config();
  if (grad.size() != params.size()) throw UsageError("backward: gradient buffer has wrong size");
  const auto in = static_cast<Eigen::Index>(cfg.input_width);
  const auto h = static_cast<Eigen::Index>(cfg.lstm_hidden);
  const auto steps = static_cast<Eigen::Index>(c.window.size());
  const ConstViews v(cfg, params.layout(), params.values().data());
  MutViews g(cfg, params.layout(), grad.data());

  const Eigen::Vector3d dq(upstream[0], upstream[1], upstream[2]);
  const Eigen::Vector3d dlogits = c.output.cwiseProduct(dq.array().matrix() - Eigen::Vector3d::Constant(c.output.dot(dq)));

  g.out_w.noalias() += dlogits * c.dense2.transpose();
  g.out_b += dlogits;
  Eigen::VectorXd dz2 = v.out_w.transpose() * dlogits;
  dz2 = (c.dense2_pre.array() > 0.0).select(dz2, 0.0);
  g.d2_w.noalias() += dz2 * c.dense1.transpose();
  g.d2_b += dz2;
  Eigen::VectorXd dz1 = v.d2_w.transpose() * dz2;
  dz1 = (c.dense1_pre.array() > 0.0).select(dz1, 0.0);
  g.d1_w.noalias() += dz1 * c.hidden.col(steps).transpose();
  g.d1_b += dz1;

  Eigen::VectorXd dh = v.d1_w.transpose() * dz1;
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dz(4 * h);
  auto gx = g.lstm_w.leftCols(in);
  auto gh = g.lstm_w.rightCols(h);
  const auto wh = v.lstm_w.rightCols(h);
  for (Eigen::Index s = steps - 1; s >= 0; --s) {
    const auto gate = c.gates.col(s);
    const auto tc = c.cell_tanh.col(s);
    for (Eigen::Index k = 0; k < h; ++k) {
      const double i = gate(k);
      const double f = gate(h + k);
      const double gg = gate(2 * h + k);
      const double o = gate(3 * h + k);
      const double t = tc(k);
      const double dck = dc(k) + dh(k) * o * (1.0 - t * t);
      dz(k) = dck * gg * i * (1.0 - i);
      dz(h + k) = dck * c.cells(k, s) * f * (1.0 - f);
      dz(2 * h + k) = dck * i * (1.0 - gg * gg);
      dz(3 * h + k) = dh(k) * t * o * (1.0 - o);
      dc(k) = dck * f;
    }
    const ConstVec x(c.window[static_cast<std::size_t>(s)].data(), in);
    gx.noalias() += dz * x.transpose();
    gh.noalias() += dz * c.hidden.col(s).transpose();
    g.lstm_b += dz;
    dh.noalias() = wh.transpose() * dz;
  }
}

std::vector<double> backward(const NetworkParams& params, std::span<const EncodedStep> window,
                             const QOutput& upstream) {
  ForwardCache cache;
  forward(params, window, &cache);
  std::vector<double> grad(params.size(), 0.0);
  backward(params, cache, upstream, grad);
  return grad;
}

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Reason::Io, "cannot write checkpoint '" + path + "'");
  binary::Writer w(out);
  const NetworkConfig& c = params.config();
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.input_width));
  w.u32(static_cast<std::uint32_t>(c.lstm_hidden));
  w.u32(static_cast<std::uint32_t>(c.dense_widths[0]));
  w.u32(static_cast<std::uint32_t>(c.dense_widths[1]));
  w.u32(static_cast<std::uint32_t>(NetworkConfig::kOutputs));
  w.u32(static_cast<std::uint32_t>(c.max_trace));
  w.u32(static_cast<std::uint32_t>(params.vocabulary().size()));
  for (const auto& n : params.vocabulary().names()) w.str(n);
  for (double m : params.scaler().mean()) w.f64(m);
  for (double s : params.scaler().stddev()) w.f64(s);
  w.u64(params.size());
  for (double x : params.values()) w.f64(x);
  out.flush();
  if (!out) throw CheckpointError(CheckpointError::Reason::Io, "error writing checkpoint '" + path + "'");
}

NetworkParams load_checkpoint(const std::string& path, const ActionVocabulary* expected_vocabulary) {
  using Reason = CheckpointError::Reason;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Reason::Io, "cannot open checkpoint '" + path + "'");
  binary::Reader r(in, path);
  try {
    char magic[sizeof(kCheckpointMagic)];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
      throw CheckpointError(Reason::BadMagic, path + ": not a checkpoint file (bad magic)");
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
      throw CheckpointError(Reason::VersionMismatch, path + ": checkpoint version " + std::to_string(version) +
                                                         ", expected " + std::to_string(kCheckpointVersion));
    }
    NetworkConfig c;
    c.input_width = r.u32();
    c.lstm_hidden = r.u32();
    c.dense_widths[0] = r.u32();
    c.dense_widths[1] = r.u32();
    const auto outputs = r.u32();
    c.max_trace = static_cast<int>(r.u32());
    if (outputs != NetworkConfig::kOutputs) {
      throw CheckpointError(Reason::ShapeMismatch, path + ": output width " + std::to_string(outputs) + " != 3");
    }
    try {
      c.validate();
    } catch (const UsageError& e) {
      throw CheckpointError(Reason::Corrupt, path + ": " + e.what());
    }
    const auto nvocab = r.u32();
    if (nvocab > 100000) throw CheckpointError(Reason::Corrupt, path + ": implausible vocabulary size");
    std::vector<std::string> names;
    for (std::uint32_t i = 0; i < nvocab; ++i) names.push_back(r.str());
    ActionVocabulary vocab(std::move(names));
    if (c.input_width != encoded_width(vocab.size())) {
      throw CheckpointError(Reason::ShapeMismatch, path + ": input width " + std::to_string(c.input_width) +
                                                       " inconsistent with vocabulary of " +
                                                       std::to_string(vocab.size()) + " actions");
    }
    if (expected_vocabulary && expected_vocabulary->size() != vocab.size()) {
      throw CheckpointError(Reason::ShapeMismatch, path + ": checkpoint has " + std::to_string(vocab.size()) +
                                                       " actions, vocabulary file has " +
                                                       std::to_string(expected_vocabulary->size()));
    }
    std::array<double, kNumContinuous> mean{};
    std::array<double, kNumContinuous> stddev{};
    for (auto& m : mean) m = r.f64();
    for (auto& s : stddev) s = r.f64();
    FeatureScaler scaler(mean, stddev);
    const auto count = r.u64();
    NetworkParams p(c, scaler, std::move(vocab));
    if (count != p.size()) {
      throw CheckpointError(Reason::ShapeMismatch, path + ": " + std::to_string(count) +
                                                       " weights stored, config implies " + std::to_string(p.size()));
    }
    for (double& x : p.values()) x = r.f64();
    if (in.peek() != std::char_traits<char>::eof()) {
      throw CheckpointError(Reason::Corrupt, path + ": trailing bytes after weights");
    }
    return p;
  } catch (const binary::TruncatedError& e) {
    throw CheckpointError(Reason::Corrupt, std::string(e.what()) + " (truncated checkpoint)");
  } catch (const CheckpointError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(Reason::Corrupt, path + ": " + e.what());
  }
}

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const NetworkConfig& config, std::uint64_t seed, double tolerance, int trace_length,
                           double epsilon) {
  config.validate();
  if (trace_length < 1) throw UsageError("grad_check: trace length must be >= 1");
  const std::size_t vocab_size = config.input_width > encoded_width(0) ? config.input_width - encoded_width(0) : 0;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < vocab_size; ++i) names.push_back("a" + std::to_string(i));
  NetworkParams params(config, FeatureScaler{}, ActionVocabulary(names));
  {
    NetworkParams init = init_params(config, seed, FeatureScaler{}, params.vocabulary());
    std::copy(init.values().begin(), init.values().end(), params.values().begin());
  }
  Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
  // Perturb biases too so no block is identically zero.
  for (double& x : params.values()) x += 0.1 * rng.normal();

  std::vector<EncodedStep> window(static_cast<std::size_t>(trace_length), EncodedStep(config.input_width));
  for (auto& step : window) {
    for (double& x : step) x = rng.normal();
  }
  const QOutput upstream{rng.normal(), rng.normal(), rng.normal()};
  auto objective = [&](const NetworkParams& p) {
    const QOutput q = forward(p, window);
    return upstream[0] * q[0] + upstream[1] * q[1] + upstream[2] * q[2];
  };

  const std::vector<double> analytic = backward(params, window, upstream);
  GradCheckReport report;
  report.num_params = params.size();
  report.trace_length = trace_length;

  // Every parameter on small nets; a fixed-stride sample of 2000 otherwise.
  const std::size_t stride = std::max<std::size_t>(1, params.size() / 2000);
  for (std::size_t i = 0; i < params.size(); i += stride) {
    double& x = params.values()[i];
    const double saved = x;
    x = saved + epsilon;
    const double plus = objective(params);
    x = saved - epsilon;
    const double minus = objective(params);
    x = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    report.max_relative_error = std::max(report.max_relative_error, gradient_relative_error(analytic[i], numeric));
    report.max_absolute_error = std::max(report.max_absolute_error, std::abs(analytic[i] - numeric));
    ++report.params_checked;
  }
  report.passed = !(report.max_relative_error > tolerance);
  return report;
}

}  // namespace gim
