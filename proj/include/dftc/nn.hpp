#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dftc/dataset.hpp"
#include "dftc/parallel.hpp"

namespace dftc::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Recurrent model: one single-layer LSTM block per sensor channel, final
// hidden states concatenated, then ReLU FC layers and a linear output.
// With blocks == 0 the normalized channels feed the FC head directly.
struct Architecture {
  int channels = 6;
  int blocks = 6;
  int hidden = 32;
  int window = 10;
  std::vector<int> fc_sizes{64, 64};
  int outputs = 2;

  static Architecture dftc();
  static Architecture fnn();

  bool recurrent() const { return blocks > 0; }
  int feature_dim() const { return recurrent() ? blocks * hidden : channels; }
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

// Named slice of the flat parameter buffer, stored row-major.
struct Slot {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index offset = 0;
  bool weight = true;  // biases are excluded from L2

  Eigen::Index size() const { return rows * cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const Architecture& arch);

  const std::vector<Slot>& slots() const { return slots_; }
  Eigen::Index size() const { return size_; }
  const Slot* find(const std::string& name) const;

  // Gate blocks of each LSTM are ordered [input, forget, cell, output].
  const Slot& lstm_input_weights(int block) const { return slots_[3 * block]; }
  const Slot& lstm_recurrent_weights(int block) const { return slots_[3 * block + 1]; }
  const Slot& lstm_bias(int block) const { return slots_[3 * block + 2]; }
  // Dense layers: fc1, fc2, ..., out.
  int dense_count() const { return dense_count_; }
  const Slot& dense_weight(int layer) const { return slots_[dense_begin_ + 2 * layer]; }
  const Slot& dense_bias(int layer) const { return slots_[dense_begin_ + 2 * layer + 1]; }

 private:
  std::vector<Slot> slots_;
  Eigen::Index size_ = 0;
  int dense_begin_ = 0;
  int dense_count_ = 0;
};

struct ModelParams {
  Architecture arch;
  Normalizer normalizer;
  ParamLayout layout;
  std::vector<double> values;

  ModelParams() = default;
  ModelParams(const Architecture& a, const Normalizer& n);

  ConstMatMap view(const Slot& s) const {
    return ConstMatMap(values.data() + s.offset, s.rows, s.cols);
  }
  MatMap view(const Slot& s) { return MatMap(values.data() + s.offset, s.rows, s.cols); }
  std::size_t param_count() const { return values.size(); }
};

// Uniform +-1/sqrt(fan_in) per layer (fan_in = H for LSTM blocks), forget
// gate bias zero.
ModelParams init_model(const Architecture& arch, const Normalizer& normalizer,
                       std::uint64_t seed);

// Owning weights of one LSTM block with scalar input.
struct LstmParams {
  RowMatrix input_weights;      // 4H x 1
  RowMatrix recurrent_weights;  // 4H x H
  Eigen::VectorXd bias;         // 4H

  explicit LstmParams(int hidden = 32);
  int hidden() const { return static_cast<int>(recurrent_weights.cols()); }
};

struct LstmTrace {
  RowMatrix outputs;  // m x H hidden states
  Eigen::VectorXd hidden;
  Eigen::VectorXd cell;
};

// h0 = c0 = 0; i, f, o = sigmoid, g = tanh; c = f*c + i*g; h = o*tanh(c).
LstmTrace lstm_forward(const Eigen::Ref<const RowMatrix>& input_weights,
                       const Eigen::Ref<const RowMatrix>& recurrent_weights,
                       const Eigen::Ref<const Eigen::VectorXd>& bias,
                       std::span<const double> sequence);
LstmTrace lstm_forward(const LstmParams& p, std::span<const double> sequence);

struct ForwardResult {
  ControlInput u;
  Eigen::VectorXd features;  // concatenated block outputs (or normalized input)
};

// window: m rows of raw measurements, oldest first (one row for FNN).
// Throws NumericError naming the layer on a non-finite activation.
ForwardResult model_forward_traced(const ModelParams& mp, const StateSeries& window);
ControlInput model_forward(const ModelParams& mp, const StateSeries& window);

struct LossValue {
  double P = 0.0;
  double P_L2 = 0.0;
};

// P = 1/(2n) sum |target - pred|^2; columns are samples.
double loss(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& targets);

double weight_sum_of_squares(const ModelParams& mp);

// P + lambda/(2n) * sum of squared weights (biases excluded).
double regularized_loss(double P, const ModelParams& mp, double lambda,
                        Eigen::Index n);

// Normalized network inputs, one column per sample. Row c*window + t holds
// channel c at window step t.
struct PackedBatch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;  // outputs x n

  Eigen::Index size() const { return inputs.cols(); }
};

PackedBatch pack_windows(const ModelParams& mp, std::span<const SampleWindow> windows);

Eigen::MatrixXd batch_forward(const ModelParams& mp, const Eigen::MatrixXd& inputs,
                              Execution exec = Execution::Parallel,
                              Eigen::Index chunk = 32);

// Exact gradient of P_L2 by reverse-mode BPTT. Batched GEMM kernel over
// fixed-size chunks, chunk results reduced in chunk order.
LossValue batch_gradient(const ModelParams& mp, const PackedBatch& batch,
                         double lambda, std::vector<double>& grad,
                         Execution exec = Execution::Parallel,
                         Eigen::Index chunk = 32);

// Per-sample scalar-loop reference of batch_gradient.
LossValue batch_gradient_reference(const ModelParams& mp, const PackedBatch& batch,
                                   double lambda, std::vector<double>& grad);

// Gradient for a list of windows; same layout as mp.values.
std::vector<double> backward(const ModelParams& mp,
                             std::span<const SampleWindow> batch, double lambda);

struct RmsPropConfig {
  double decay = 0.99;
  double eps = 1e-8;
};

struct RmsPropState {
  std::vector<double> mean_square;

  explicit RmsPropState(std::size_t n = 0) : mean_square(n, 0.0) {}
};

// s <- decay*s + (1-decay)*g^2;  v <- v - lr*g/(sqrt(s) + eps).
void rmsprop_step(RmsPropState& state, std::span<double> params,
                  std::span<const double> grads, double lr,
                  const RmsPropConfig& cfg = {});

struct TrainConfig {
  int epochs = 200;
  Eigen::Index batch_size = 1024;
  double lr = 1e-3;
  int lr_drop_epoch = 100;  // epochs after this one use lr_after_drop
  double lr_after_drop = 5e-4;
  double lambda = 1e-3;
  double rms_decay = 0.99;
  double rms_eps = 1e-8;
  std::uint64_t seed = 0;
  // Random subset of training windows visited per epoch; 0 means all.
  std::int64_t samples_per_epoch = 0;
  // Fixed subset of validation windows; 0 means all.
  std::int64_t val_samples = 0;
  Eigen::Index chunk_size = 32;

  void validate() const;
};

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct WindowRef {
  std::int32_t traj = 0;
  std::int32_t step = 0;  // final row of the window
};

// Normalized measurement windows drawn from a split dataset.
class TrainingData {
 public:
  // fault_free_only keeps only trajectories without a fault.
  TrainingData(const Dataset& ds, int window, bool fault_free_only = false);

  const std::vector<WindowRef>& train() const { return train_; }
  const std::vector<WindowRef>& val() const { return val_; }
  const Normalizer& normalizer() const { return normalizer_; }
  int window() const { return window_; }

  PackedBatch pack(std::span<const WindowRef> refs) const;

 private:
  int window_;
  Normalizer normalizer_;
  std::vector<StateSeries> normalized_;
  std::vector<InputSeries> targets_;
  std::vector<WindowRef> train_;
  std::vector<WindowRef> val_;
};

struct TrainResult {
  ModelParams model;
  std::vector<CurvePoint> curve;
};

using EpochCallback = std::function<void(const CurvePoint&)>;

// Throws NumericError with epoch and batch coordinates on a non-finite loss.
TrainResult train(const ModelParams& init, const TrainingData& data,
                  const TrainConfig& cfg, Execution exec = Execution::Parallel,
                  const EpochCallback& on_epoch = {});

void save_model(const ModelParams& mp, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);
std::string model_to_json(const ModelParams& mp);
ModelParams model_from_json(const std::string& text);

void save_curve(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace dftc::nn
