#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dftc/error.hpp"
#include "dftc/nn.hpp"
#include "dftc/rng.hpp"

namespace dftc::nn {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidInput("epochs must be non-negative");
  if (batch_size < 1) throw InvalidInput("batch size must be positive");
  if (!(lr > 0) || !(lr_after_drop > 0)) throw InvalidInput("learning rates must be positive");
  if (lr_drop_epoch < 0) throw InvalidInput("lr drop epoch must be non-negative");
  if (!(lambda >= 0)) throw InvalidInput("lambda must be non-negative");
  if (!(rms_decay > 0 && rms_decay < 1)) throw InvalidInput("rmsprop decay must be in (0, 1)");
  if (!(rms_eps > 0)) throw InvalidInput("rmsprop epsilon must be positive");
  if (samples_per_epoch < 0 || val_samples < 0) {
    throw InvalidInput("sample caps must be non-negative");
  }
  if (chunk_size < 1) throw InvalidInput("chunk size must be positive");
}

TrainingData::TrainingData(const Dataset& ds, int window, bool fault_free_only)
    : window_(window), normalizer_(ds.normalizer) {
  if (window < 1) throw InvalidInput("window must be positive");
  for (const auto& t : ds.trajectories) {
    if (fault_free_only && t.fault) continue;
    if (t.split != Split::Train && t.split != Split::Val) continue;
    if (t.length() < window) continue;
    const auto idx = static_cast<std::int32_t>(normalized_.size());
    normalized_.push_back((t.measurements.rowwise() - normalizer_.mean.transpose()).array().rowwise() /
                          normalizer_.std.transpose().array());
    targets_.push_back(t.inputs);
    auto& refs = t.split == Split::Train ? train_ : val_;
    for (Eigen::Index k = window - 1; k < t.length(); ++k) {
      refs.push_back(WindowRef{idx, static_cast<std::int32_t>(k)});
    }
  }
}

PackedBatch TrainingData::pack(std::span<const WindowRef> refs) const {
  PackedBatch b;
  const int m = window_;
  b.inputs.resize(static_cast<Eigen::Index>(kSensorCount) * m, refs.size());
  b.targets.resize(kInputDim, refs.size());
  for (std::size_t s = 0; s < refs.size(); ++s) {
    const StateSeries& y = normalized_[refs[s].traj];
    const Eigen::Index first = refs[s].step - m + 1;
    double* col = b.inputs.col(s).data();
    for (int c = 0; c < kSensorCount; ++c) {
      for (int t = 0; t < m; ++t) col[c * m + t] = y(first + t, c);
    }
    b.targets.col(s) = targets_[refs[s].traj].row(refs[s].step).transpose();
  }
  return b;
}

TrainResult train(const ModelParams& init, const TrainingData& data, const TrainConfig& cfg,
                  Execution exec, const EpochCallback& on_epoch) {
  cfg.validate();
  const int expected_window = init.arch.recurrent() ? init.arch.window : 1;
  if (data.window() != expected_window) {
    throw InvalidInput("training windows do not match the architecture");
  }
  if (init.arch.channels != kSensorCount || init.arch.outputs != kInputDim) {
    throw InvalidInput("training expects six sensor channels and two outputs");
  }
  if (!(init.normalizer == data.normalizer())) {
    throw InvalidInput("model normalizer differs from the dataset normalizer");
  }

  TrainResult result{init, {}};
  ModelParams& mp = result.model;
  if (cfg.epochs == 0) return result;
  if (data.train().empty()) throw InvalidInput("no training windows");

  std::vector<WindowRef> val_refs;
  const auto& val = data.val();
  if (cfg.val_samples > 0 && static_cast<std::size_t>(cfg.val_samples) < val.size()) {
    for (std::int64_t i = 0; i < cfg.val_samples; ++i) {
      val_refs.push_back(val[static_cast<std::size_t>(i) * val.size() / cfg.val_samples]);
    }
  } else {
    val_refs = val;
  }
  const PackedBatch val_batch = data.pack(val_refs);

  RmsPropState state(mp.values.size());
  const RmsPropConfig rms{cfg.rms_decay, cfg.rms_eps};
  Rng rng(cfg.seed);
  std::vector<WindowRef> order = data.train();
  const auto per_epoch =
      (cfg.samples_per_epoch > 0 && static_cast<std::size_t>(cfg.samples_per_epoch) < order.size())
          ? static_cast<std::size_t>(cfg.samples_per_epoch)
          : order.size();
  std::vector<double> grad;

  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = e < cfg.lr_drop_epoch ? cfg.lr : cfg.lr_after_drop;
    // Partial Fisher-Yates: the first per_epoch entries are a uniform sample.
    for (std::size_t i = 0; i < per_epoch; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<long>(i), static_cast<long>(order.size() - 1)));
      std::swap(order[i], order[j]);
    }
    double weighted = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t s = 0; s < per_epoch; s += cfg.batch_size, ++batch_index) {
      const std::size_t len = std::min<std::size_t>(cfg.batch_size, per_epoch - s);
      const PackedBatch batch = data.pack(std::span(order).subspan(s, len));
      LossValue lv;
      try {
        lv = batch_gradient(mp, batch, cfg.lambda, grad, exec, cfg.chunk_size);
      } catch (const NumericError& err) {
        std::ostringstream os;
        os << "training diverged at epoch " << e + 1 << ", batch " << batch_index << ": "
           << err.what();
        throw NumericError(os.str());
      }
      rmsprop_step(state, mp.values, grad, lr, rms);
      weighted += lv.P_L2 * static_cast<double>(len);
    }
    CurvePoint pt;
    pt.epoch = e + 1;
    pt.train_loss = weighted / static_cast<double>(per_epoch);
    if (val_batch.size() > 0) {
      const Eigen::MatrixXd preds = batch_forward(mp, val_batch.inputs, exec, cfg.chunk_size);
      pt.val_loss = regularized_loss(loss(preds, val_batch.targets), mp, cfg.lambda, cfg.batch_size);
    } else {
      pt.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(pt.train_loss) ||
        (val_batch.size() > 0 && !std::isfinite(pt.val_loss))) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << e + 1;
      throw NumericError(os.str());
    }
    result.curve.push_back(pt);
    if (on_epoch) on_epoch(pt);
  }
  return result;
}

void save_curve(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write learning curve " + path.string());
  os << "epoch,train_loss,val_loss\n";
  for (const auto& p : curve) {
    os << p.epoch << ',' << format_double(p.train_loss) << ',' << format_double(p.val_loss)
       << '\n';
  }
  if (!os) throw IoError("failed writing learning curve " + path.string());
}

}  // namespace dftc::nn
