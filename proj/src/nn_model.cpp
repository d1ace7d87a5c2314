#include <cmath>
#include <string>

#include "dftc/error.hpp"
#include "dftc/nn.hpp"
#include "dftc/rng.hpp"

namespace dftc::nn {

Architecture Architecture::dftc() { return Architecture{}; }

Architecture Architecture::fnn() {
  Architecture a;
  a.blocks = 0;
  a.hidden = 0;
  a.window = 1;
  return a;
}

void Architecture::validate() const {
  if (channels < 1 || outputs < 1 || window < 1) {
    throw InvalidInput("architecture: channels, outputs and window must be positive");
  }
  if (blocks != 0 && blocks != channels) {
    throw InvalidInput("architecture: one LSTM block per channel is required");
  }
  if (blocks > 0 && hidden < 1) throw InvalidInput("architecture: hidden size must be positive");
  for (int s : fc_sizes) {
    if (s < 1) throw InvalidInput("architecture: FC sizes must be positive");
  }
}

ParamLayout::ParamLayout(const Architecture& arch) {
  arch.validate();
  auto add = [this](std::string name, Eigen::Index rows, Eigen::Index cols, bool weight) {
    slots_.push_back(Slot{std::move(name), rows, cols, size_, weight});
    size_ += rows * cols;
  };
  const int H = arch.hidden;
  for (int j = 0; j < arch.blocks; ++j) {
    const std::string p = "lstm" + std::to_string(j) + ".";
    add(p + "input_weights", 4 * H, 1, true);
    add(p + "recurrent_weights", 4 * H, H, true);
    add(p + "bias", 4 * H, 1, false);
  }
  dense_begin_ = static_cast<int>(slots_.size());
  int fan_in = arch.feature_dim();
  for (std::size_t l = 0; l < arch.fc_sizes.size(); ++l) {
    const std::string p = "fc" + std::to_string(l + 1) + ".";
    add(p + "weight", arch.fc_sizes[l], fan_in, true);
    add(p + "bias", arch.fc_sizes[l], 1, false);
    fan_in = arch.fc_sizes[l];
  }
  add("out.weight", arch.outputs, fan_in, true);
  add("out.bias", arch.outputs, 1, false);
  dense_count_ = static_cast<int>(arch.fc_sizes.size()) + 1;
}

const Slot* ParamLayout::find(const std::string& name) const {
  for (const auto& s : slots_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

ModelParams::ModelParams(const Architecture& a, const Normalizer& n)
    : arch(a), normalizer(n), layout(a), values(layout.size(), 0.0) {
  if ((normalizer.std.array() <= 0).any()) {
    throw InvalidInput("normalizer std entries must be positive");
  }
}

ModelParams init_model(const Architecture& arch, const Normalizer& normalizer,
                       std::uint64_t seed) {
  ModelParams mp(arch, normalizer);
  Rng rng(seed);
  const int H = arch.hidden;
  for (int j = 0; j < arch.blocks; ++j) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    for (const Slot* s : {&mp.layout.lstm_input_weights(j), &mp.layout.lstm_recurrent_weights(j),
                          &mp.layout.lstm_bias(j)}) {
      auto v = mp.view(*s);
      for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = rng.uniform(-bound, bound);
    }
    mp.view(mp.layout.lstm_bias(j)).middleRows(H, H).setZero();
  }
  for (int l = 0; l < mp.layout.dense_count(); ++l) {
    const Slot& w = mp.layout.dense_weight(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
    for (const Slot* s : {&w, &mp.layout.dense_bias(l)}) {
      auto v = mp.view(*s);
      for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) v(r, c) = rng.uniform(-bound, bound);
    }
  }
  return mp;
}

LstmParams::LstmParams(int hidden)
    : input_weights(RowMatrix::Zero(4 * hidden, 1)),
      recurrent_weights(RowMatrix::Zero(4 * hidden, hidden)),
      bias(Eigen::VectorXd::Zero(4 * hidden)) {}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LstmTrace lstm_forward(const Eigen::Ref<const RowMatrix>& wx,
                       const Eigen::Ref<const RowMatrix>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& b,
                       std::span<const double> sequence) {
  const Eigen::Index H = u.cols();
  if (u.rows() != 4 * H || wx.rows() != 4 * H || wx.cols() != 1 || b.size() != 4 * H) {
    throw InvalidInput("lstm_forward: inconsistent weight shapes");
  }
  LstmTrace trace;
  const auto m = static_cast<Eigen::Index>(sequence.size());
  trace.outputs.resize(m, H);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(H);
  Eigen::VectorXd z(4 * H);
  for (Eigen::Index t = 0; t < m; ++t) {
    z.noalias() = wx.col(0) * sequence[t] + b;
    z.noalias() += u * h;
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = sigmoid(z[k]);
      const double fg = sigmoid(z[H + k]);
      const double gg = std::tanh(z[2 * H + k]);
      const double og = sigmoid(z[3 * H + k]);
      c[k] = fg * c[k] + ig * gg;
      h[k] = og * std::tanh(c[k]);
    }
    trace.outputs.row(t) = h.transpose();
  }
  trace.hidden = h;
  trace.cell = c;
  return trace;
}

LstmTrace lstm_forward(const LstmParams& p, std::span<const double> sequence) {
  return lstm_forward(p.input_weights, p.recurrent_weights, p.bias, sequence);
}

namespace {

void check_finite(const Eigen::VectorXd& v, const std::string& layer) {
  if (!v.allFinite()) throw NumericError("non-finite activation in layer " + layer);
}

}  // namespace

ForwardResult model_forward_traced(const ModelParams& mp, const StateSeries& window) {
  const Architecture& a = mp.arch;
  const Eigen::Index m = a.recurrent() ? a.window : 1;
  if (window.rows() < m) throw InvalidInput("model_forward: window too short");
  const StateSeries recent = window.bottomRows(m);
  const StateSeries normalized =
      (recent.rowwise() - mp.normalizer.mean.transpose()).array().rowwise() /
      mp.normalizer.std.transpose().array();

  ForwardResult out;
  if (a.recurrent()) {
    out.features.resize(a.feature_dim());
    std::vector<double> seq(m);
    for (int j = 0; j < a.blocks; ++j) {
      for (Eigen::Index t = 0; t < m; ++t) seq[t] = normalized(t, j);
      const LstmTrace tr =
          lstm_forward(mp.view(mp.layout.lstm_input_weights(j)),
                       mp.view(mp.layout.lstm_recurrent_weights(j)),
                       mp.view(mp.layout.lstm_bias(j)).col(0), seq);
      check_finite(tr.hidden, "lstm" + std::to_string(j));
      out.features.segment(j * a.hidden, a.hidden) = tr.hidden;
    }
  } else {
    out.features = normalized.row(0).transpose();
    check_finite(out.features, "input");
  }

  Eigen::VectorXd act = out.features;
  const int L = mp.layout.dense_count();
  for (int l = 0; l < L; ++l) {
    Eigen::VectorXd z = mp.view(mp.layout.dense_weight(l)) * act;
    z += mp.view(mp.layout.dense_bias(l)).col(0);
    if (l + 1 < L) z = z.cwiseMax(0.0);
    check_finite(z, mp.layout.dense_weight(l).name.substr(0, mp.layout.dense_weight(l).name.find('.')));
    act = std::move(z);
  }
  out.u = act.head<kInputDim>();
  return out;
}

ControlInput model_forward(const ModelParams& mp, const StateSeries& window) {
  return model_forward_traced(mp, window).u;
}

double loss(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& targets) {
  if (preds.cols() == 0) throw InvalidInput("loss: empty batch");
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols()) {
    throw InvalidInput("loss: prediction and target shapes differ");
  }
  return (targets - preds).squaredNorm() / (2.0 * static_cast<double>(preds.cols()));
}

double weight_sum_of_squares(const ModelParams& mp) {
  double sum = 0.0;
  for (const Slot& s : mp.layout.slots()) {
    if (!s.weight) continue;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double v = mp.values[s.offset + i];
      sum += v * v;
    }
  }
  return sum;
}

double regularized_loss(double P, const ModelParams& mp, double lambda, Eigen::Index n) {
  if (lambda < 0) throw InvalidInput("regularization weight must be non-negative");
  if (n < 1) throw InvalidInput("batch size must be positive");
  return P + lambda / (2.0 * static_cast<double>(n)) * weight_sum_of_squares(mp);
}

}  // namespace dftc::nn
