#include <cmath>
#include <exception>
#include <string>

#include "dftc/error.hpp"
#include "dftc/nn.hpp"

namespace dftc::nn {

namespace {

using Mat = Eigen::MatrixXd;
using Arr = Eigen::ArrayXXd;

// Vectorized through Eigen's packet exp.
void sigmoid_inplace(Eigen::Ref<Mat> z) {
  z = (1.0 + (-z.array()).exp()).inverse().matrix();
}

void tanh_inplace(Eigen::Ref<Mat> z) {
  z = (2.0 * (1.0 + (-2.0 * z.array()).exp()).inverse() - 1.0).matrix();
}

// Activations of one LSTM block over a chunk, kept for the backward sweep.
struct BlockTape {
  std::vector<Mat> gates;  // 4H x n per step, activated [i f g o]
  std::vector<Mat> cell;   // H x n per step
  std::vector<Mat> tanh_cell;
  std::vector<Mat> hidden;
};

struct ChunkTape {
  std::vector<BlockTape> blocks;
  Mat features;
  std::vector<Mat> pre;   // dense pre-activations
  std::vector<Mat> post;  // dense outputs (ReLU except the last)
};

void forward_chunk(const ModelParams& mp, const Eigen::Ref<const Mat>& x, ChunkTape& tape,
                   bool keep_tape) {
  const Architecture& a = mp.arch;
  const Eigen::Index n = x.cols();
  const int H = a.hidden;
  const int m = a.window;
  if (a.recurrent()) {
    tape.features.resize(a.feature_dim(), n);
    tape.blocks.resize(keep_tape ? a.blocks : 0);
    Mat h(H, n), c(H, n), z(4 * H, n), tc(H, n);
    for (int j = 0; j < a.blocks; ++j) {
      const auto wx = mp.view(mp.layout.lstm_input_weights(j));
      const auto U = mp.view(mp.layout.lstm_recurrent_weights(j));
      const auto b = mp.view(mp.layout.lstm_bias(j)).col(0);
      h.setZero();
      c.setZero();
      if (keep_tape) {
        auto& bt = tape.blocks[j];
        bt.gates.resize(m);
        bt.cell.resize(m);
        bt.tanh_cell.resize(m);
        bt.hidden.resize(m);
      }
      for (int t = 0; t < m; ++t) {
        z.noalias() = wx.col(0) * x.row(j * m + t);
        z.colwise() += b;
        z.noalias() += U * h;
        sigmoid_inplace(z.topRows(2 * H));
        tanh_inplace(z.middleRows(2 * H, H));
        sigmoid_inplace(z.bottomRows(H));
        c.array() = z.middleRows(H, H).array() * c.array() +
                    z.topRows(H).array() * z.middleRows(2 * H, H).array();
        tc = c;
        tanh_inplace(tc);
        h.array() = z.bottomRows(H).array() * tc.array();
        if (keep_tape) {
          auto& bt = tape.blocks[j];
          bt.gates[t] = z;
          bt.cell[t] = c;
          bt.tanh_cell[t] = tc;
          bt.hidden[t] = h;
        }
      }
      tape.features.middleRows(j * H, H) = h;
    }
  } else {
    tape.features = x;
  }
  const int L = mp.layout.dense_count();
  tape.pre.resize(L);
  tape.post.resize(L);
  const Mat* act = &tape.features;
  for (int l = 0; l < L; ++l) {
    tape.pre[l].noalias() = mp.view(mp.layout.dense_weight(l)) * (*act);
    tape.pre[l].colwise() += mp.view(mp.layout.dense_bias(l)).col(0);
    tape.post[l] = (l + 1 < L) ? Mat(tape.pre[l].cwiseMax(0.0)) : tape.pre[l];
    act = &tape.post[l];
  }
}

// Accumulates the unscaled gradient of 1/2 sum |v|^2 over the chunk into g
// and returns the chunk's sum of squared residuals.
double backward_chunk(const ModelParams& mp, const Eigen::Ref<const Mat>& x,
                      const Eigen::Ref<const Mat>& targets, std::vector<double>& g) {
  ChunkTape tape;
  forward_chunk(mp, x, tape, true);
  const Architecture& a = mp.arch;
  const ParamLayout& lay = mp.layout;
  const int L = lay.dense_count();
  const int H = a.hidden;
  const int m = a.window;
  auto gview = [&g](const Slot& s) { return MatMap(g.data() + s.offset, s.rows, s.cols); };

  Mat delta = tape.post[L - 1] - targets;  // -(target - pred)
  const double sumsq = delta.squaredNorm();
  for (int l = L - 1; l >= 0; --l) {
    const Mat& input = (l == 0) ? tape.features : tape.post[l - 1];
    gview(lay.dense_weight(l)).noalias() += delta * input.transpose();
    gview(lay.dense_bias(l)).col(0) += delta.rowwise().sum();
    Mat up = mp.view(lay.dense_weight(l)).transpose() * delta;
    if (l > 0) {
      up.array() *= (tape.pre[l - 1].array() > 0.0).cast<double>();
    }
    delta = std::move(up);
  }
  if (!a.recurrent()) return sumsq;

  const Eigen::Index n = x.cols();
  Mat dh(H, n), dc(H, n), dz(4 * H, n);
  for (int j = 0; j < a.blocks; ++j) {
    const BlockTape& bt = tape.blocks[j];
    const auto U = mp.view(lay.lstm_recurrent_weights(j));
    auto gwx = gview(lay.lstm_input_weights(j));
    auto gU = gview(lay.lstm_recurrent_weights(j));
    auto gb = gview(lay.lstm_bias(j));
    dh = delta.middleRows(j * H, H);
    dc.setZero();
    for (int t = m - 1; t >= 0; --t) {
      const auto gi = bt.gates[t].topRows(H).array();
      const auto gf = bt.gates[t].middleRows(H, H).array();
      const auto gg = bt.gates[t].middleRows(2 * H, H).array();
      const auto go = bt.gates[t].bottomRows(H).array();
      const auto tc = bt.tanh_cell[t].array();
      dc.array() += dh.array() * go * (1.0 - tc * tc);
      dz.topRows(H).array() = dc.array() * gg * gi * (1.0 - gi);
      if (t > 0) {
        dz.middleRows(H, H).array() = dc.array() * bt.cell[t - 1].array() * gf * (1.0 - gf);
      } else {
        dz.middleRows(H, H).setZero();
      }
      dz.middleRows(2 * H, H).array() = dc.array() * gi * (1.0 - gg * gg);
      dz.bottomRows(H).array() = dh.array() * tc * go * (1.0 - go);

      gwx.col(0).noalias() += dz * x.row(j * m + t).transpose();
      if (t > 0) gU.noalias() += dz * bt.hidden[t - 1].transpose();
      gb.col(0) += dz.rowwise().sum();
      if (t > 0) {
        dh.noalias() = U.transpose() * dz;
        dc.array() *= gf;
      }
    }
  }
  return sumsq;
}

void finish_gradient(const ModelParams& mp, double lambda, Eigen::Index n,
                     std::vector<double>& grad) {
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : grad) v *= inv_n;
  if (lambda != 0.0) {
    for (const Slot& s : mp.layout.slots()) {
      if (!s.weight) continue;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        grad[s.offset + i] += lambda * mp.values[s.offset + i] * inv_n;
      }
    }
  }
  for (double v : grad) {
    if (!std::isfinite(v)) throw NumericError("non-finite gradient");
  }
}

LossValue make_loss(const ModelParams& mp, double sumsq, double lambda, Eigen::Index n) {
  LossValue lv;
  lv.P = sumsq / (2.0 * static_cast<double>(n));
  lv.P_L2 = regularized_loss(lv.P, mp, lambda, n);
  return lv;
}

void check_batch(const ModelParams& mp, const PackedBatch& batch) {
  if (batch.size() == 0) throw InvalidInput("empty batch");
  const Eigen::Index rows = static_cast<Eigen::Index>(mp.arch.channels) *
                            (mp.arch.recurrent() ? mp.arch.window : 1);
  if (batch.inputs.rows() != rows || batch.targets.rows() != mp.arch.outputs ||
      batch.targets.cols() != batch.size()) {
    throw InvalidInput("packed batch does not match the architecture");
  }
}

}  // namespace

PackedBatch pack_windows(const ModelParams& mp, std::span<const SampleWindow> windows) {
  const Architecture& a = mp.arch;
  const int m = a.recurrent() ? a.window : 1;
  PackedBatch b;
  b.inputs.resize(static_cast<Eigen::Index>(a.channels) * m, windows.size());
  b.targets.resize(a.outputs, windows.size());
  for (std::size_t s = 0; s < windows.size(); ++s) {
    const StateSeries& w = windows[s].window;
    if (w.rows() < m) throw InvalidInput("pack_windows: window too short");
    const Eigen::Index first = w.rows() - m;
    for (int c = 0; c < a.channels; ++c) {
      for (int t = 0; t < m; ++t) {
        b.inputs(c * m + t, s) = (w(first + t, c) - mp.normalizer.mean[c]) / mp.normalizer.std[c];
      }
    }
    b.targets.col(s) = windows[s].target;
  }
  return b;
}

Eigen::MatrixXd batch_forward(const ModelParams& mp, const Eigen::MatrixXd& inputs,
                              Execution exec, Eigen::Index chunk) {
  const Eigen::Index n = inputs.cols();
  Eigen::MatrixXd out(mp.arch.outputs, n);
  const Eigen::Index chunks = (n + chunk - 1) / chunk;
  auto run = [&](Eigen::Index k) {
    const Eigen::Index s = k * chunk;
    const Eigen::Index len = std::min(chunk, n - s);
    ChunkTape tape;
    forward_chunk(mp, inputs.middleCols(s, len), tape, false);
    out.middleCols(s, len) = tape.post.back();
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < chunks; ++k) run(k);
  } else {
    for (Eigen::Index k = 0; k < chunks; ++k) run(k);
  }
  return out;
}

LossValue batch_gradient(const ModelParams& mp, const PackedBatch& batch, double lambda,
                         std::vector<double>& grad, Execution exec, Eigen::Index chunk) {
  check_batch(mp, batch);
  if (chunk < 1) throw InvalidInput("chunk size must be positive");
  const Eigen::Index n = batch.size();
  const Eigen::Index chunks = (n + chunk - 1) / chunk;
  const std::size_t P = mp.values.size();
  std::vector<std::vector<double>> partial(chunks, std::vector<double>(P, 0.0));
  std::vector<double> sumsq(chunks, 0.0);
  std::vector<std::exception_ptr> errors(chunks);

  auto run = [&](Eigen::Index k) {
    try {
      const Eigen::Index s = k * chunk;
      const Eigen::Index len = std::min(chunk, n - s);
      sumsq[k] = backward_chunk(mp, batch.inputs.middleCols(s, len),
                                batch.targets.middleCols(s, len), partial[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index k = 0; k < chunks; ++k) run(k);
  } else {
    for (Eigen::Index k = 0; k < chunks; ++k) run(k);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  grad.assign(P, 0.0);
  double total = 0.0;
  for (Eigen::Index k = 0; k < chunks; ++k) {
    total += sumsq[k];
    for (std::size_t i = 0; i < P; ++i) grad[i] += partial[k][i];
  }
  finish_gradient(mp, lambda, n, grad);
  const LossValue lv = make_loss(mp, total, lambda, n);
  if (!std::isfinite(lv.P_L2)) throw NumericError("non-finite loss");
  return lv;
}

LossValue batch_gradient_reference(const ModelParams& mp, const PackedBatch& batch,
                                   double lambda, std::vector<double>& grad) {
  check_batch(mp, batch);
  const Architecture& a = mp.arch;
  const ParamLayout& lay = mp.layout;
  const Eigen::Index n = batch.size();
  const int H = a.hidden;
  const int m = a.window;
  const int F = a.feature_dim();
  const int L = lay.dense_count();
  const double* V = mp.values.data();
  grad.assign(mp.values.size(), 0.0);
  double* G = grad.data();
  double total = 0.0;

  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };

  for (Eigen::Index s = 0; s < n; ++s) {
    const double* x = batch.inputs.col(s).data();
    std::vector<double> feat(F);
    // [block][t][k]: gates (4H), cell, hidden
    std::vector<std::vector<std::vector<double>>> gates(a.blocks), cell(a.blocks), hid(a.blocks);
    for (int j = 0; j < a.blocks; ++j) {
      const Slot& sw = lay.lstm_input_weights(j);
      const Slot& su = lay.lstm_recurrent_weights(j);
      const Slot& sb = lay.lstm_bias(j);
      std::vector<double> h(H, 0.0), c(H, 0.0);
      for (int t = 0; t < m; ++t) {
        const double xt = x[j * m + t];
        std::vector<double> z(4 * H);
        for (int r = 0; r < 4 * H; ++r) {
          double acc = V[sw.offset + r] * xt + V[sb.offset + r];
          for (int k = 0; k < H; ++k) acc += V[su.offset + r * H + k] * h[k];
          z[r] = acc;
        }
        std::vector<double> act(4 * H);
        for (int k = 0; k < H; ++k) {
          act[k] = sig(z[k]);
          act[H + k] = sig(z[H + k]);
          act[2 * H + k] = std::tanh(z[2 * H + k]);
          act[3 * H + k] = sig(z[3 * H + k]);
          c[k] = act[H + k] * c[k] + act[k] * act[2 * H + k];
          h[k] = act[3 * H + k] * std::tanh(c[k]);
        }
        gates[j].push_back(act);
        cell[j].push_back(c);
        hid[j].push_back(h);
      }
      for (int k = 0; k < H; ++k) feat[j * H + k] = h[k];
    }
    if (!a.recurrent()) {
      for (int c = 0; c < F; ++c) feat[c] = x[c];
    }

    std::vector<std::vector<double>> pre(L), post(L);
    const std::vector<double>* in = &feat;
    for (int l = 0; l < L; ++l) {
      const Slot& sw = lay.dense_weight(l);
      const Slot& sb = lay.dense_bias(l);
      pre[l].assign(sw.rows, 0.0);
      post[l].assign(sw.rows, 0.0);
      for (Eigen::Index r = 0; r < sw.rows; ++r) {
        double acc = V[sb.offset + r];
        for (Eigen::Index k = 0; k < sw.cols; ++k) acc += V[sw.offset + r * sw.cols + k] * (*in)[k];
        pre[l][r] = acc;
        post[l][r] = (l + 1 < L) ? std::max(acc, 0.0) : acc;
      }
      in = &post[l];
    }

    std::vector<double> delta(a.outputs);
    for (int o = 0; o < a.outputs; ++o) {
      delta[o] = post[L - 1][o] - batch.targets(o, s);
      total += delta[o] * delta[o];
    }
    for (int l = L - 1; l >= 0; --l) {
      const Slot& sw = lay.dense_weight(l);
      const Slot& sb = lay.dense_bias(l);
      const std::vector<double>& input = (l == 0) ? feat : post[l - 1];
      std::vector<double> up(sw.cols, 0.0);
      for (Eigen::Index r = 0; r < sw.rows; ++r) {
        G[sb.offset + r] += delta[r];
        for (Eigen::Index k = 0; k < sw.cols; ++k) {
          G[sw.offset + r * sw.cols + k] += delta[r] * input[k];
          up[k] += V[sw.offset + r * sw.cols + k] * delta[r];
        }
      }
      if (l > 0) {
        for (Eigen::Index k = 0; k < sw.cols; ++k) up[k] = pre[l - 1][k] > 0.0 ? up[k] : 0.0;
      }
      delta = std::move(up);
    }

    for (int j = 0; j < a.blocks; ++j) {
      const Slot& sw = lay.lstm_input_weights(j);
      const Slot& su = lay.lstm_recurrent_weights(j);
      const Slot& sb = lay.lstm_bias(j);
      std::vector<double> dh(delta.begin() + j * H, delta.begin() + (j + 1) * H);
      std::vector<double> dc(H, 0.0), dz(4 * H);
      for (int t = m - 1; t >= 0; --t) {
        const auto& act = gates[j][t];
        for (int k = 0; k < H; ++k) {
          const double ig = act[k], fg = act[H + k], gg = act[2 * H + k], og = act[3 * H + k];
          const double tc = std::tanh(cell[j][t][k]);
          const double c_prev = t > 0 ? cell[j][t - 1][k] : 0.0;
          dc[k] += dh[k] * og * (1.0 - tc * tc);
          dz[k] = dc[k] * gg * ig * (1.0 - ig);
          dz[H + k] = dc[k] * c_prev * fg * (1.0 - fg);
          dz[2 * H + k] = dc[k] * ig * (1.0 - gg * gg);
          dz[3 * H + k] = dh[k] * tc * og * (1.0 - og);
          dc[k] *= fg;
        }
        const double xt = x[j * m + t];
        for (int r = 0; r < 4 * H; ++r) {
          G[sw.offset + r] += dz[r] * xt;
          G[sb.offset + r] += dz[r];
          if (t > 0) {
            for (int k = 0; k < H; ++k) G[su.offset + r * H + k] += dz[r] * hid[j][t - 1][k];
          }
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int r = 0; r < 4 * H; ++r) {
          for (int k = 0; k < H; ++k) dh[k] += V[su.offset + r * H + k] * dz[r];
        }
      }
    }
  }
  finish_gradient(mp, lambda, n, grad);
  return make_loss(mp, total, lambda, n);
}

std::vector<double> backward(const ModelParams& mp, std::span<const SampleWindow> batch,
                             double lambda) {
  std::vector<double> grad;
  batch_gradient(mp, pack_windows(mp, batch), lambda, grad);
  return grad;
}

void rmsprop_step(RmsPropState& state, std::span<double> params, std::span<const double> grads,
                  double lr, const RmsPropConfig& cfg) {
  if (state.mean_square.size() != params.size() || grads.size() != params.size()) {
    throw InvalidInput("rmsprop_step: size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& s = state.mean_square[i];
    s = cfg.decay * s + (1.0 - cfg.decay) * grads[i] * grads[i];
    params[i] -= lr * grads[i] / (std::sqrt(s) + cfg.eps);
  }
}

}  // namespace dftc::nn
