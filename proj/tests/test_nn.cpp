#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dftc/error.hpp"
#include "dftc/nn.hpp"
#include "dftc/rng.hpp"

using namespace dftc;
using namespace dftc::nn;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Normalizer test_normalizer() {
  Normalizer n;
  n.mean << 0.01, -0.02, 0.1, -0.1, 5.0, -3.0;
  n.std << 0.3, 0.25, 2.0, 1.8, 120.0, 90.0;
  return n;
}

Architecture small_arch() {
  Architecture a;
  a.hidden = 3;
  a.window = 4;
  a.fc_sizes = {5, 4};
  return a;
}

StateSeries random_window(Rng& rng, int m, double scale = 1.0) {
  StateSeries w(m, 6);
  const double spread[6] = {0.5, 0.5, 4, 4, 200, 200};
  for (int t = 0; t < m; ++t) {
    for (int c = 0; c < 6; ++c) w(t, c) = scale * rng.uniform(-1, 1) * spread[c];
  }
  return w;
}

std::vector<SampleWindow> random_batch(Rng& rng, int n, int m) {
  std::vector<SampleWindow> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(SampleWindow{random_window(rng, m), ControlInput(rng.uniform(-3, 3), rng.uniform(-3, 3))});
  }
  return out;
}

// Loop-level forward pass written independently of the library kernels.
ControlInput oracle_forward(const ModelParams& mp, const StateSeries& window) {
  const Architecture& a = mp.arch;
  const int H = a.hidden, m = a.window;
  std::vector<double> features;
  const auto& vals = mp.values;
  for (int j = 0; j < a.blocks; ++j) {
    const Slot& sw = mp.layout.lstm_input_weights(j);
    const Slot& su = mp.layout.lstm_recurrent_weights(j);
    const Slot& sb = mp.layout.lstm_bias(j);
    std::vector<double> h(H, 0.0), c(H, 0.0);
    for (int t = 0; t < m; ++t) {
      const double x = (window(window.rows() - m + t, j) - mp.normalizer.mean[j]) / mp.normalizer.std[j];
      std::vector<double> z(4 * H);
      for (int r = 0; r < 4 * H; ++r) {
        double s = vals[sb.offset + r] + vals[sw.offset + r] * x;
        for (int k = 0; k < H; ++k) s += vals[su.offset + r * H + k] * h[k];
        z[r] = s;
      }
      for (int k = 0; k < H; ++k) {
        const double i = sigm(z[k]), f = sigm(z[H + k]), g = std::tanh(z[2 * H + k]),
                     o = sigm(z[3 * H + k]);
        c[k] = f * c[k] + i * g;
        h[k] = o * std::tanh(c[k]);
      }
    }
    features.insert(features.end(), h.begin(), h.end());
  }
  if (a.blocks == 0) {
    for (int ch = 0; ch < 6; ++ch) {
      features.push_back((window(window.rows() - 1, ch) - mp.normalizer.mean[ch]) / mp.normalizer.std[ch]);
    }
  }
  for (int l = 0; l < mp.layout.dense_count(); ++l) {
    const Slot& W = mp.layout.dense_weight(l);
    const Slot& b = mp.layout.dense_bias(l);
    std::vector<double> next(W.rows);
    for (int r = 0; r < W.rows; ++r) {
      double s = vals[b.offset + r];
      for (int k = 0; k < W.cols; ++k) s += vals[W.offset + r * W.cols + k] * features[k];
      next[r] = (l + 1 < mp.layout.dense_count()) ? std::max(0.0, s) : s;
    }
    features = next;
  }
  return ControlInput(features[0], features[1]);
}

double batch_loss(const ModelParams& mp, const PackedBatch& b, double lambda) {
  const Eigen::MatrixXd preds = batch_forward(mp, b.inputs, Execution::Serial);
  return regularized_loss(loss(preds, b.targets), mp, lambda, b.size());
}

// Max relative error between analytic and central-difference gradients.
double gradient_check(ModelParams mp, const PackedBatch& b, double lambda,
                      const std::vector<double>& grad) {
  const double delta = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < mp.values.size(); ++i) {
    const double v = mp.values[i];
    mp.values[i] = v + delta;
    const double up = batch_loss(mp, b, lambda);
    mp.values[i] = v - delta;
    const double down = batch_loss(mp, b, lambda);
    mp.values[i] = v;
    const double fd = (up - down) / (2 * delta);
    const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - grad[i]) / scale);
  }
  return worst;
}

Dataset linear_toy_dataset(int n_traj, int len, std::uint64_t seed, const Eigen::Matrix<double, 2, 6>& M) {
  Dataset ds;
  Rng rng(seed);
  for (int i = 0; i < n_traj; ++i) {
    Trajectory t;
    t.id = i;
    t.resize(len);
    for (int k = 0; k < len; ++k) {
      for (int c = 0; c < 6; ++c) t.states(k, c) = rng.uniform(-1, 1);
    }
    t.measurements = t.states;
    for (int k = 0; k < len; ++k) t.inputs.row(k) = (M * t.states.row(k).transpose()).transpose();
    t.split = i % 10 == 0 ? Split::Val : (i % 10 == 1 ? Split::Test : Split::Train);
    ds.trajectories.push_back(t);
  }
  ds.normalizer = compute_normalizer(ds);
  return ds;
}

}  // namespace

TEST(Lstm, ZeroWeightsGiveZeroOutput) {
  const LstmParams p(8);
  const std::vector<double> seq{0.3, -1.0, 2.0, 0.5};
  const LstmTrace tr = lstm_forward(p, seq);
  EXPECT_EQ(tr.outputs.rows(), 4);
  EXPECT_TRUE((tr.outputs.array() == 0).all());
}

TEST(Lstm, ScalarHandEvaluation) {
  LstmParams p(1);
  p.input_weights.setOnes();
  p.recurrent_weights.setOnes();
  p.bias.setZero();
  const std::vector<double> zero{0.0};
  const LstmTrace a = lstm_forward(p, zero);
  EXPECT_EQ(a.cell[0], 0.0);
  EXPECT_EQ(a.hidden[0], 0.0);
  const std::vector<double> one{1.0};
  const LstmTrace b = lstm_forward(p, one);
  const double c = sigm(1.0) * std::tanh(1.0);
  EXPECT_NEAR(b.cell[0], 0.55677, 1e-5);
  EXPECT_DOUBLE_EQ(b.cell[0], c);
  EXPECT_NEAR(b.hidden[0], sigm(1.0) * std::tanh(c), 1e-15);
}

TEST(Model, ParameterCountAndLayout) {
  const ModelParams mp(Architecture::dftc(), Normalizer{});
  EXPECT_EQ(mp.param_count(), 42754u);
  ASSERT_NE(mp.layout.find("lstm5.recurrent_weights"), nullptr);
  EXPECT_EQ(mp.layout.find("lstm5.recurrent_weights")->rows, 128);
  EXPECT_EQ(mp.layout.find("fc1.weight")->cols, 192);
  EXPECT_EQ(mp.layout.find("out.bias")->size(), 2);
  EXPECT_EQ(ModelParams(Architecture::fnn(), Normalizer{}).param_count(),
            6u * 64 + 64 + 64 * 64 + 64 + 2 * 64 + 2);
}

TEST(Model, ZeroWeightsReturnOutputBias) {
  ModelParams mp(Architecture::dftc(), test_normalizer());
  const Slot& b = *mp.layout.find("out.bias");
  mp.values[b.offset] = 0.7;
  mp.values[b.offset + 1] = -1.1;
  Rng rng(1);
  EXPECT_EQ(model_forward(mp, random_window(rng, 10)), ControlInput(0.7, -1.1));
}

TEST(Model, MatchesLoopOracle) {
  for (const Architecture& a : {Architecture::dftc(), Architecture::fnn(), small_arch()}) {
    const ModelParams mp = init_model(a, test_normalizer(), 42);
    Rng rng(2);
    for (int t = 0; t < 5; ++t) {
      const StateSeries w = random_window(rng, a.window);
      EXPECT_LT((model_forward(mp, w) - oracle_forward(mp, w)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Model, ChannelPermutationSymmetry) {
  const ModelParams mp = init_model(Architecture::dftc(), Normalizer{}, 7);
  ModelParams sw = mp;
  const int a = 1, b = 4, H = 32;
  auto swap_slot = [&](const Slot& x, const Slot& y) {
    std::swap_ranges(sw.values.begin() + x.offset, sw.values.begin() + x.offset + x.size(),
                     sw.values.begin() + y.offset);
  };
  swap_slot(mp.layout.lstm_input_weights(a), mp.layout.lstm_input_weights(b));
  swap_slot(mp.layout.lstm_recurrent_weights(a), mp.layout.lstm_recurrent_weights(b));
  swap_slot(mp.layout.lstm_bias(a), mp.layout.lstm_bias(b));
  MatMap fc1 = sw.view(mp.layout.dense_weight(0));
  for (int k = 0; k < H; ++k) fc1.col(a * H + k).swap(fc1.col(b * H + k));
  Rng rng(3);
  StateSeries w = random_window(rng, 10, 0.01);
  StateSeries ws = w;
  ws.col(a).swap(ws.col(b));
  EXPECT_LT((model_forward(mp, w) - model_forward(sw, ws)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Model, NormalizationConsistency) {
  const ModelParams mp = init_model(Architecture::dftc(), test_normalizer(), 9);
  ModelParams shifted = mp;
  SensorVector a, b;
  a << 2.0, 0.5, 3.0, 1.5, 0.25, 4.0;
  b << 0.1, -1.0, 2.0, 0.0, 50.0, -7.0;
  shifted.normalizer.mean = a.cwiseProduct(mp.normalizer.mean) + b;
  shifted.normalizer.std = a.cwiseProduct(mp.normalizer.std);
  Rng rng(4);
  const StateSeries w = random_window(rng, 10);
  StateSeries w2 = w;
  for (int t = 0; t < 10; ++t) w2.row(t) = (a.cwiseProduct(w.row(t).transpose()) + b).transpose();
  EXPECT_LT((model_forward(mp, w) - model_forward(shifted, w2)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Model, NonFiniteActivationNamesLayer) {
  ModelParams mp = init_model(Architecture::dftc(), Normalizer{}, 1);
  mp.values[mp.layout.find("fc2.bias")->offset] = INFINITY;
  Rng rng(5);
  try {
    model_forward(mp, random_window(rng, 10));
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("fc2"), std::string::npos) << e.what();
  }
}

TEST(Loss, HandValues) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2, 1), t(2, 1);
  t << 1, 2;
  EXPECT_DOUBLE_EQ(loss(p, p), 0.0);
  EXPECT_DOUBLE_EQ(loss(p, t), 2.5);
  Eigen::MatrixXd p2 = Eigen::MatrixXd::Zero(2, 2), t2 = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_DOUBLE_EQ(loss(p2, t2), 0.5);
  EXPECT_THROW(loss(Eigen::MatrixXd(2, 0), Eigen::MatrixXd(2, 0)), InvalidInput);
}

TEST(Loss, Regularization) {
  Architecture tiny;
  tiny.channels = 1;
  tiny.blocks = 0;
  tiny.hidden = 0;
  tiny.window = 1;
  tiny.fc_sizes = {};
  tiny.outputs = 1;
  ModelParams mp(tiny, Normalizer{});
  mp.values = {2.0, 5.0};  // out.weight, out.bias
  EXPECT_DOUBLE_EQ(regularized_loss(0.0, mp, 1.0, 1), 2.0);
  EXPECT_DOUBLE_EQ(regularized_loss(0.3, mp, 0.0, 1), 0.3);

  const ModelParams full = init_model(Architecture::dftc(), Normalizer{}, 3);
  long double ss = 0;
  for (const Slot& s : full.layout.slots()) {
    if (!s.weight) continue;
    for (Eigen::Index i = 0; i < s.size(); ++i) ss += (long double)full.values[s.offset + i] * full.values[s.offset + i];
  }
  EXPECT_NEAR(regularized_loss(1.0, full, 1e-3, 256), 1.0 + 1e-3 / 512.0 * (double)ss, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ModelParams mp = init_model(small_arch(), test_normalizer(), seed);
    Rng rng(seed + 10);
    const PackedBatch b = pack_windows(mp, random_batch(rng, 5, 4));
    std::vector<double> g;
    batch_gradient(mp, b, 1e-2, g, Execution::Serial, 2);
    EXPECT_LT(gradient_check(mp, b, 1e-2, g), 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, FnnMatchesFiniteDifferences) {
  const ModelParams mp = init_model(Architecture::fnn(), test_normalizer(), 4);
  Rng rng(4);
  const PackedBatch b = pack_windows(mp, random_batch(rng, 6, 1));
  std::vector<double> g;
  batch_gradient(mp, b, 1e-3, g);
  EXPECT_LT(gradient_check(mp, b, 1e-3, g), 1e-4);
}

TEST(Gradient, KernelsAgree) {
  const ModelParams mp = init_model(Architecture::dftc(), test_normalizer(), 5);
  Rng rng(6);
  const PackedBatch b = pack_windows(mp, random_batch(rng, 70, 10));
  std::vector<double> serial, parallel, reference;
  const LossValue ls = batch_gradient(mp, b, 1e-3, serial, Execution::Serial, 16);
  const LossValue lp = batch_gradient(mp, b, 1e-3, parallel, Execution::Parallel, 16);
  const LossValue lr = batch_gradient_reference(mp, b, 1e-3, reference);
  EXPECT_EQ(serial, parallel);
  EXPECT_EQ(ls.P_L2, lp.P_L2);
  EXPECT_NEAR(ls.P, lr.P, 1e-12 * lr.P);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < serial.size(); ++i) {
    worst = std::max(worst, std::abs(serial[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  EXPECT_LT(worst, 1e-12 * scale);
}

TEST(Gradient, ZeroAtExactFit) {
  const ModelParams mp = init_model(small_arch(), test_normalizer(), 8);
  Rng rng(8);
  PackedBatch b = pack_windows(mp, random_batch(rng, 4, 4));
  b.targets = batch_forward(mp, b.inputs);
  std::vector<double> g;
  batch_gradient(mp, b, 0.0, g);
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, OutputBiasIsMeanResidual) {
  const ModelParams mp = init_model(Architecture::dftc(), test_normalizer(), 9);
  Rng rng(9);
  const auto windows = random_batch(rng, 8, 10);
  const std::vector<double> g = backward(mp, windows, 1e-3);
  ControlInput mean = ControlInput::Zero();
  for (const auto& w : windows) mean += model_forward(mp, w.window) - w.target;
  mean /= 8.0;
  const Slot& b = *mp.layout.find("out.bias");
  EXPECT_NEAR(g[b.offset], mean[0], 1e-12);
  EXPECT_NEAR(g[b.offset + 1], mean[1], 1e-12);
}

TEST(RmsProp, UpdateRule) {
  RmsPropState st(3);
  std::vector<double> v{1.0, 2.0, 3.0};
  rmsprop_step(st, v, std::vector<double>{0, 0, 0}, 1e-3);
  EXPECT_EQ(v, (std::vector<double>{1.0, 2.0, 3.0}));
  RmsPropState s1(1);
  std::vector<double> w{0.0};
  rmsprop_step(s1, w, std::vector<double>{1.0}, 1e-3);
  EXPECT_NEAR(w[0], -1e-3 / (std::sqrt(0.01) + 1e-8), 1e-15);
  EXPECT_NEAR(w[0], -9.99999e-3, 1e-8);
  Rng rng(1);
  std::vector<double> g(50), p(50, 0.0);
  for (double& x : g) x = rng.normal();
  RmsPropState s2(50);
  rmsprop_step(s2, p, g, 1e-3);
  for (int i = 0; i < 50; ++i) EXPECT_LT(p[i] * g[i], 0.0);
  EXPECT_THROW(rmsprop_step(s2, p, std::vector<double>(3), 1e-3), InvalidInput);
}

TEST(RmsProp, SmallStepsDescend) {
  int ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const ModelParams mp = init_model(small_arch(), test_normalizer(), 100 + t);
    Rng rng(200 + t);
    const PackedBatch b = pack_windows(mp, random_batch(rng, 8, 4));
    std::vector<double> g;
    const LossValue before = batch_gradient(mp, b, 1e-3, g);
    ModelParams next = mp;
    RmsPropState st(mp.values.size());
    rmsprop_step(st, next.values, g, 1e-4);
    ok += batch_loss(next, b, 1e-3) <= before.P_L2 + 1e-9;
  }
  EXPECT_GE(ok, 99);
}

TEST(Training, PackMatchesWindowSamples) {
  Eigen::Matrix<double, 2, 6> M = Eigen::Matrix<double, 2, 6>::Random();
  Dataset ds = linear_toy_dataset(20, 15, 1, M);
  // Refs index the kept trajectories; keep them all.
  for (auto& t : ds.trajectories) t.split = Split::Train;
  const TrainingData td(ds, 10);
  const ModelParams mp(Architecture::dftc(), ds.normalizer);
  const WindowRef ref = td.train()[3];
  const PackedBatch a = td.pack(std::span(&ref, 1));
  const auto w = window_samples(ds.trajectories[ref.traj], 10)[ref.step - 9];
  const PackedBatch b = pack_windows(mp, std::span(&w, 1));
  EXPECT_LT((a.inputs - b.inputs).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(a.targets, b.targets);
}

TEST(Training, ZeroEpochsLeavesModel) {
  Eigen::Matrix<double, 2, 6> M = Eigen::Matrix<double, 2, 6>::Random();
  const Dataset ds = linear_toy_dataset(20, 15, 1, M);
  const ModelParams mp = init_model(Architecture::dftc(), ds.normalizer, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult r = train(mp, TrainingData(ds, 10), cfg);
  EXPECT_EQ(r.model.values, mp.values);
  EXPECT_TRUE(r.curve.empty());
}

TEST(Training, LinearToyTaskConvergesDeterministically) {
  Eigen::Matrix<double, 2, 6> M;
  M << 1.0, -0.5, 0.2, 0.0, 0.3, -0.1, 0.4, 0.8, -0.3, 0.5, 0.0, 0.2;
  const Dataset ds = linear_toy_dataset(60, 20, 3, M);
  Architecture arch = Architecture::dftc();
  arch.hidden = 8;
  const ModelParams init = init_model(arch, ds.normalizer, 5);
  const TrainingData td(ds, arch.window);
  const PackedBatch val = td.pack(td.val());
  const double initial = loss(batch_forward(init, val.inputs), val.targets);

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  cfg.lr_drop_epoch = 30;
  cfg.lr_after_drop = 1e-3;
  cfg.lambda = 0.0;
  cfg.seed = 11;
  const TrainResult a = train(init, td, cfg);
  const TrainResult b = train(init, td, cfg);
  const double final_p = loss(batch_forward(a.model, val.inputs), val.targets);
  EXPECT_LT(final_p, 0.01 * initial) << initial << " -> " << final_p;
  const Eigen::MatrixXd preds = batch_forward(a.model, val.inputs);
  const double mae = (preds - val.targets).cwiseAbs().mean();
  const double range = val.targets.maxCoeff() - val.targets.minCoeff();
  EXPECT_LT(mae, 0.01 * range) << mae << " vs range " << range;
  EXPECT_EQ(a.model.values, b.model.values);
  ASSERT_EQ(a.curve.size(), 50u);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
    EXPECT_EQ(a.curve[i].val_loss, b.curve[i].val_loss);
  }
}

TEST(Training, DivergenceCarriesCoordinates) {
  Eigen::Matrix<double, 2, 6> M = Eigen::Matrix<double, 2, 6>::Ones();
  const Dataset ds = linear_toy_dataset(20, 15, 1, M);
  Architecture arch = small_arch();
  arch.window = 10;
  ModelParams mp = init_model(arch, ds.normalizer, 1);
  mp.values[mp.layout.find("out.weight")->offset] = 1e300;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  try {
    train(mp, TrainingData(ds, 10), cfg);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(Persistence, JsonRoundTripIsBitExact) {
  const ModelParams mp = init_model(Architecture::dftc(), test_normalizer(), 77);
  const std::string text = model_to_json(mp);
  const ModelParams back = model_from_json(text);
  EXPECT_EQ(back.values, mp.values);
  EXPECT_EQ(back.arch, mp.arch);
  EXPECT_EQ(back.normalizer, mp.normalizer);
  Rng rng(1);
  const StateSeries w = random_window(rng, 10);
  EXPECT_EQ(model_forward(mp, w), model_forward(back, w));
  EXPECT_EQ(nlohmann::json::parse(text)["param_count"].get<int>(), 42754);

  const auto path = std::filesystem::temp_directory_path() / "dftc_test_model.json";
  save_model(mp, path);
  EXPECT_EQ(load_model(path).values, mp.values);
  std::filesystem::remove(path);
}

TEST(Persistence, ShapeMismatchIsRejected) {
  const ModelParams mp = init_model(Architecture::dftc(), Normalizer{}, 1);
  nlohmann::json j = nlohmann::json::parse(model_to_json(mp));
  j["arch"]["H"] = 16;
  try {
    model_from_json(j.dump());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos) << e.what();
  }
  nlohmann::json missing = nlohmann::json::parse(model_to_json(mp));
  missing.erase("normalizer");
  EXPECT_THROW(model_from_json(missing.dump()), ParseError);
  EXPECT_THROW(model_from_json("{not json"), ParseError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), IoError);
}
