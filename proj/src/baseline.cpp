#include "dftc/baseline.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "dftc/error.hpp"

namespace dftc {

void CostWeights::validate() const {
  if ((Q.array() < 0).any() || !Q.allFinite()) {
    throw InvalidInput("state weights must be finite and non-negative");
  }
  if ((R.array() <= 0).any() || !R.allFinite()) {
    throw InvalidInput("input weights must be finite and positive");
  }
}

LinearizedPlant linearize(const PlantParams& params, double h, double delta) {
  LinearizedPlant lin;
  lin.h = h;
  const StateVector x0 = StateVector::Zero();
  const ControlInput u0 = ControlInput::Zero();
  for (int j = 0; j < kStateDim; ++j) {
    StateVector dx = StateVector::Zero();
    dx[j] = delta;
    lin.A.col(j) = (step_rk4(params, x0 + dx, u0, h) - step_rk4(params, x0 - dx, u0, h)) /
                   (2.0 * delta);
  }
  for (int j = 0; j < kInputDim; ++j) {
    ControlInput du = ControlInput::Zero();
    du[j] = delta;
    lin.B.col(j) = (step_rk4(params, x0, u0 + du, h) - step_rk4(params, x0, u0 - du, h)) /
                   (2.0 * delta);
  }
  return lin;
}

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

Eigen::MatrixXd riccati_map(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                            const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                            const Eigen::MatrixXd& P, Eigen::MatrixXd* K) {
  const Eigen::MatrixXd PA = P * A;
  const Eigen::MatrixXd PB = P * B;
  const Eigen::MatrixXd S = R + B.transpose() * PB;
  Eigen::MatrixXd gain = S.ldlt().solve(B.transpose() * PA);
  Eigen::MatrixXd next = Q + A.transpose() * PA - (A.transpose() * PB) * gain;
  next = 0.5 * (next + next.transpose()).eval();
  if (K != nullptr) *K = std::move(gain);
  return next;
}

}  // namespace

double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd next = riccati_map(A, B, Q, R, P, nullptr);
  return max_abs(P - next) / std::max(1.0, max_abs(P));
}

LqrGain solve_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                      const Eigen::VectorXd& Qd, const Eigen::VectorXd& Rd,
                      double tol, int max_iter) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Qd.size() != n || Rd.size() != B.cols()) {
    throw InvalidInput("solve_riccati: inconsistent dimensions");
  }
  const Eigen::MatrixXd Q = Qd.asDiagonal();
  const Eigen::MatrixXd R = Rd.asDiagonal();

  LqrGain out;
  Eigen::MatrixXd P = Q;
  double change = std::numeric_limits<double>::infinity();
  int it = 0;
  while (it < max_iter) {
    Eigen::MatrixXd next = riccati_map(A, B, Q, R, P, nullptr);
    change = max_abs(next - P) / std::max(1.0, max_abs(next));
    P = std::move(next);
    ++it;
    if (!P.allFinite()) {
      throw NonConvergenceError("solve_riccati: iterate diverged after " + std::to_string(it) +
                                    " iterations",
                                change);
    }
    if (change < tol) break;
  }
  if (!(change < tol)) {
    std::ostringstream os;
    os << "solve_riccati: no convergence after " << max_iter << " iterations (change "
       << change << ")";
    throw NonConvergenceError(os.str(), change);
  }
  riccati_map(A, B, Q, R, P, &out.K);
  out.P = P;
  out.iterations = it;
  out.residual = riccati_residual(A, B, Q, R, P);
  const Eigen::MatrixXd closed = A - B * out.K;
  out.spectral_radius = closed.eigenvalues().cwiseAbs().maxCoeff();
  if (!(out.spectral_radius < 1.0)) {
    std::ostringstream os;
    os << "solve_riccati: closed loop not stable (spectral radius " << out.spectral_radius
       << ")";
    throw InstabilityError(os.str());
  }
  return out;
}

LqrGain solve_riccati(const LinearizedPlant& lin, const CostWeights& w, double tol,
                      int max_iter) {
  w.validate();
  return solve_riccati(lin.A, lin.B, w.Q, w.R, tol, max_iter);
}

ControlInput baseline_policy(const LqrGain& gain, const StateVector& x, double i_max) {
  const ControlInput u = -gain.K * x;
  return u.cwiseMax(-i_max).cwiseMin(i_max);
}

double trajectory_cost(const StateSeries& states, const InputSeries& inputs, double h,
                       const CostWeights& w) {
  if (states.rows() == 0) throw InvalidInput("trajectory_cost: empty trajectory");
  if (inputs.rows() != states.rows()) {
    throw InvalidInput("trajectory_cost: state and input lengths differ");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < states.rows(); ++k) {
    double stage = 0.0;
    for (int i = 0; i < kStateDim; ++i) stage += w.Q[i] * states(k, i) * states(k, i);
    for (int i = 0; i < kInputDim; ++i) stage += w.R[i] * inputs(k, i) * inputs(k, i);
    total += stage * h;
  }
  return total;
}

double trajectory_cost(const Trajectory& traj, const CostWeights& w) {
  return trajectory_cost(traj.states, traj.inputs, traj.h, w);
}

LqrGain design_baseline(const PlantParams& params, const CostWeights& w, double h,
                        double tol, int max_iter) {
  params.validate();
  return solve_riccati(linearize(params, h), w, tol, max_iter);
}

}  // namespace dftc
