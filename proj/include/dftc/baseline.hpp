#pragma once

#include <Eigen/Core>

#include "dftc/plant.hpp"
#include "dftc/trajectory.hpp"
#include "dftc/types.hpp"

namespace dftc {

// Diagonal quadratic weights of the running cost x'Qx + u'Ru.
struct CostWeights {
  StateVector Q = (StateVector() << 5e4, 5e4, 5e2, 1e2, 1e-2, 1e-2).finished();
  ControlInput R = ControlInput::Constant(1e-5);

  void validate() const;
};

// Discrete-time linearization of the sampled plant at the origin.
struct LinearizedPlant {
  Mat6 A;
  Mat62 B;
  double h = 0.01;
};

// Central-difference Jacobians of the one-step RK4 map at (x, u) = 0.
LinearizedPlant linearize(const PlantParams& params, double h,
                          double delta = 1e-6);

struct LqrGain {
  Eigen::MatrixXd K;  // n_u x n_x
  Eigen::MatrixXd P;  // n_x x n_x
  double residual = 0.0;
  double spectral_radius = 0.0;
  int iterations = 0;
};

// Fixed-point iteration of the discrete Riccati recursion
//   P <- Q + A'PA - A'PB (R + B'PB)^-1 B'PA
// until the largest elementwise change, relative to max(1, |P|_inf), drops
// below tol. The reported residual uses the same relative scaling.
// Throws NonConvergenceError after max_iter sweeps and InstabilityError if
// A - BK is not Schur stable.
LqrGain solve_riccati(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                      const Eigen::VectorXd& Q, const Eigen::VectorXd& R,
                      double tol = 1e-12, int max_iter = 1'000'000);

LqrGain solve_riccati(const LinearizedPlant& lin, const CostWeights& w,
                      double tol = 1e-12, int max_iter = 1'000'000);

// Relative Riccati residual |P - Ric(P)|_inf / max(1, |P|_inf).
double riccati_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        const Eigen::MatrixXd& P);

// u = sat(-K x).
ControlInput baseline_policy(const LqrGain& gain, const StateVector& x,
                             double i_max);

// Rectangle-rule sum of (x'Qx + u'Ru) h over every sample.
double trajectory_cost(const Trajectory& traj, const CostWeights& w);
double trajectory_cost(const StateSeries& states, const InputSeries& inputs,
                       double h, const CostWeights& w);

// Baseline gain for the plant sampled at h.
LqrGain design_baseline(const PlantParams& params, const CostWeights& w,
                        double h, double tol = 1e-12,
                        int max_iter = 1'000'000);

}  // namespace dftc
