#pragma once

#include <Eigen/Core>

namespace dftc {

inline constexpr int kStateDim = 6;
inline constexpr int kInputDim = 2;
inline constexpr int kSensorCount = 6;

// x = [theta1 theta2 dtheta1 dtheta2 dphi1 dphi2]; the order is fixed
// everywhere (files, network input, cost weights).
enum StateIndex : int {
  kTheta1 = 0,
  kTheta2 = 1,
  kDTheta1 = 2,
  kDTheta2 = 3,
  kDPhi1 = 4,
  kDPhi2 = 5,
};

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using SensorVector = Eigen::Matrix<double, kSensorCount, 1>;
// Motor currents [i1 i2] in amperes.
using ControlInput = Eigen::Matrix<double, kInputDim, 1>;

using Mat6 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Mat62 = Eigen::Matrix<double, kStateDim, kInputDim>;

// Time series with one sample per row.
using StateSeries = Eigen::Matrix<double, Eigen::Dynamic, kStateDim, Eigen::RowMajor>;
using InputSeries = Eigen::Matrix<double, Eigen::Dynamic, kInputDim, Eigen::RowMajor>;

}  // namespace dftc
