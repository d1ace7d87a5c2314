#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dftc/plant.hpp"
#include "dftc/types.hpp"

namespace dftc {

enum class Split { Unassigned, Train, Val, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

// Closed-loop record at a fixed sampling interval: times[k] = k*h.
struct Trajectory {
  std::int64_t id = 0;
  double h = 0.01;
  StateSeries states;
  InputSeries inputs;
  StateSeries measurements;  // post-fault sensor readings
  std::optional<FaultSpec> fault;
  Split split = Split::Unassigned;

  Eigen::Index length() const { return states.rows(); }
  double time(Eigen::Index k) const { return static_cast<double>(k) * h; }
  void resize(Eigen::Index n);
  bool operator==(const Trajectory& other) const;
};

}  // namespace dftc
