#include "dftc/trajectory.hpp"

#include "dftc/error.hpp"

namespace dftc {

std::string to_string(Split split) {
  switch (split) {
    case Split::Unassigned:
      return "";
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "";
}

Split split_from_string(const std::string& s) {
  if (s.empty()) return Split::Unassigned;
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidInput("unknown split '" + s + "'");
}

void Trajectory::resize(Eigen::Index n) {
  states.resize(n, kStateDim);
  inputs.resize(n, kInputDim);
  measurements.resize(n, kSensorCount);
}

bool Trajectory::operator==(const Trajectory& o) const {
  return id == o.id && h == o.h && fault == o.fault && split == o.split &&
         states.rows() == o.states.rows() && states == o.states &&
         inputs.rows() == o.inputs.rows() && inputs == o.inputs &&
         measurements.rows() == o.measurements.rows() &&
         measurements == o.measurements;
}

}  // namespace dftc
