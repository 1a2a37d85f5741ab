#pragma once

#include <vector>

#include <Eigen/Dense>

#include "platoon/dynamics.hpp"

namespace platoon {

/// Predicted state/input sequences exchanged between vehicles.
///
/// The first `horizon_used` inputs are the optimizer's solution; the rest of
/// the packet is a feedback-law rollout so that receivers can compensate for
/// delayed or lost packets over the full `full_len` window. Followers send
/// sequences in error coordinates; the lead vehicle sends its absolute
/// trajectory. Either way the sequences replay under the nominal model:
/// states[i+1] = A*states[i] + B*inputs[i].
struct BroadcastTrajectory {
  int origin_step = 0;    ///< trigger step the prediction starts at
  int horizon_used = 0;   ///< length of the optimal prefix
  int full_len = 0;       ///< total number of inputs in the packet
  std::vector<Eigen::Vector3d> states;  ///< full_len + 1 entries
  std::vector<double> inputs;           ///< full_len entries

  bool covers(int abs_step) const {
    return abs_step >= origin_step && abs_step <= origin_step + full_len;
  }
};

/// True when replaying `inputs` through the nominal model reproduces
/// `states` within `tol` (max component error).
bool broadcast_replays(const BroadcastTrajectory& bc, const SystemMatrices& m,
                       double tol);

}  // namespace platoon
