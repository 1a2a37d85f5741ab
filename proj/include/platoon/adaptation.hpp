#pragma once

#include "platoon/controller.hpp"
#include "platoon/terminal.hpp"

namespace platoon {

enum class HorizonRule {
  PaperMin,  ///< literal min over the four terms
  ProseMax,  ///< lower-bound reading: max of the terms, capped at N0
};

/// Tuning for the state-deviation weight updates and the horizon update
/// scheme.
struct AdaptationConfig {
  double q0 = 10.0;  ///< state weight baseline, small-deviation branch
  double r0 = 1.0;   ///< input weight baseline, small-deviation branch
  double q1 = 12.0;  ///< state weight, large-deviation branch
  double r1 = 5.0;   ///< input weight baseline, large-deviation branch
  int shape_b = 1;   ///< exponent shaping the small-deviation decrement
  int shape_c = 1;   ///< exponent shaping the large-deviation decrement
  double deviation_allowance = 0.3;  ///< allowable deviation, units of ||.||_P
  double weight_floor = 0.1;         ///< minimum admissible q and r
  int initial_horizon = 30;          ///< N0
  HorizonRule rule = HorizonRule::PaperMin;
  double target_level = 0.0;  ///< convergence-term level; 0 -> terminal epsilon

  void validate() const;
};

/// Deviation-driven weight schedule. Ratio below one trades tracking for
/// smoothness (q drops from q0); at or above one the input weight drops
/// from r1 instead. Both results are clamped at weight_floor and
/// q_coop = 0.5*q.
CostWeights update_weights(double deviation_ratio,
                           const AdaptationConfig& config);

/// Smallest prediction index whose state is inside the terminal level set
/// {||x||_P <= epsilon}, scanning i in [0, N-1]; N when none qualifies.
int optimal_horizon(const OcpSolution& solution,
                    const TerminalIngredients& ing, int horizon);

/// Horizon for the next trigger. With `reset` the horizon re-initializes to
/// N0 (reference jump / state outside the terminal set). Otherwise combines
/// the optimal horizon, the shift term N^s + k^s - k^{s+1} + 1, the
/// level-set convergence term, and the outage bound, per the configured
/// rule, clamped to [1, N0].
int update_horizon(int optimal, int prev_horizon, int prev_trigger,
                   int new_trigger, const TerminalIngredients& ing,
                   const CostWeights& weights, int outage_bound,
                   const AdaptationConfig& config, bool reset);

}  // namespace platoon
