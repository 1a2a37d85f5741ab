#include "platoon/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace platoon {

void AdaptationConfig::validate() const {
  if (!(weight_floor > 0.0))
    throw std::invalid_argument("adaptation: weight_floor must be > 0");
  if (!(q0 > weight_floor && r0 > weight_floor && q1 > weight_floor &&
        r1 > weight_floor))
    throw std::invalid_argument("adaptation: baselines must exceed the floor");
  if (shape_b < 1 || shape_c < 1)
    throw std::invalid_argument("adaptation: shape exponents must be >= 1");
  if (!(deviation_allowance > 0.0))
    throw std::invalid_argument("adaptation: deviation_allowance must be > 0");
  if (initial_horizon < 1)
    throw std::invalid_argument("adaptation: initial_horizon must be >= 1");
  if (target_level < 0.0)
    throw std::invalid_argument("adaptation: target_level must be >= 0");
}

CostWeights update_weights(double deviation_ratio,
                           const AdaptationConfig& config) {
  double q, r;
  if (deviation_ratio < 1.0) {
    q = config.q0 - std::exp(static_cast<double>(config.shape_b)) * deviation_ratio;
    r = config.r0;
  } else {
    q = config.q1;
    r = config.r1 - std::exp(static_cast<double>(config.shape_c)) * deviation_ratio;
  }
  q = std::max(q, config.weight_floor);
  r = std::max(r, config.weight_floor);
  return CostWeights::from_q_r(q, r);
}

int optimal_horizon(const OcpSolution& solution,
                    const TerminalIngredients& ing, int horizon) {
  for (int i = 0; i < horizon; ++i) {
    if (ing.p_norm(solution.states[i]) <= ing.epsilon) return i;
  }
  return horizon;
}

int update_horizon(int optimal, int prev_horizon, int prev_trigger,
                   int new_trigger, const TerminalIngredients& ing,
                   const CostWeights& weights, int outage_bound,
                   const AdaptationConfig& config, bool reset) {
  if (reset) return config.initial_horizon;

  const double shift_term =
      static_cast<double>(prev_horizon + prev_trigger - new_trigger + 1);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> esp(ing.P);
  const Eigen::Matrix3d decrease =
      weights.q * Eigen::Matrix3d::Identity() +
      weights.r * ing.K.transpose() * ing.K;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> esd(decrease);
  const double level =
      config.target_level > 0.0 ? config.target_level : ing.epsilon;
  const double convergence_term =
      esp.eigenvalues().minCoeff() *
          (ing.gamma * ing.gamma - ing.epsilon * ing.epsilon) /
          (esd.eigenvalues().maxCoeff() * level * level) +
      1.0;

  double value;
  if (config.rule == HorizonRule::PaperMin) {
    value = std::min({static_cast<double>(optimal), shift_term,
                      convergence_term, static_cast<double>(outage_bound)});
  } else {
    value = std::min(static_cast<double>(config.initial_horizon),
                     std::max({static_cast<double>(optimal), shift_term,
                               convergence_term,
                               static_cast<double>(outage_bound)}));
  }
  const int n = static_cast<int>(std::ceil(value - 1e-12));
  return std::clamp(n, 1, config.initial_horizon);
}

}  // namespace platoon
