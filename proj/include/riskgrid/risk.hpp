#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

#include "riskgrid/errors.hpp"

// Tail risk measures. Losses (higher = worse) use VaR/CVaR over discrete
// distributions; returns (higher = better) use the left-tail mean phi_alpha
// over equally weighted quantile atoms.
namespace riskgrid::risk {

struct DiscreteLossDistribution {
  Eigen::VectorXd values;
  Eigen::VectorXd probs;

  void validate() const;
};

/// Smallest support point z with CDF(z) >= alpha. Cumulative sums are
/// compared with a 1e-12 slack so that e.g. nine atoms of 0.1 reach 0.9.
double var_alpha(const DiscreteLossDistribution& dist, double alpha);

/// VaR + 1/(1 - alpha) * sum_k p_k * max(v_k - VaR, 0).
double cvar_alpha(const DiscreteLossDistribution& dist, double alpha);

/// Joint B*D table of sigma * shed[b][d] weighted p_b * q_d (row-major in b).
DiscreteLossDistribution scenario_loss_table(const Eigen::MatrixXd& shed, const Eigen::VectorXd& pv_probs,
                                             const Eigen::VectorXd& load_probs, double sigma);

struct RiskConfig {
  double alpha = 0.9;
  double sigma = 10.0;

  void validate() const;
};

/// Fixed quantile midpoints (2j - 1) / (2J), j = 1..J.
Eigen::RowVectorXd quantile_levels(Eigen::Index J);

/// J atoms at the midpoint levels with uniform mass 1/J.
struct QuantileDistribution {
  Eigen::RowVectorXd atoms;

  Eigen::Index size() const { return atoms.size(); }
  Eigen::RowVectorXd levels() const { return quantile_levels(atoms.size()); }
};

/// Number of atoms in the left tail: ceil((1 - alpha) J), clamped to [1, J].
inline Eigen::Index tail_count(Eigen::Index J, double alpha) {
  const double raw = (1.0 - alpha) * static_cast<double>(J);
  const auto m = static_cast<Eigen::Index>(std::ceil(raw - 1e-9));
  return std::clamp<Eigen::Index>(m, 1, J);
}

/// Mean of the ceil((1 - alpha) J) lowest atoms.
template <typename Derived>
double phi_alpha(const Eigen::DenseBase<Derived>& atoms, double alpha) {
  require(atoms.size() > 0, "phi_alpha: empty distribution");
  std::vector<double> sorted(static_cast<std::size_t>(atoms.size()));
  for (Eigen::Index i = 0; i < atoms.size(); ++i) sorted[static_cast<std::size_t>(i)] = atoms.derived().coeff(i);
  const auto m = tail_count(static_cast<Eigen::Index>(sorted.size()), alpha);
  std::partial_sort(sorted.begin(), sorted.begin() + m, sorted.end());
  double s = 0;
  for (Eigen::Index k = 0; k < m; ++k) s += sorted[static_cast<std::size_t>(k)];
  return s / static_cast<double>(m);
}

inline double phi_alpha(const QuantileDistribution& q, double alpha) { return phi_alpha(q.atoms, alpha); }

}  // namespace riskgrid::risk
