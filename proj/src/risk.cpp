#include "riskgrid/risk.hpp"

#include <numeric>

namespace riskgrid::risk {

void DiscreteLossDistribution::validate() const {
  require(values.size() > 0, "loss distribution: empty");
  require(values.size() == probs.size(), "loss distribution: values/probs length mismatch");
  require((probs.array() >= 0).all(), "loss distribution: negative probability");
  require(std::abs(probs.sum() - 1.0) <= 1e-12, "loss distribution: probabilities must sum to 1");
  require(values.allFinite(), "loss distribution: non-finite value");
}

void RiskConfig::validate() const {
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("risk: alpha must lie in (0, 1)");
  if (!(sigma >= 0)) throw ConfigError("risk: sigma must be non-negative");
}

double var_alpha(const DiscreteLossDistribution& dist, double alpha) {
  dist.validate();
  require(alpha > 0 && alpha < 1, "var_alpha: alpha must lie in (0, 1)");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dist.values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return dist.values(a) < dist.values(b); });
  double cdf = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double v = dist.values(order[k]);
    cdf += dist.probs(order[k]);
    // Merge ties so the CDF is evaluated at distinct support points.
    if (k + 1 < order.size() && dist.values(order[k + 1]) == v) continue;
    if (cdf >= alpha - 1e-12) return v;
  }
  return dist.values(order.back());
}

double cvar_alpha(const DiscreteLossDistribution& dist, double alpha) {
  const double var = var_alpha(dist, alpha);
  double tail = 0;
  for (Eigen::Index k = 0; k < dist.values.size(); ++k) tail += dist.probs(k) * std::max(dist.values(k) - var, 0.0);
  return var + tail / (1.0 - alpha);
}

DiscreteLossDistribution scenario_loss_table(const Eigen::MatrixXd& shed, const Eigen::VectorXd& pv_probs,
                                             const Eigen::VectorXd& load_probs, double sigma) {
  require(shed.rows() == pv_probs.size() && shed.cols() == load_probs.size(),
          "scenario_loss_table: shape does not match probability lengths");
  DiscreteLossDistribution d;
  d.values.resize(shed.size());
  d.probs.resize(shed.size());
  Eigen::Index k = 0;
  for (Eigen::Index b = 0; b < shed.rows(); ++b)
    for (Eigen::Index j = 0; j < shed.cols(); ++j, ++k) {
      d.values(k) = sigma * shed(b, j);
      d.probs(k) = pv_probs(b) * load_probs(j);
    }
  // Renormalize away rounding in the product so validate() holds at 1e-12.
  d.probs /= d.probs.sum();
  return d;
}

Eigen::RowVectorXd quantile_levels(Eigen::Index J) {
  require(J >= 1, "quantile_levels: J must be >= 1");
  Eigen::RowVectorXd v(J);
  for (Eigen::Index j = 0; j < J; ++j) v(j) = (2.0 * static_cast<double>(j) + 1.0) / (2.0 * static_cast<double>(J));
  return v;
}

}  // namespace riskgrid::risk
