#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

// Scenario generation for PV output and load demand: Monte-Carlo ensembles
// around a base profile, reduced to weighted representatives with k-means.
// Profiles are stored one per row (count x T).
namespace riskgrid::scenarios {

using ProfileMatrix = Eigen::MatrixXd;

struct NoiseSpec {
  double multiplicative_std = 0.0;  ///< per-step relative noise
  double additive_std = 0.0;        ///< per-step absolute noise, kW
  double level_std = 0.0;           ///< one relative factor shared by a whole profile
  double clamp_min = 0.0;
  double clamp_max = std::numeric_limits<double>::infinity();

  void validate() const;
};

/// value_t = clamp(base_t * (1 + e_level) * (1 + e_t) + a_t) with independent
/// Gaussian draws; identical seeds give identical ensembles.
ProfileMatrix generate_ensemble(const Eigen::RowVectorXd& base, const NoiseSpec& noise, int count,
                                std::uint64_t seed);

struct KMeansResult {
  ProfileMatrix centroids;       ///< k x T
  Eigen::VectorXd probs;         ///< cluster shares, sums to 1
  std::vector<int> assignment;   ///< cluster of each input row
  std::vector<double> objective;  ///< sum of squared distances after each assignment step
  int iterations = 0;
};

/// Lloyd's algorithm on profiles as T-dimensional points. Initial centroids
/// are k distinct rows drawn uniformly with `seed`. An empty cluster is
/// re-seeded at the point farthest from its current centroid.
KMeansResult reduce_kmeans(const ProfileMatrix& ensemble, int k, std::uint64_t seed, int max_iters = 100,
                           double tol = 1e-6);

/// One profile per line, comma separated. Throws ParseError naming the
/// 1-based data row on malformed numbers, negative values or ragged rows.
ProfileMatrix load_profiles_csv(const std::string& path, bool skip_header = false);
ProfileMatrix parse_profiles_csv(const std::string& text, bool skip_header = false);
void write_profiles_csv(const std::string& path, const ProfileMatrix& profiles);

struct ScenarioSet {
  ProfileMatrix pv;          ///< B x T, kW
  ProfileMatrix load;        ///< D x T, kW
  Eigen::VectorXd pv_probs;  ///< length B
  Eigen::VectorXd load_probs;

  Eigen::Index horizon() const { return pv.cols(); }
  Eigen::Index pv_count() const { return pv.rows(); }
  Eigen::Index load_count() const { return load.rows(); }
  void validate() const;
  /// Sub-grid with probabilities renormalized inside the chosen ids.
  ScenarioSet subset(const std::vector<int>& pv_ids, const std::vector<int>& load_ids) const;
};

/// Train/test partition of scenario ids; the two sides never share an id.
struct ScenarioSplit {
  std::vector<int> train_pv, train_load;
  std::vector<int> test_pv, test_load;

  void validate(const ScenarioSet& set) const;
};

nlohmann::json to_json(const ScenarioSet& set);
ScenarioSet scenario_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioSplit& split);
ScenarioSplit scenario_split_from_json(const nlohmann::json& j);

/// Synthetic daily shapes (kW) used when no historical CSV is supplied.
Eigen::RowVectorXd default_pv_shape(int horizon, double peak_kw);
Eigen::RowVectorXd default_load_shape(int horizon, double base_kw, double evening_peak_kw);

}  // namespace riskgrid::scenarios
