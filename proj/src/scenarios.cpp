#include "riskgrid/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "riskgrid/errors.hpp"

namespace riskgrid::scenarios {

void NoiseSpec::validate() const {
  if (!(multiplicative_std >= 0 && additive_std >= 0 && level_std >= 0))
    throw ConfigError("noise standard deviations must be non-negative");
  if (!(clamp_min <= clamp_max)) throw ConfigError("noise clamp: min > max");
}

ProfileMatrix generate_ensemble(const Eigen::RowVectorXd& base, const NoiseSpec& noise, int count,
                                std::uint64_t seed) {
  require(count >= 1, "generate_ensemble: count must be >= 1");
  noise.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ProfileMatrix out(count, base.size());
  for (int r = 0; r < count; ++r) {
    const double level = 1.0 + noise.level_std * gauss(rng);
    for (Eigen::Index t = 0; t < base.size(); ++t) {
      const double em = noise.multiplicative_std * gauss(rng);
      const double ea = noise.additive_std * gauss(rng);
      out(r, t) = std::clamp(base(t) * level * (1.0 + em) + ea, noise.clamp_min, noise.clamp_max);
    }
  }
  return out;
}

KMeansResult reduce_kmeans(const ProfileMatrix& ensemble, int k, std::uint64_t seed, int max_iters, double tol) {
  const auto n = static_cast<int>(ensemble.rows());
  require(k >= 1 && k <= n, "reduce_kmeans: k must be in [1, ensemble size]");
  require(max_iters >= 1, "reduce_kmeans: max_iters must be >= 1");

  std::mt19937_64 rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }

  KMeansResult res;
  res.centroids.resize(k, ensemble.cols());
  for (int j = 0; j < k; ++j) res.centroids.row(j) = ensemble.row(order[static_cast<std::size_t>(j)]);
  res.assignment.assign(static_cast<std::size_t>(n), 0);

  Eigen::VectorXd dist(n);
  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    double obj = 0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (ensemble.row(i) - res.centroids.row(j)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      res.assignment[static_cast<std::size_t>(i)] = best;
      dist(i) = best_d;
      obj += best_d;
    }
    res.objective.push_back(obj);

    ProfileMatrix next = ProfileMatrix::Zero(k, ensemble.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      next.row(c) += ensemble.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        next.row(j) /= counts[static_cast<std::size_t>(j)];
      } else {
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        next.row(j) = ensemble.row(far);
        dist(far) = 0;
      }
    }
    const double moved = (next - res.centroids).rowwise().norm().maxCoeff();
    res.centroids = std::move(next);
    if (moved < tol) break;
  }

  // Final assignment against the converged centroids.
  res.probs = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double d = (ensemble.row(i) - res.centroids.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    res.assignment[static_cast<std::size_t>(i)] = best;
    res.probs(best) += 1.0;
  }
  res.probs /= static_cast<double>(n);
  return res;
}

ProfileMatrix parse_profiles_csv(const std::string& text, bool skip_header) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  if (skip_header) std::getline(in, line);
  std::size_t row_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++row_no;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? std::string() : cell.substr(b, e - b + 1);
      double v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError("profile CSV: malformed number '" + cell + "' in row " + std::to_string(row_no), row_no);
      if (v < 0)
        throw ParseError("profile CSV: negative value in row " + std::to_string(row_no), row_no);
      vals.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && vals.size() != rows.front().size())
      throw ParseError("profile CSV: row " + std::to_string(row_no) + " has " + std::to_string(vals.size()) +
                           " columns, expected " + std::to_string(rows.front().size()),
                       row_no);
    rows.push_back(std::move(vals));
  }
  ProfileMatrix out(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

ProfileMatrix load_profiles_csv(const std::string& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile CSV " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profiles_csv(ss.str(), skip_header);
}

void write_profiles_csv(const std::string& path, const ProfileMatrix& profiles) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  char buf[64];
  for (Eigen::Index r = 0; r < profiles.rows(); ++r) {
    for (Eigen::Index c = 0; c < profiles.cols(); ++c) {
      const auto res = std::to_chars(buf, buf + sizeof buf, profiles(r, c));
      if (c) out << ',';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

namespace {

void check_simplex(const Eigen::VectorXd& p, const char* what) {
  if (p.size() == 0) throw ConfigError(std::string(what) + ": empty probability vector");
  if ((p.array() < 0).any() || !p.allFinite()) throw ConfigError(std::string(what) + ": negative probability");
  if (std::abs(p.sum() - 1.0) > 1e-12) throw ConfigError(std::string(what) + ": probabilities do not sum to 1");
}

}  // namespace

void ScenarioSet::validate() const {
  if (pv.rows() != pv_probs.size()) throw ConfigError("scenario set: pv profile/probability count mismatch");
  if (load.rows() != load_probs.size()) throw ConfigError("scenario set: load profile/probability count mismatch");
  if (pv.cols() != load.cols()) throw ConfigError("scenario set: pv and load horizons differ");
  check_simplex(pv_probs, "pv scenarios");
  check_simplex(load_probs, "load scenarios");
  if ((pv.array() < 0).any() || (load.array() < 0).any() || !pv.allFinite() || !load.allFinite())
    throw ConfigError("scenario set: profiles must be finite and non-negative");
}

ScenarioSet ScenarioSet::subset(const std::vector<int>& pv_ids, const std::vector<int>& load_ids) const {
  if (pv_ids.empty() || load_ids.empty()) throw ConfigError("scenario subset: empty id list");
  ScenarioSet s;
  s.pv.resize(static_cast<Eigen::Index>(pv_ids.size()), horizon());
  s.load.resize(static_cast<Eigen::Index>(load_ids.size()), horizon());
  s.pv_probs.resize(static_cast<Eigen::Index>(pv_ids.size()));
  s.load_probs.resize(static_cast<Eigen::Index>(load_ids.size()));
  for (std::size_t i = 0; i < pv_ids.size(); ++i) {
    if (pv_ids[i] < 0 || pv_ids[i] >= pv.rows()) throw ConfigError("scenario subset: pv id out of range");
    s.pv.row(static_cast<Eigen::Index>(i)) = pv.row(pv_ids[i]);
    s.pv_probs(static_cast<Eigen::Index>(i)) = pv_probs(pv_ids[i]);
  }
  for (std::size_t i = 0; i < load_ids.size(); ++i) {
    if (load_ids[i] < 0 || load_ids[i] >= load.rows()) throw ConfigError("scenario subset: load id out of range");
    s.load.row(static_cast<Eigen::Index>(i)) = load.row(load_ids[i]);
    s.load_probs(static_cast<Eigen::Index>(i)) = load_probs(load_ids[i]);
  }
  const double ps = s.pv_probs.sum();
  const double ls = s.load_probs.sum();
  if (!(ps > 0) || !(ls > 0)) throw ConfigError("scenario subset: zero total probability");
  s.pv_probs /= ps;
  s.load_probs /= ls;
  return s;
}

void ScenarioSplit::validate(const ScenarioSet& set) const {
  auto check = [](const std::vector<int>& train, const std::vector<int>& test, Eigen::Index n, const char* what) {
    if (train.empty() || test.empty()) throw ConfigError(std::string(what) + ": train and test ids required");
    std::set<int> seen;
    for (int id : train) {
      if (id < 0 || id >= n) throw ConfigError(std::string(what) + ": id out of range");
      seen.insert(id);
    }
    for (int id : test) {
      if (id < 0 || id >= n) throw ConfigError(std::string(what) + ": id out of range");
      if (seen.contains(id)) throw ConfigError(std::string(what) + ": train and test ids overlap");
    }
  };
  check(train_pv, test_pv, set.pv_count(), "pv split");
  check(train_load, test_load, set.load_count(), "load split");
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + ": expected a non-empty array of rows");
  const auto cols = j.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ConfigError(std::string(what) + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

nlohmann::json to_json(const ScenarioSet& set) {
  return {{"pv_profiles", matrix_to_json(set.pv)},
          {"load_profiles", matrix_to_json(set.load)},
          {"pv_probs", std::vector<double>(set.pv_probs.data(), set.pv_probs.data() + set.pv_probs.size())},
          {"load_probs", std::vector<double>(set.load_probs.data(), set.load_probs.data() + set.load_probs.size())}};
}

ScenarioSet scenario_set_from_json(const nlohmann::json& j) {
  try {
    ScenarioSet s;
    s.pv = matrix_from_json(j.at("pv_profiles"), "pv_profiles");
    s.load = matrix_from_json(j.at("load_profiles"), "load_profiles");
    s.pv_probs = vector_from_json(j.at("pv_probs"), "pv_probs");
    s.load_probs = vector_from_json(j.at("load_probs"), "load_probs");
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario set JSON: ") + e.what());
  }
}

nlohmann::json to_json(const ScenarioSplit& split) {
  return {{"train_pv", split.train_pv},
          {"train_load", split.train_load},
          {"test_pv", split.test_pv},
          {"test_load", split.test_load}};
}

ScenarioSplit scenario_split_from_json(const nlohmann::json& j) {
  try {
    ScenarioSplit s;
    s.train_pv = j.at("train_pv").get<std::vector<int>>();
    s.train_load = j.at("train_load").get<std::vector<int>>();
    s.test_pv = j.at("test_pv").get<std::vector<int>>();
    s.test_load = j.at("test_load").get<std::vector<int>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario split JSON: ") + e.what());
  }
}

Eigen::RowVectorXd default_pv_shape(int horizon, double peak_kw) {
  Eigen::RowVectorXd v(horizon);
  for (int t = 0; t < horizon; ++t) {
    const double h = std::fmod(t, 24.0) + 0.5;
    v(t) = (h > 6.0 && h < 18.0) ? peak_kw * std::pow(std::sin(std::numbers::pi * (h - 6.0) / 12.0), 1.5) : 0.0;
  }
  return v;
}

Eigen::RowVectorXd default_load_shape(int horizon, double base_kw, double evening_peak_kw) {
  Eigen::RowVectorXd v(horizon);
  for (int t = 0; t < horizon; ++t) {
    const double h = std::fmod(t, 24.0) + 0.5;
    const double morning = 0.35 * std::exp(-0.5 * std::pow((h - 8.5) / 1.5, 2));
    const double evening = std::exp(-0.5 * std::pow((h - 19.5) / 1.8, 2));
    v(t) = base_kw + (evening_peak_kw - base_kw) * std::max(morning, evening);
  }
  return v;
}

}  // namespace riskgrid::scenarios
