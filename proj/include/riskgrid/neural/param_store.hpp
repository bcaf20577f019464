#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "riskgrid/neural/tape.hpp"

namespace riskgrid::nn {

/// Named parameters with gradients and adaptive-moment state.
///
/// Iteration order is insertion order, which is also the on-disk order.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix init);
  /// Adds a `rows x cols` parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  std::size_t add_uniform(std::string name, Eigen::Index rows, Eigen::Index cols,
                          Eigen::Index fan_in, std::mt19937_64& rng);

  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Matrix& value(std::size_t i) { return entries_[i].value; }
  const Matrix& value(std::size_t i) const { return entries_[i].value; }
  Matrix& grad(std::size_t i) { return entries_[i].grad; }
  const Matrix& grad(std::size_t i) const { return entries_[i].grad; }
  Matrix& value(std::string_view n) { return value(index(n)); }
  const Matrix& value(std::string_view n) const { return value(index(n)); }

  void zero_grad();
  /// Global L2 norm of all gradients.
  Scalar grad_norm() const;
  /// Rescales gradients so the global norm is at most `max_norm`; returns the
  /// norm before clipping.
  Scalar clip_grad_norm(Scalar max_norm);
  bool grads_finite() const;

  /// Copies values (not moments) from a store with identical names/shapes.
  void copy_values_from(const ParamStore& other);
  bool same_layout(const ParamStore& other) const;
  bool values_equal(const ParamStore& other) const;

  /// Binary container: "RGPARAM1", u64 manifest length, JSON manifest
  /// {"meta": ..., "params": [{"name", "shape"}]}, then little-endian f64
  /// values in manifest order.
  void save(std::ostream& out, const nlohmann::json& meta = nlohmann::json::object()) const;
  static ParamStore load(std::istream& in, nlohmann::json* meta = nullptr);
  void save_file(const std::string& path, const nlohmann::json& meta = nlohmann::json::object()) const;
  static ParamStore load_file(const std::string& path, nlohmann::json* meta = nullptr);

  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;
    Matrix v;
  };
  std::int64_t adam_steps = 0;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> lookup_;

  friend class Adam;
};

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Adaptive-moment update with bias correction. Moments live in the store.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(ParamStore& store) const;
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
};

}  // namespace riskgrid::nn
