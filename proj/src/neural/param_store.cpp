#include "riskgrid/neural/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "riskgrid/errors.hpp"

namespace riskgrid::nn {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'P', 'A', 'R', 'A', 'M', '1'};

static_assert(std::endian::native == std::endian::little,
              "ParamStore serialization assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError("param container: truncated header");
  return v;
}

}  // namespace

std::size_t ParamStore::add(std::string name, Matrix init) {
  require(!lookup_.contains(name), "ParamStore::add: duplicate parameter name");
  Entry e;
  e.name = name;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.m = Matrix::Zero(init.rows(), init.cols());
  e.v = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  lookup_.emplace(std::move(name), entries_.size() - 1);
  return entries_.size() - 1;
}

std::size_t ParamStore::add_uniform(std::string name, Eigen::Index rows, Eigen::Index cols,
                                    Eigen::Index fan_in, std::mt19937_64& rng) {
  const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<Scalar> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return add(std::move(name), std::move(m));
}

std::size_t ParamStore::index(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw ContractViolation("ParamStore: unknown parameter " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return lookup_.contains(std::string(name)); }

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

Scalar ParamStore::grad_norm() const {
  Scalar sq = 0;
  for (const auto& e : entries_) sq += e.grad.squaredNorm();
  return std::sqrt(sq);
}

Scalar ParamStore::clip_grad_norm(Scalar max_norm) {
  const Scalar norm = grad_norm();
  if (norm > max_norm && norm > 0) {
    const Scalar s = max_norm / norm;
    for (auto& e : entries_) e.grad *= s;
  }
  return norm;
}

bool ParamStore::grads_finite() const {
  for (const auto& e : entries_)
    if (!e.grad.allFinite()) return false;
  return true;
}

bool ParamStore::same_layout(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
      return false;
  }
  return true;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (!same_layout(other)) throw ConsistencyError("ParamStore: layout mismatch on copy");
  for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].value = other.entries_[i].value;
}

bool ParamStore::values_equal(const ParamStore& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i].value;
    const auto& b = other.entries_[i].value;
    if (std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) != 0)
      return false;
  }
  return true;
}

void ParamStore::save(std::ostream& out, const nlohmann::json& meta) const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["params"] = nlohmann::json::array();
  for (const auto& e : entries_)
    manifest["params"].push_back({{"name", e.name}, {"shape", {e.value.rows(), e.value.cols()}}});
  const std::string text = manifest.dump();
  out.write(kMagic, sizeof kMagic);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries_)
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(e.value.size())));
  if (!out) throw std::runtime_error("param container: write failed");
}

ParamStore ParamStore::load(std::istream& in, nlohmann::json* meta) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ParseError("param container: bad magic");
  const std::uint64_t len = read_u64(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("param container: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("param container: bad manifest: ") + e.what());
  }
  ParamStore store;
  for (const auto& p : manifest.at("params")) {
    const auto rows = p.at("shape").at(0).get<Eigen::Index>();
    const auto cols = p.at("shape").at(1).get<Eigen::Index>();
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(m.size())));
    if (!in) throw ParseError("param container: truncated data");
    store.add(p.at("name").get<std::string>(), std::move(m));
  }
  if (meta) *meta = manifest.value("meta", nlohmann::json::object());
  return store;
}

void ParamStore::save_file(const std::string& path, const nlohmann::json& meta) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save(out, meta);
}

ParamStore ParamStore::load_file(const std::string& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return load(in, meta);
}

void Adam::step(ParamStore& store) const {
  ++store.adam_steps;
  const auto t = static_cast<Scalar>(store.adam_steps);
  const Scalar c1 = 1.0 - std::pow(cfg_.beta1, t);
  const Scalar c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (auto& e : store.entries_) {
    e.m = cfg_.beta1 * e.m + (1.0 - cfg_.beta1) * e.grad;
    e.v = cfg_.beta2 * e.v + (1.0 - cfg_.beta2) * e.grad.cwiseAbs2();
    e.value.array() -= cfg_.lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + cfg_.eps);
  }
}

}  // namespace riskgrid::nn
