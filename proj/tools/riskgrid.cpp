#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "riskgrid/config.hpp"
#include "riskgrid/errors.hpp"
#include "riskgrid/scenarios.hpp"
#include "riskgrid/shapley.hpp"
#include "riskgrid/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace riskgrid;

namespace {

enum Exit { kOk = 0, kFailure = 1, kInput = 2, kConsistency = 3, kNumerical = 4 };

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

int eval_threads() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RISKGRID_THREADS")) {
    int cap = 0;
    const std::string_view s(env);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec != std::errc() || p != s.data() + s.size() || cap < 1)
      throw ConfigError("RISKGRID_THREADS must be a positive integer");
    return std::min(cap, static_cast<int>(hw));
  }
  return static_cast<int>(hw);
}

struct CommonFlags {
  std::string config;
  bool paper_scale = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> alpha;
  std::optional<int> episodes;
  std::string out;
};

config::RunConfig resolve(const CommonFlags& f) {
  const auto base = f.paper_scale ? config::paper_scale_config() : config::desk_config();
  config::RunConfig cfg = f.config.empty() ? base : config::load_config(f.config, base);
  json overlay = json::object();
  if (f.seed) overlay["training"]["seed"] = *f.seed;
  if (f.variant) overlay["training"]["variant"] = *f.variant;
  if (f.episodes) overlay["training"]["episodes"] = *f.episodes;
  if (f.alpha) overlay["risk"]["alpha"] = *f.alpha;
  if (!f.out.empty()) overlay["output"] = f.out;
  return config::parse_config(overlay, cfg);
}

void print_family(const char* name, const Eigen::VectorXd& probs) {
  std::cout << name << ": " << probs.size() << " scenarios, probs";
  for (Eigen::Index i = 0; i < probs.size(); ++i) std::cout << ' ' << num(probs(i));
  std::cout << '\n';
}

int cmd_scen_gen(const CommonFlags& f, const std::string& kind, int count, std::optional<double> noise) {
  auto cfg = resolve(f);
  if (f.out.empty()) throw ConfigError("scen gen: --out is required");
  const auto& sc = cfg.scenarios;
  const int T = cfg.system.horizon;
  Eigen::RowVectorXd base;
  scenarios::NoiseSpec spec;
  if (kind == "pv") {
    base = scenarios::default_pv_shape(T, sc.pv_peak_kw);
    spec = sc.pv_noise;
  } else if (kind == "load") {
    base = scenarios::default_load_shape(T, sc.load_base_kw, sc.load_evening_peak_kw);
    spec = sc.load_noise;
  } else {
    throw ConfigError("scen gen: --kind must be pv or load");
  }
  if (noise) spec.multiplicative_std = spec.level_std = *noise, spec.additive_std = 0;
  const std::uint64_t seed = f.seed.value_or(sc.seed);
  const auto ens = scenarios::generate_ensemble(base, spec, count, seed);
  scenarios::write_profiles_csv(f.out, ens);
  std::cout << "wrote " << ens.rows() << " " << kind << " profiles of length " << ens.cols() << " to " << f.out
            << '\n';
  return kOk;
}

int cmd_scen_reduce(const CommonFlags& f, const std::string& input, const std::string& pv, const std::string& load,
                    int k, bool header) {
  if (f.out.empty()) throw ConfigError("scen reduce: --out is required");
  const std::uint64_t seed = f.seed.value_or(7);
  auto reduce = [&](const std::string& path, std::uint64_t s) {
    const auto ens = scenarios::load_profiles_csv(path, header);
    if (ens.rows() < k) throw ConfigError("scen reduce: " + path + " has fewer profiles than --k");
    return scenarios::reduce_kmeans(ens, k, s);
  };
  if (!input.empty()) {
    const auto km = reduce(input, seed);
    json out = {{"profiles", json::array()}, {"probs", std::vector<double>(km.probs.data(), km.probs.data() + km.probs.size())}};
    for (Eigen::Index r = 0; r < km.centroids.rows(); ++r) {
      const Eigen::RowVectorXd row = km.centroids.row(r);
      out["profiles"].push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    write_json(f.out, out);
    print_family("profiles", km.probs);
    return kOk;
  }
  if (pv.empty() || load.empty()) throw ConfigError("scen reduce: give --input or both --pv and --load");
  const auto kp = reduce(pv, seed);
  const auto kl = reduce(load, seed + 1);
  scenarios::ScenarioSet set{kp.centroids, kl.centroids, kp.probs, kl.probs};
  set.validate();
  write_json(f.out, scenarios::to_json(set));
  print_family("pv", set.pv_probs);
  print_family("load", set.load_probs);
  return kOk;
}

int cmd_scen_build(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const fs::path dir = cfg.output;
  const auto hash = config::config_hash(cfg);
  const auto built = config::build_scenarios(cfg);
  write_json(dir / "config.json", config::to_json(cfg));
  write_json(dir / "scenarios.json", config::to_json(built, hash));
  print_family("pv", built.set.pv_probs);
  print_family("load", built.set.load_probs);
  return kOk;
}

int cmd_train(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const fs::path dir = cfg.output;
  const auto hash = config::config_hash(cfg);
  const auto built = config::build_scenarios(cfg);
  write_json(dir / "config.json", config::to_json(cfg));
  write_json(dir / "scenarios.json", config::to_json(built, hash));

  trainer::Learner learner(cfg.system, cfg.training);
  const auto res = trainer::train(learner, built.train(), (dir / "abort_checkpoint.bin").string());
  learner.save((dir / "checkpoint.bin").string(), {{"config_hash", hash}});
  res.metrics.write_csv((dir / "metrics.csv").string());
  const auto& rows = res.metrics.rows();
  std::cout << "trained " << trainer::to_string(cfg.training.variant) << " for " << rows.size()
            << " episodes; last cumulative reward " << num(rows.back().cum_reward) << '\n';
  return kOk;
}

// Loads the run's config snapshot and verifies that every artifact agrees with it.
struct LoadedRun {
  config::RunConfig cfg;
  std::string hash;
  config::BuiltScenarios scen;
};

LoadedRun load_run(const fs::path& dir, const std::string& override_config) {
  LoadedRun run;
  const std::string snapshot = (dir / "config.json").string();
  run.cfg = config::load_config(override_config.empty() ? snapshot : override_config);
  run.hash = config::config_hash(run.cfg);
  std::string scen_hash;
  run.scen = config::built_scenarios_from_json(read_json((dir / "scenarios.json").string()), &scen_hash);
  if (scen_hash != run.hash)
    throw ConsistencyError("scenarios.json was built from a different configuration (" + scen_hash + " vs " +
                           run.hash + ")");
  return run;
}

int cmd_eval(const CommonFlags& f) {
  const fs::path dir = f.out.empty() ? fs::path(config::desk_config().output) : fs::path(f.out);
  auto run = load_run(dir, f.config);
  json header;
  auto learner = trainer::Learner::load((dir / "checkpoint.bin").string(), run.cfg.system, run.cfg.training, &header);
  if (header.value("config_hash", std::string()) != run.hash)
    throw ConsistencyError("checkpoint was trained under a different configuration");
  const double alpha = f.alpha.value_or(run.cfg.risk.alpha);
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("--alpha must lie in (0, 1)");
  const auto report = trainer::evaluate(learner, run.scen.test(), alpha, eval_threads());
  json j = trainer::to_json(report);
  j["config_hash"] = run.hash;
  j["variant"] = trainer::to_string(run.cfg.training.variant);
  j["seed"] = run.cfg.training.seed;
  write_json(dir / "eval.json", j);
  write_text(dir / "dispatch.csv", trainer::dispatch_csv(report));
  std::cout << "total_cost " << num(report.total_cost) << "\nunit_cost " << num(report.unit_cost) << "\nrisk_kwh "
            << num(report.risk_kwh) << '\n';
  return kOk;
}

json allocation_json(const shapley::CharacteristicTable& table) {
  const auto psi = shapley::shapley_allocate(table);
  json alloc = json::object();
  double total = 0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    alloc[std::to_string(i + 1)] = psi[i];
    total += psi[i];
  }
  return {{"table", shapley::to_json(table)},
          {"allocation", alloc},
          {"grand_value", table.value(table.grand())},
          {"allocated_total", total}};
}

int cmd_shapley(const CommonFlags& f, const std::string& table_path, std::optional<int> budget) {
  fs::path target;
  json out;
  if (!table_path.empty()) {
    out = allocation_json(shapley::table_from_json(read_json(table_path)));
    target = f.out.empty() ? fs::path("shapley.json") : fs::path(f.out);
  } else {
    auto cfg = resolve(f);
    if (budget) {
      if (*budget < 1) throw ConfigError("--budget must be >= 1");
      cfg.training.episodes = *budget;
    }
    const auto hash = config::config_hash(cfg);
    const auto built = config::build_scenarios(cfg);
    const auto train_set = built.train();
    const auto test_set = built.test();
    shapley::CharacteristicTable table(static_cast<int>(cfg.system.size()));
    for (shapley::Coalition s = 1; s <= table.grand(); ++s) {
      const double y = shapley::coalition_value(s, cfg.system, train_set, test_set, cfg.training, cfg.risk,
                                                eval_threads());
      table.set(s, y);
      std::cout << "Y(" << shapley::coalition_key(s) << ") = " << num(y) << '\n';
    }
    out = allocation_json(table);
    out["config_hash"] = hash;
    out["seed"] = cfg.training.seed;
    target = fs::path(cfg.output) / "shapley.json";
  }
  if (target.extension() != ".json") target /= "shapley.json";
  write_json(target, out);
  for (const auto& [k, v] : out["allocation"].items()) std::cout << "psi_" << k << " = " << num(v.get<double>()) << '\n';
  return kOk;
}

int cmd_export(const std::string& input, const std::string& out_path) {
  if (out_path.empty()) throw ConfigError("export: --out is required");
  const json j = read_json(input);
  std::ostringstream csv;
  if (j.contains("total_cost") && j.contains("scenarios")) {
    const auto rep = trainer::eval_report_from_json(j);
    csv << "pv_id,load_id,prob,cost,shed_kwh,served_kwh\n";
    for (const auto& r : rep.scenarios)
      csv << r.pv_id << ',' << r.load_id << ',' << num(r.prob) << ',' << num(r.cost) << ',' << num(r.shed_kwh)
          << ',' << num(r.served_kwh) << '\n';
  } else if (j.contains("allocation") && j.contains("table")) {
    const auto table = shapley::table_from_json(j.at("table"));
    csv << "kind,key,value\n";
    for (shapley::Coalition s = 1; s <= table.grand(); ++s)
      csv << "coalition,\"" << shapley::coalition_key(s) << "\"," << num(table.value(s)) << '\n';
    const auto psi = shapley::shapley_allocate(table);
    for (std::size_t i = 0; i < psi.size(); ++i) csv << "allocation," << i + 1 << ',' << num(psi[i]) << '\n';
  } else if (j.contains("set") && j.contains("split")) {
    const auto built = config::built_scenarios_from_json(j);
    csv << "family,id,prob,split";
    for (Eigen::Index t = 0; t < built.set.horizon(); ++t) csv << ",t" << t;
    csv << '\n';
    auto family = [&](const char* name, const scenarios::ProfileMatrix& m, const Eigen::VectorXd& p,
                      const std::vector<int>& test) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const bool held = std::find(test.begin(), test.end(), static_cast<int>(r)) != test.end();
        csv << name << ',' << r << ',' << num(p(r)) << ',' << (held ? "test" : "train");
        for (Eigen::Index t = 0; t < m.cols(); ++t) csv << ',' << num(m(r, t));
        csv << '\n';
      }
    };
    family("pv", built.set.pv, built.set.pv_probs, built.split.test_pv);
    family("load", built.set.load, built.set.load_probs, built.split.test_load);
  } else {
    throw ParseError("export: " + input + " is not an eval report, shapley result or scenario file");
  }
  write_text(out_path, csv.str());
  return kOk;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool run_flags) {
  cmd->add_option("--config", f.config, "run configuration JSON");
  cmd->add_flag("--paper-scale", f.paper_scale, "start from the full-size parameter preset");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output path");
  if (run_flags) {
    cmd->add_option("--variant", f.variant, "rrl_sm, r_mappo or mappo");
    cmd->add_option("--alpha", f.alpha, "risk level in (0, 1)");
    cmd->add_option("--episodes", f.episodes, "training episodes");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"riskgrid: risk-sensitive multi-microgrid dispatch"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* scen = app.add_subcommand("scen", "scenario generation and reduction");
  scen->require_subcommand(1);
  auto* gen = scen->add_subcommand("gen", "Monte-Carlo profile ensemble to CSV");
  add_common(gen, flags, false);
  std::string kind = "load";
  int count = 1000;
  std::optional<double> noise;
  gen->add_option("--kind", kind, "pv or load");
  gen->add_option("--count", count, "number of profiles")->check(CLI::PositiveNumber);
  gen->add_option("--noise", noise, "relative noise level overriding the config");

  auto* reduce = scen->add_subcommand("reduce", "k-means reduction of CSV ensembles");
  add_common(reduce, flags, false);
  std::string input, pv_csv, load_csv;
  int k = 20;
  bool header = false;
  reduce->add_option("--input", input, "single profile CSV");
  reduce->add_option("--pv", pv_csv, "PV profile CSV");
  reduce->add_option("--load", load_csv, "load profile CSV");
  reduce->add_option("--k", k, "representatives per family")->check(CLI::PositiveNumber);
  reduce->add_flag("--header", header, "skip the first CSV line");

  auto* build = scen->add_subcommand("build", "scenario set and train/test split from a config");
  add_common(build, flags, true);

  auto* train = app.add_subcommand("train", "train a policy");
  add_common(train, flags, true);

  auto* eval = app.add_subcommand("eval", "evaluate a trained run on the held-out scenarios");
  add_common(eval, flags, true);

  auto* shap = app.add_subcommand("shapley", "coalition values and Shapley allocation");
  add_common(shap, flags, true);
  std::string table;
  std::optional<int> budget;
  shap->add_option("--table", table, "precomputed characteristic table JSON");
  shap->add_option("--budget", budget, "training episodes per coalition");

  auto* exp = app.add_subcommand("export", "convert a report to CSV");
  std::string exp_in, exp_out;
  exp->add_option("--input", exp_in, "report JSON")->required();
  exp->add_option("--out", exp_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInput;
  }

  try {
    if (*gen) return cmd_scen_gen(flags, kind, count, noise);
    if (*reduce) return cmd_scen_reduce(flags, input, pv_csv, load_csv, k, header);
    if (*build) return cmd_scen_build(flags);
    if (*train) return cmd_train(flags);
    if (*eval) return cmd_eval(flags);
    if (*shap) return cmd_shapley(flags, table, budget);
    if (*exp) return cmd_export(exp_in, exp_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << '\n';
    return kConsistency;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
