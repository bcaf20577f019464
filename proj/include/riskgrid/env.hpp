#pragma once

#include <array>
#include <utility>
#include <vector>

#include "riskgrid/scenarios.hpp"

// Multi-microgrid dispatch environment. Every function here is pure: the
// state is an explicit value and nothing is cached between calls.
namespace riskgrid::env {

/// Physical limits and prices of one microgrid. Powers in kW, energy in kWh,
/// prices in currency per kWh.
struct MicrogridParams {
  double pv_max = 350, pv_min = 0;
  double mt_max = 300, mt_min = 0;
  double ramp_up = 100, ramp_down = 100;  ///< kW per step
  double ess_charge_max = 200, ess_discharge_max = 200;
  double ess_capacity = 400;
  double eta_c = 0.98, eta_d = 0.98;
  double soc_min = 0.1, soc_max = 0.9, soc_init = 0.5;
  double mt_cost = 1.01;
  double shed_penalty = 10;
  /// The scenario profiles are shared shapes; each microgrid sees them scaled.
  double pv_scale = 1.0;
  double load_scale = 1.0;
  /// Fixed scale for the load observation feature.
  double load_ref = 400;

  void validate() const;
};

/// Time-of-use purchase price by hour of day; sale price = sell_ratio * buy.
struct TariffSchedule {
  std::array<double, 24> buy_price{};
  double sell_ratio = 0.5;

  double buy(int hour) const { return buy_price[static_cast<std::size_t>(hour % 24)]; }
  double sell(int hour) const { return sell_ratio * buy(hour); }
  double max_buy() const;
  void validate() const;

  /// Three-level tariff: 0.423 off-peak (00-06, 21-24), 0.775 shoulder
  /// (06-07, 10-12, 15-17), 1.189 peak (07-10, 12-15, 17-21).
  static TariffSchedule time_of_use();
};

struct SystemParams {
  std::vector<MicrogridParams> mgs;
  double grid_buy_max = 900;   ///< aggregate kW
  double grid_sell_max = 900;  ///< aggregate kW
  double dt = 1.0;             ///< hours per step
  int horizon = 24;
  TariffSchedule tariff = TariffSchedule::time_of_use();

  std::size_t size() const { return mgs.size(); }
  int hour_of(int t) const;
  void validate() const;
};

struct EnvState {
  int t = 0;
  std::vector<double> soc;
  std::vector<double> mt_prev;
  int scenario_pv = 0;
  int scenario_load = 0;
};

/// Raw local observation of one microgrid (physical units).
struct Observation {
  double t_norm = 0;
  double buy_price = 0;
  double pv = 0;
  double mt_prev = 0;
  double load = 0;
  double soc = 0;
};

inline constexpr int kObservationSize = 6;
using Features = std::array<double, kObservationSize>;

/// Scales an observation by fixed per-field constants taken from params.
Features features(const Observation& obs, const MicrogridParams& mg, const TariffSchedule& tariff);

struct Action {
  double p_es = 0;  ///< kW; negative charges, positive discharges
  double p_mt = 0;  ///< kW
};

struct MgOutcome {
  double pv = 0, load = 0;
  double p_mt = 0, p_c = 0, p_d = 0;
  double p_gb = 0, p_gs = 0;
  double p_tl = 0;    ///< shed load
  double p_curt = 0;  ///< curtailed surplus generation (over-limit sales)
  double soc = 0;     ///< SOC after the step
  double reward = 0;
};

/// Currency amounts for one step (already multiplied by dt).
struct CostBreakdown {
  double mt_cost = 0, buy_cost = 0, sell_revenue = 0, shed_cost = 0;
  double total() const { return mt_cost + buy_cost - sell_revenue + shed_cost; }
};

struct StepOutcome {
  int t = 0;
  std::vector<MgOutcome> mg;
  double team_reward = 0;
  CostBreakdown cost;
};

struct Trajectory {
  int horizon = 0;
  double dt = 1.0;
  std::vector<StepOutcome> steps;

  bool complete() const { return horizon > 0 && static_cast<int>(steps.size()) == horizon; }
};

/// PV and load of microgrid `i` at step t under the state's scenario pair.
double pv_at(const SystemParams& params, const scenarios::ScenarioSet& set, int pv_id, std::size_t i, int t);
double load_at(const SystemParams& params, const scenarios::ScenarioSet& set, int load_id, std::size_t i, int t);

std::vector<Observation> observe(const EnvState& state, const SystemParams& params,
                                 const scenarios::ScenarioSet& set);

std::pair<EnvState, std::vector<Observation>> reset(const SystemParams& params, std::pair<int, int> scenario,
                                                    const scenarios::ScenarioSet& set);

/// Clips a raw action into the MT output/ramp box and the ESS power box,
/// then tightens the ESS power so the SOC update stays inside its bounds.
Action project_action(const Action& raw, const EnvState& state, std::size_t mg, const SystemParams& params);

/// Settles one step: grid purchase/sale follows from the power balance,
/// aggregate over-limit purchases are shed pro rata and over-limit sales are
/// curtailed pro rata. `actions` must already be projected.
std::pair<EnvState, StepOutcome> step(const EnvState& state, const std::vector<Action>& actions,
                                      const SystemParams& params, const scenarios::ScenarioSet& set);

/// Power balance residual of one microgrid outcome (kW).
double balance_residual(const MgOutcome& o);

double episode_cost(const Trajectory& traj);
double shed_energy(const Trajectory& traj);
double shed_loss(const Trajectory& traj, double sigma);
double served_energy(const Trajectory& traj);

}  // namespace riskgrid::env
