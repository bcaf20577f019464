#include "riskgrid/env.hpp"

#include <algorithm>
#include <cmath>

#include "riskgrid/errors.hpp"

namespace riskgrid::env {

void MicrogridParams::validate() const {
  auto nonneg = [](double v) { return std::isfinite(v) && v >= 0; };
  if (!(nonneg(pv_max) && nonneg(pv_min) && nonneg(mt_max) && nonneg(mt_min) && nonneg(ramp_up) &&
        nonneg(ramp_down) && nonneg(ess_charge_max) && nonneg(ess_discharge_max)))
    throw ConfigError("microgrid: powers must be finite and non-negative");
  if (!(ess_capacity > 0)) throw ConfigError("microgrid: ess_capacity must be positive");
  if (pv_min > pv_max) throw ConfigError("microgrid: pv_min > pv_max");
  if (mt_min > mt_max) throw ConfigError("microgrid: mt_min > mt_max");
  if (!(eta_c > 0 && eta_c <= 1 && eta_d > 0 && eta_d <= 1))
    throw ConfigError("microgrid: efficiencies must lie in (0, 1]");
  if (!(soc_min >= 0 && soc_min <= soc_init && soc_init <= soc_max && soc_max <= 1))
    throw ConfigError("microgrid: require 0 <= soc_min <= soc_init <= soc_max <= 1");
  if (!(nonneg(mt_cost) && nonneg(shed_penalty))) throw ConfigError("microgrid: costs must be non-negative");
  if (!(nonneg(pv_scale) && nonneg(load_scale) && load_ref > 0))
    throw ConfigError("microgrid: profile scales must be non-negative and load_ref positive");
}

double TariffSchedule::max_buy() const { return *std::max_element(buy_price.begin(), buy_price.end()); }

void TariffSchedule::validate() const {
  for (double p : buy_price)
    if (!(p > 0) || !std::isfinite(p)) throw ConfigError("tariff: buy prices must be positive");
  if (!(sell_ratio >= 0 && sell_ratio <= 1)) throw ConfigError("tariff: sell_ratio must lie in [0, 1]");
}

TariffSchedule TariffSchedule::time_of_use() {
  TariffSchedule s;
  for (int h = 0; h < 24; ++h) {
    double p = 0.423;
    if (h == 6 || (h >= 10 && h < 12) || (h >= 15 && h < 17)) p = 0.775;
    if ((h >= 7 && h < 10) || (h >= 12 && h < 15) || (h >= 17 && h < 21)) p = 1.189;
    s.buy_price[static_cast<std::size_t>(h)] = p;
  }
  s.sell_ratio = 0.5;
  return s;
}

int SystemParams::hour_of(int t) const {
  return static_cast<int>(std::floor(static_cast<double>(t) * dt + 1e-9)) % 24;
}

void SystemParams::validate() const {
  if (mgs.empty()) throw ConfigError("system: at least one microgrid required");
  if (!(dt > 0)) throw ConfigError("system: dt must be positive");
  if (horizon < 1) throw ConfigError("system: horizon must be >= 1");
  if (!(grid_buy_max >= 0 && grid_sell_max >= 0)) throw ConfigError("system: grid limits must be non-negative");
  tariff.validate();
  for (const auto& mg : mgs) mg.validate();
}

Features features(const Observation& obs, const MicrogridParams& mg, const TariffSchedule& tariff) {
  return {obs.t_norm,
          obs.buy_price / tariff.max_buy(),
          mg.pv_max > 0 ? obs.pv / mg.pv_max : 0.0,
          mg.mt_max > 0 ? obs.mt_prev / mg.mt_max : 0.0,
          obs.load / mg.load_ref,
          obs.soc};
}

double pv_at(const SystemParams& params, const scenarios::ScenarioSet& set, int pv_id, std::size_t i, int t) {
  const auto& mg = params.mgs[i];
  return std::clamp(set.pv(pv_id, t) * mg.pv_scale, mg.pv_min, mg.pv_max);
}

double load_at(const SystemParams& params, const scenarios::ScenarioSet& set, int load_id, std::size_t i, int t) {
  return set.load(load_id, t) * params.mgs[i].load_scale;
}

std::vector<Observation> observe(const EnvState& state, const SystemParams& params,
                                 const scenarios::ScenarioSet& set) {
  require(state.t >= 0 && state.t < params.horizon, "observe: step index outside the horizon");
  std::vector<Observation> obs(params.size());
  const int hour = params.hour_of(state.t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    obs[i].t_norm = static_cast<double>(state.t % 24) / 24.0;
    obs[i].buy_price = params.tariff.buy(hour);
    obs[i].pv = pv_at(params, set, state.scenario_pv, i, state.t);
    obs[i].mt_prev = state.mt_prev[i];
    obs[i].load = load_at(params, set, state.scenario_load, i, state.t);
    obs[i].soc = state.soc[i];
  }
  return obs;
}

std::pair<EnvState, std::vector<Observation>> reset(const SystemParams& params, std::pair<int, int> scenario,
                                                    const scenarios::ScenarioSet& set) {
  const auto [b, d] = scenario;
  if (b < 0 || b >= set.pv_count() || d < 0 || d >= set.load_count())
    throw ConfigError("reset: scenario index out of range");
  if (set.horizon() < params.horizon) throw ConfigError("reset: scenario profiles shorter than the horizon");
  for (const auto& mg : params.mgs)
    if (mg.soc_init < mg.soc_min || mg.soc_init > mg.soc_max) throw ConfigError("reset: soc_init outside bounds");
  EnvState s;
  s.t = 0;
  s.scenario_pv = b;
  s.scenario_load = d;
  s.soc.resize(params.size());
  s.mt_prev.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) s.soc[i] = params.mgs[i].soc_init;
  auto obs = observe(s, params, set);
  return {std::move(s), std::move(obs)};
}

Action project_action(const Action& raw, const EnvState& state, std::size_t i, const SystemParams& params) {
  const auto& mg = params.mgs[i];
  const double p_mt_raw = std::isfinite(raw.p_mt) ? raw.p_mt : 0.0;
  const double p_es_raw = std::isfinite(raw.p_es) ? raw.p_es : 0.0;

  const double mt_prev = state.mt_prev[i];
  const double mt_lo = std::max(mg.mt_min, mt_prev - mg.ramp_down);
  // An empty box only happens when the ramp cannot reach mt_min from below;
  // the ramp wins in that case.
  const double mt_hi = std::max(std::min(mg.mt_max, mt_prev + mg.ramp_up), 0.0);
  Action a;
  a.p_mt = mt_lo <= mt_hi ? std::clamp(p_mt_raw, mt_lo, mt_hi) : mt_hi;

  const double soc = state.soc[i];
  const double charge_room = std::max(0.0, (mg.soc_max - soc) * mg.ess_capacity / (mg.eta_c * params.dt));
  const double discharge_room = std::max(0.0, (soc - mg.soc_min) * mg.ess_capacity * mg.eta_d / params.dt);
  const double es_lo = -std::min(mg.ess_charge_max, charge_room);
  const double es_hi = std::min(mg.ess_discharge_max, discharge_room);
  a.p_es = std::clamp(p_es_raw, es_lo, es_hi);
  if (a.p_es == 0.0) a.p_es = 0.0;  // drop a negative zero
  return a;
}

namespace {

// Scales entries of `v` (all >= 0) so their sum does not exceed `limit`;
// returns the removed amount per entry.
std::vector<double> cap_pro_rata(std::vector<double>& v, double limit) {
  std::vector<double> removed(v.size(), 0.0);
  double total = 0;
  for (double x : v) total += x;
  if (total <= limit) return removed;
  const double f = limit / total;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double kept = v[i] * f;
    removed[i] = v[i] - kept;
    v[i] = kept;
  }
  // Rounding can leave the sum a few ulps above the limit.
  for (int guard = 0; guard < 8; ++guard) {
    double s = 0;
    for (double x : v) s += x;
    if (s <= limit) break;
    const auto big = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    const double excess = std::min(v[big], s - limit + std::abs(limit) * 1e-15);
    v[big] -= excess;
    removed[big] += excess;
  }
  return removed;
}

}  // namespace

std::pair<EnvState, StepOutcome> step(const EnvState& state, const std::vector<Action>& actions,
                                      const SystemParams& params, const scenarios::ScenarioSet& set) {
  require(actions.size() == params.size(), "step: one action per microgrid required");
  require(state.t >= 0 && state.t < params.horizon, "step: episode already finished");
  const std::size_t n = params.size();
  const int hour = params.hour_of(state.t);
  const double buy = params.tariff.buy(hour);
  const double sell = params.tariff.sell(hour);

  StepOutcome out;
  out.t = state.t;
  out.mg.resize(n);
  std::vector<double> gb(n, 0.0), gs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    MgOutcome& o = out.mg[i];
    o.pv = pv_at(params, set, state.scenario_pv, i, state.t);
    o.load = load_at(params, set, state.scenario_load, i, state.t);
    o.p_mt = actions[i].p_mt;
    o.p_c = std::max(-actions[i].p_es, 0.0);
    o.p_d = std::max(actions[i].p_es, 0.0);
    const double net = o.load - o.pv - o.p_mt - o.p_d + o.p_c;
    if (net > 0)
      gb[i] = net;
    else
      gs[i] = -net;
  }
  const auto shed = cap_pro_rata(gb, params.grid_buy_max);
  const auto curt = cap_pro_rata(gs, params.grid_sell_max);

  EnvState next = state;
  next.t = state.t + 1;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mg = params.mgs[i];
    MgOutcome& o = out.mg[i];
    o.p_gb = gb[i];
    o.p_gs = gs[i];
    o.p_tl = shed[i];
    o.p_curt = curt[i];
    const double dsoc = (o.p_c * mg.eta_c - o.p_d / mg.eta_d) * params.dt / mg.ess_capacity;
    o.soc = std::clamp(state.soc[i] + dsoc, mg.soc_min, mg.soc_max);
    next.soc[i] = o.soc;
    next.mt_prev[i] = o.p_mt;

    const double mt_c = mg.mt_cost * o.p_mt;
    const double buy_c = buy * o.p_gb;
    const double sell_r = sell * o.p_gs;
    const double shed_c = mg.shed_penalty * o.p_tl;
    o.reward = -(mt_c + buy_c - sell_r + shed_c);
    out.team_reward += o.reward;
    out.cost.mt_cost += mt_c * params.dt;
    out.cost.buy_cost += buy_c * params.dt;
    out.cost.sell_revenue += sell_r * params.dt;
    out.cost.shed_cost += shed_c * params.dt;
  }
  return {std::move(next), std::move(out)};
}

double balance_residual(const MgOutcome& o) {
  return o.pv + o.p_mt + o.p_d - o.p_c + o.p_gb - o.p_gs - o.p_curt - (o.load - o.p_tl);
}

double episode_cost(const Trajectory& traj) {
  require(traj.complete(), "episode_cost: trajectory does not cover the horizon");
  double c = 0;
  for (const auto& s : traj.steps) c += s.cost.total();
  return c;
}

double shed_energy(const Trajectory& traj) {
  double e = 0;
  for (const auto& s : traj.steps)
    for (const auto& o : s.mg) e += o.p_tl * traj.dt;
  return e;
}

double shed_loss(const Trajectory& traj, double sigma) { return sigma * shed_energy(traj); }

double served_energy(const Trajectory& traj) {
  double e = 0;
  for (const auto& s : traj.steps)
    for (const auto& o : s.mg) e += (o.load - o.p_tl) * traj.dt;
  return e;
}

}  // namespace riskgrid::env
