#include "ionprep/budget.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ionprep {

namespace {

Eigen::VectorXd run_readout_cycles(const ReadoutConfig& r, StateLabel start, int cycles) {
  if (!r.species.has_level(r.shelf_level)) throw ConfigError("shelf level " + r.shelf_level + " is not in the species");
  Registry reg(r.species, r.field_t, r.levels);
  if (!reg.has_level(r.shelf_level)) throw ConfigError("shelf level " + r.shelf_level + " is not registered");
  Eigen::VectorXd p = ground_state(reg, start);
  if (cycles <= 0) return p;
  const Eigen::MatrixXd M = build_sequence(r.cycle, reg, MwOptions{}).cycle_matrix();
  for (int k = 0; k < cycles; ++k) p = M * p;
  return p;
}

double shelf_population(const ReadoutConfig& r, const Eigen::VectorXd& p) {
  Registry reg(r.species, r.field_t, r.levels);
  return p.segment(reg.offset(r.shelf_level), reg.count(r.shelf_level)).sum();
}

}  // namespace

double off_resonant_shelving_error(const ReadoutConfig& r) {
  if (r.cycles < 0) throw ConfigError("shelving cycle count must be >= 0");
  if (r.cycles == 0) return 0.0;
  return shelf_population(r, run_readout_cycles(r, r.bright_state, r.cycles));
}

double shelving_probability_rate_model(const ReadoutConfig& r) {
  return shelf_population(r, run_readout_cycles(r, r.dark_state, 1));
}

ShelvingResult shelving_failure_and_deshelving(const ReadoutConfig& r) {
  ShelvingResult out;
  if (r.shelving_probability) {
    out.per_cycle = *r.shelving_probability;
    if (out.per_cycle < 0 || out.per_cycle > 1) throw ConfigError("shelving probability must lie in [0, 1]");
  } else {
    out.per_cycle = shelving_probability_rate_model(r);
    out.rate_model = true;
  }
  out.failure = std::pow(1.0 - out.per_cycle, r.cycles);
  const double tau = r.shelf_lifetime_s.value_or(r.species.level(r.shelf_level).lifetime_s);
  if (!(tau > 0)) throw ConfigError("shelf lifetime must be > 0");
  if (r.deshelving_window_s < 0) throw ConfigError("deshelving window must be >= 0");
  out.deshelving = std::isinf(tau) ? 0.0 : -std::expm1(-r.deshelving_window_s / tau);
  return out;
}

static double log_poisson(int n, double mean) {
  return -mean + n * std::log(mean) - std::lgamma(n + 1.0);
}

double poisson_cdf_below(int k, double mean) {
  if (mean < 0) throw ConfigError("Poisson mean must be >= 0");
  if (k <= 0) return 0.0;
  if (mean == 0.0) return 1.0;
  double s = 0.0;
  for (int n = 0; n < k; ++n) s += std::exp(log_poisson(n, mean));
  return std::min(1.0, s);
}

static double poisson_tail_at_least(int k, double mean) {
  if (k <= 0) return 1.0;
  if (mean == 0.0) return 0.0;
  if (k <= mean) return 1.0 - poisson_cdf_below(k, mean);
  double s = 0.0;
  for (int n = k;; ++n) {
    const double t = std::exp(log_poisson(n, mean));
    s += t;
    if (t < 1e-18 * s || n > k + 10000) break;
  }
  return std::min(1.0, s);
}

ThresholdResult thresholding_error(double lambda, double bg_rate, double t, int k) {
  if (!(lambda > 0)) throw ConfigError("bright mean count must be > 0");
  if (bg_rate < 0 || t < 0) throw ConfigError("background rate and detection time must be >= 0");
  ThresholdResult r;
  r.k = k;
  r.bright_miss = poisson_cdf_below(k, lambda);
  r.dark_false = poisson_tail_at_least(k, bg_rate * t);
  return r;
}

ThresholdResult optimal_threshold(double lambda, double bg_mean, int kmax) {
  if (kmax <= 0) kmax = static_cast<int>(std::ceil(lambda + 10 * std::sqrt(lambda) + 10));
  ThresholdResult best;
  double sbest = INFINITY;
  for (int k = 1; k <= kmax; ++k) {
    ThresholdResult r = thresholding_error(lambda, bg_mean, 1.0, k);
    if (r.bright_miss + r.dark_false < sbest) {
      sbest = r.bright_miss + r.dark_false;
      best = r;
    }
  }
  return best;
}

std::string to_string(TransferKind k) {
  switch (k) {
    case TransferKind::leakage: return "Leakage";
    case TransferKind::decoherence: return "Decoherence";
    case TransferKind::detuning: return "Detuning";
    case TransferKind::amplitude: return "Amplitude miscalibration";
  }
  return "";
}

double sum_values(const std::vector<Contribution>& c) {
  double s = 0.0;
  for (const auto& x : c) s += x.value;
  return s;
}

double combine_uncertainty(const std::vector<Contribution>& c) {
  std::map<std::string, double> linear;
  double q = 0.0;
  for (const auto& x : c) {
    if (x.key.empty())
      q += x.unc * x.unc;
    else
      linear[x.key] += x.unc;
  }
  for (const auto& [k, u] : linear) q += u * u;
  return std::sqrt(q);
}

static std::optional<Contribution> evaluate(const TransferSource& s) {
  Contribution c;
  switch (s.kind) {
    case TransferKind::leakage: {
      if (!s.idle_s || !s.lifetime_s) return std::nullopt;
      if (!(*s.lifetime_s > 0)) throw ConfigError(s.name + ": lifetime must be > 0");
      const double x = *s.idle_s / *s.lifetime_s;
      c.value = -std::expm1(-x);
      c.unc = x / *s.lifetime_s * std::exp(-x) * s.lifetime_unc_s.value_or(0.0);
      break;
    }
    case TransferKind::decoherence: {
      if (!s.pulse_s || !s.t2_s) return std::nullopt;
      if (!(*s.t2_s > 0)) throw ConfigError(s.name + ": T2 must be > 0");
      const double x = *s.pulse_s / *s.t2_s;
      c.value = -0.5 * std::expm1(-x);
      c.unc = 0.5 * x / *s.t2_s * std::exp(-x) * s.t2_unc_s.value_or(0.0);
      c.key = "transition:" + s.transition;
      break;
    }
    case TransferKind::detuning: {
      if (!s.rabi_hz || !s.detuning_rms_hz) return std::nullopt;
      const double W = constants::two_pi * *s.rabi_hz;
      auto err = [&](double d) {
        return 1.0 - rabi_transfer_probability(W, constants::two_pi * d, constants::pi / W);
      };
      c.value = err(*s.detuning_rms_hz);
      const double du = s.detuning_rms_unc_hz.value_or(0.0);
      c.unc = 0.5 * std::abs(err(*s.detuning_rms_hz + du) - err(std::max(0.0, *s.detuning_rms_hz - du)));
      c.key = "transition:" + s.transition;
      break;
    }
    case TransferKind::amplitude:
      if (!s.error) return std::nullopt;
      c.value = *s.error;
      c.unc = s.error_unc.value_or(0.0);
      break;
  }
  if (c.value < 0 || c.value > 1) throw ConfigError(s.name + ": error outside [0, 1]");
  return c;
}

std::vector<BudgetRow> transfer_pulse_errors(const MeasuredErrorInputs& in) {
  std::vector<BudgetRow> rows;
  for (TransferKind k : {TransferKind::leakage, TransferKind::decoherence, TransferKind::detuning,
                         TransferKind::amplitude}) {
    BudgetRow row;
    row.name = to_string(k);
    row.group = "transfer";
    bool any_b = false, any_d = false;
    for (const auto& s : in.sources) {
      if (s.kind != k) continue;
      if (s.state != "bright" && s.state != "dark")
        throw ConfigError(s.name + ": state must be 'bright' or 'dark'");
      const bool bright = s.state == "bright";
      (bright ? any_b : any_d) = true;
      auto c = evaluate(s);
      if (!c)
        (bright ? row.bright_provided : row.dark_provided) = false;
      else
        (bright ? row.bright : row.dark).push_back(*c);
    }
    if (!any_b) row.bright_provided = false;
    if (!any_d) row.dark_provided = false;
    rows.push_back(row);
  }
  return rows;
}

std::vector<BudgetRow> readout_rows(const ReadoutConfig& r) {
  std::vector<BudgetRow> rows;
  BudgetRow off;
  off.name = "Off-resonant shelving";
  off.group = "readout";
  off.simulated = true;
  off.bright = {{off_resonant_shelving_error(r), 0.0, ""}};
  off.dark_applies = false;
  rows.push_back(off);

  ThresholdResult th = r.threshold > 0
                           ? thresholding_error(r.lambda_bright, r.background_mean, 1.0, r.threshold)
                           : optimal_threshold(r.lambda_bright, r.background_mean);
  BudgetRow t;
  t.name = "Thresholding";
  t.group = "readout";
  t.bright = {{th.bright_miss, r.thresholding_unc, ""}};
  t.dark = {{th.dark_false, r.thresholding_unc, ""}};
  rows.push_back(t);

  ShelvingResult sh = shelving_failure_and_deshelving(r);
  BudgetRow f;
  f.name = "Shelving failure";
  f.group = "readout";
  f.simulated = true;
  f.bright_applies = false;
  f.dark = {{sh.failure, 0.0, ""}};
  rows.push_back(f);
  BudgetRow d;
  d.name = "Deshelving";
  d.group = "readout";
  d.simulated = true;
  d.bright_applies = false;
  d.dark = {{sh.deshelving, 0.0, ""}};
  rows.push_back(d);
  return rows;
}

BudgetReport aggregate_budget(const std::vector<BudgetRow>& rows) {
  BudgetReport rep;
  rep.rows = rows;
  std::vector<Contribution> all_b, all_d;
  std::map<std::string, std::pair<std::vector<Contribution>, std::vector<Contribution>>> per;
  for (const auto& r : rows) {
    if (std::find_if(rep.groups.begin(), rep.groups.end(),
                     [&](const auto& g) { return g.first == r.group; }) == rep.groups.end())
      rep.groups.push_back({r.group, {}});
    auto& [gb, gd] = per[r.group];
    gb.insert(gb.end(), r.bright.begin(), r.bright.end());
    gd.insert(gd.end(), r.dark.begin(), r.dark.end());
    all_b.insert(all_b.end(), r.bright.begin(), r.bright.end());
    all_d.insert(all_d.end(), r.dark.begin(), r.dark.end());
  }
  auto total = [](const std::vector<Contribution>& b, const std::vector<Contribution>& d) {
    BudgetTotal t;
    t.bright = sum_values(b);
    t.dark = sum_values(d);
    t.bright_unc = combine_uncertainty(b);
    t.dark_unc = combine_uncertainty(d);
    return t;
  };
  for (auto& [name, t] : rep.groups) t = total(per[name].first, per[name].second);
  rep.total = total(all_b, all_d);
  return rep;
}

static std::string cell(const std::vector<Contribution>& c, bool applies, bool provided) {
  if (!applies) return "-";
  if (!provided) return "not provided";
  char buf[64];
  const double v = sum_values(c) * 1e5, u = combine_uncertainty(c) * 1e5;
  if (u > 0)
    std::snprintf(buf, sizeof buf, "%.2f(%.2f)", v, u);
  else
    std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

static std::string total_cell(double v, double u) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f(%.2f)", v * 1e5, u * 1e5);
  return buf;
}

std::string format_budget(const BudgetReport& rep) {
  std::vector<std::array<std::string, 3>> lines;
  lines.push_back({"Error (x1e-5)", "|1> (bright)", "|0> (dark)"});
  for (const auto& [g, t] : rep.groups) {
    for (const auto& r : rep.rows)
      if (r.group == g)
        lines.push_back({r.name + (r.simulated ? " *" : ""),
                         cell(r.bright, r.bright_applies, r.bright_provided),
                         cell(r.dark, r.dark_applies, r.dark_provided)});
    lines.push_back({"Total " + g, total_cell(t.bright, t.bright_unc), total_cell(t.dark, t.dark_unc)});
  }
  lines.push_back({"Total expected error", total_cell(rep.total.bright, rep.total.bright_unc),
                   total_cell(rep.total.dark, rep.total.dark_unc)});
  size_t w[3] = {0, 0, 0};
  for (const auto& l : lines)
    for (int i = 0; i < 3; ++i) w[i] = std::max(w[i], l[i].size());
  std::ostringstream os;
  for (size_t n = 0; n < lines.size(); ++n) {
    const auto& l = lines[n];
    os << l[0] << std::string(w[0] - l[0].size() + 2, ' ');
    os << std::string(w[1] - l[1].size(), ' ') << l[1] << "  ";
    os << std::string(w[2] - l[2].size(), ' ') << l[2] << "\n";
    if (n == 0) os << std::string(w[0] + w[1] + w[2] + 4, '-') << "\n";
  }
  os << "* simulated\n";
  return os.str();
}

}  // namespace ionprep
