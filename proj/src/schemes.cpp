#include "ionprep/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ionprep/linalg.hpp"

namespace ionprep {

StepSpec mirror(const StepSpec& step) {
  StepSpec m = step;
  for (auto& b : m.beams) {
    b.anchor.lower = b.anchor.lower.mirrored();
    b.anchor.upper = b.anchor.upper.mirrored();
    b.pol = b.pol.mirrored();
  }
  for (auto& t : m.tones)
    for (auto& x : t.members) x = x.mirrored();
  return m;
}

SchemeSpec mirror(const SchemeSpec& spec) {
  SchemeSpec m = spec;
  m.target = spec.target.mirrored();
  for (auto& s : m.cycle) s = mirror(s);
  for (auto& w : m.mw.weak) w = w.mirrored();
  return m;
}

double PulseSequence::cycle_duration() const {
  double t = dead_time;
  for (const auto& s : steps) t += s.duration;
  return t;
}

Eigen::MatrixXd PulseSequence::cycle_matrix() const {
  if (steps.empty()) throw ConfigError("empty pulse sequence");
  Eigen::MatrixXd M = steps.front().P;
  for (size_t i = 1; i < steps.size(); ++i) M = steps[i].P * M;
  return M;
}

PulseSequence build_sequence(const std::vector<StepSpec>& specs, const Registry& reg,
                             const MwOptions& mw, double dead_time) {
  if (dead_time < 0) throw ConfigError("dead time must be >= 0");
  PulseSequence seq;
  seq.dead_time = dead_time;
  for (const auto& sp : specs) {
    PulseStep st;
    st.kind = sp.kind;
    st.name = sp.name;
    if (sp.kind == StepKind::laser) {
      if (!(sp.duration > 0)) throw ConfigError("laser step " + sp.name + " needs a duration > 0");
      st.duration = sp.duration;
      st.P = propagator(build_rate_matrix(sp.beams, reg), sp.duration);
    } else {
      auto op = std::make_shared<MwOperation>(build_mw_operation(sp.name, sp.tones, reg, mw, sp.duration));
      st.duration = op->duration;
      st.P = embed_ground(op->T, reg);
      st.mw = op;
    }
    seq.steps.push_back(std::move(st));
  }
  return seq;
}

Scheme build_scheme(const SchemeSpec& spec) {
  Scheme s;
  s.name = spec.name;
  s.reg = std::make_shared<Registry>(spec.species, spec.field_t, spec.levels, spec.tracking);
  s.target = spec.target;
  s.target_index = s.reg->index(spec.species.ground, spec.target);
  s.cycle = build_sequence(spec.cycle, *s.reg, spec.mw, spec.dead_time);
  s.M = s.cycle.cycle_matrix();
  return s;
}

Eigen::VectorXd uniform_ground(const Registry& reg) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(reg.size());
  const auto& g = reg.species().ground;
  const int o = reg.offset(g), n = reg.count(g);
  p.segment(o, n).setConstant(1.0 / n);
  return p;
}

Eigen::VectorXd ground_state(const Registry& reg, StateLabel label) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(reg.size());
  p(reg.index(reg.species().ground, label)) = 1.0;
  return p;
}

void cycle_spectrum(const Scheme& s, double& fpe, double& lambda2) {
  Eigen::VectorXd x;
  fpe = stochastic_fixed_point<double>(s.M, x) ? 1.0 - x(s.target_index) : NAN;
  Eigen::EigenSolver<Eigen::MatrixXd> es(s.M, false);
  std::vector<double> mod;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mod.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(mod.rbegin(), mod.rend());
  lambda2 = mod.size() > 1 ? mod[1] : 0.0;
}

static void check_initial(const Scheme& s, const Eigen::VectorXd& p) {
  if (p.size() != s.reg->size()) throw ConfigError("initial occupations have the wrong length");
  if (!valid_occupations(p)) throw ConfigError("initial occupations are not a probability vector");
}

SchemeResult run_fssp(const Scheme& s, const Eigen::VectorXd& initial, long max_cycles,
                      const ConvergenceOptions& conv) {
  check_initial(s, initial);
  SchemeResult r;
  auto& tr = r.trace;
  const double dt = s.cycle.cycle_duration();
  Eigen::VectorXd p = initial;
  tr.error.push_back(1.0 - p(s.target_index));
  tr.time.push_back(0.0);
  if (conv.keep_occupations) tr.occupations.push_back(p);
  long k = 0;
  while (k < max_cycles) {
    Eigen::VectorXd pn = s.M * p;
    ++k;
    if (!pn.allFinite()) {
      std::ostringstream os;
      os << s.name << ": non-finite occupations at cycle " << k;
      throw NumericalError(os.str());
    }
    const double e = std::clamp(1.0 - pn(s.target_index), 0.0, 1.0);
    const double change = std::max(std::abs(e - tr.error.back()), (pn - p).cwiseAbs().maxCoeff());
    tr.error.push_back(e);
    tr.time.push_back(tr.time.back() + dt);
    if (conv.keep_occupations) tr.occupations.push_back(pn);
    p = pn;
    if (k >= conv.min_cycles && change < conv.threshold) {
      tr.converged = true;
      break;
    }
  }
  r.cycles = k;
  r.duration = tr.time.back();
  r.steady_error = tr.error.back();
  r.converged = tr.converged;
  cycle_spectrum(s, r.fixed_point_error, r.second_eigenvalue);
  return r;
}

SchemeResult run_to_convergence(const Scheme& s, const Eigen::VectorXd& initial,
                                const ConvergenceOptions& conv) {
  return run_fssp(s, initial, conv.max_cycles, conv);
}

std::vector<InitialStateRow> prepare_from_all_states(const Scheme& s, long max_cycles, int jobs) {
  const auto gs = s.reg->level_states(s.reg->species().ground);
  std::vector<StateLabel> labels;
  for (const auto& st : gs) labels.push_back(st.label);
  std::sort(labels.begin(), labels.end(), [](StateLabel a, StateLabel b) {
    return a.twoF != b.twoF ? a.twoF > b.twoF : a.twoM > b.twoM;
  });
  std::vector<InitialStateRow> rows(labels.size());
  const double thr = std::exp(-1.0);
  parallel_for(static_cast<int>(labels.size()), jobs, [&](int i) {
    InitialStateRow row;
    row.label = labels[i];
    Eigen::VectorXd p = ground_state(*s.reg, labels[i]);
    row.initial_error = 1.0 - p(s.target_index);
    for (long k = 0; k <= max_cycles; ++k) {
      if (1.0 - p(s.target_index) < thr) {
        row.cycles = k;
        break;
      }
      p = s.M * p;
    }
    rows[i] = row;
  });
  return rows;
}

namespace {

const TransitionSpec& pick_pump(const SpeciesData& sp, const std::string& name) {
  if (!name.empty()) return sp.transition(name);
  const TransitionSpec* best = nullptr;
  for (const auto& t : sp.transitions)
    if (t.lower == sp.ground && sp.level(t.upper).twoJ == 1)
      if (!best || t.wavelength_nm > best->wavelength_nm) best = &t;
  if (!best) throw ConfigError(sp.name + ": no J=1/2 excited level coupled to the ground level");
  return *best;
}

const TransitionSpec* pick_repump(const SpeciesData& sp, const TransitionSpec& pump,
                                  const std::string& name) {
  if (!name.empty()) return &sp.transition(name);
  const TransitionSpec* best = nullptr;
  for (const auto& t : sp.transitions)
    if (t.upper == pump.upper && t.lower != sp.ground)
      if (!best || t.branching > best->branching) best = &t;
  return best;
}

LaserBeam repump_beam(const TransitionSpec& t, StateLabel upper, double s) {
  LaserBeam b;
  b.name = t.name;
  b.transition = t.name;
  b.anchor.lower_median = true;
  b.anchor.upper = upper;
  b.s = s;
  b.pol = Polarization::from_weights(1.0 / 3, 1.0 / 3, 1.0 / 3);
  b.lineshape = Lineshape::power_broadened;
  return b;
}

}  // namespace

SchemeSpec default_fssp_spec(const SpeciesData& species, double field_t, StateLabel target,
                             const FsspDefaults& d) {
  const auto& pump = pick_pump(species, d.pump_transition);
  const auto* rep = pick_repump(species, pump, d.repump_transition);
  SchemeSpec spec;
  spec.name = "fssp";
  spec.species = species;
  spec.field_t = field_t;
  spec.target = target;
  spec.levels = {species.ground, pump.upper};
  if (rep) spec.levels.push_back(rep->lower);

  const int sg = target.twoM > 0 ? 1 : -1;
  const int tF = target.twoF, tFo = tF - 2;
  spec.mw.weak = {{StateLabel{tFo, -sg * tFo}, StateLabel{tF, -sg * tFo}}};

  Registry reg(species, field_t, {species.ground}, spec.tracking);
  for (const auto& g : fssp_group_plan(reg, target, d.mw_slots)) {
    StepSpec st;
    st.kind = StepKind::microwave;
    st.name = "mw." + g.name;
    st.tones = g.tones;
    st.duration = g.duration;
    spec.cycle.push_back(st);
  }
  StepSpec p;
  p.name = pump.name;
  p.duration = d.pump_duration;
  LaserBeam b;
  b.name = pump.name;
  b.transition = pump.name;
  b.anchor.lower = {tFo, sg * tFo};
  b.anchor.upper = {tF, sg * tF};
  b.s = d.pump_s;
  b.pol = linear_polarization(d.pump_theta);
  p.beams = {b};
  spec.cycle.push_back(p);
  if (rep) {
    StepSpec r;
    r.name = rep->name;
    r.duration = d.repump_duration;
    r.beams = {repump_beam(*rep, {tF, sg * tF}, d.repump_s)};
    spec.cycle.push_back(r);
  }
  return spec;
}

Polarization impure_polarization(double eps, int sign) {
  if (eps < 0 || eps > 1) throw ConfigError("polarisation impurity must lie in [0, 1]");
  Polarization p = Polarization::from_weights(0.5 * eps, 0.5 * eps, 1.0 - eps);
  return sign < 0 ? p.mirrored() : p;
}

PsspSpec with_impurity(const PsspSpec& spec, double eps) {
  PsspSpec out = spec;
  const int sign = spec.pump.target.twoM >= 0 ? 1 : -1;
  auto apply = [&](std::vector<StepSpec>& steps) {
    for (auto& st : steps)
      for (auto& b : st.beams)
        if (std::find(spec.impure_beams.begin(), spec.impure_beams.end(), b.name) !=
            spec.impure_beams.end())
          b.pol = impure_polarization(eps, sign);
  };
  apply(out.pump.cycle);
  apply(out.correction);
  return out;
}

PsspResult run_pssp(const PsspSpec& spec, double eps, const Eigen::VectorXd* initial,
                    const ConvergenceOptions& conv) {
  const PsspSpec s = with_impurity(spec, eps);
  PsspResult out;
  out.epsilon = eps;
  Scheme pump = build_scheme(s.pump);
  const Eigen::VectorXd p0 = initial ? *initial : uniform_ground(*pump.reg);
  out.pump = run_to_convergence(pump, p0, conv);

  Scheme corr = pump;
  corr.name = s.pump.name + ".correction";
  corr.cycle = build_sequence(s.correction, *pump.reg, s.pump.mw, s.pump.dead_time);
  corr.M = corr.cycle.cycle_matrix();
  Eigen::VectorXd start = p0;
  if (out.pump.trace.occupations.empty())
    for (long k = 0; k < out.pump.cycles; ++k) start = pump.M * start;
  else
    start = out.pump.trace.occupations.back();
  ConvergenceOptions fixed = conv;
  fixed.min_cycles = s.correction_cycles;
  fixed.threshold = 0.0;
  out.corrected = run_fssp(corr, start, s.correction_cycles, fixed);
  for (auto& t : out.corrected.trace.time) t += out.pump.duration;
  out.corrected.duration = out.corrected.trace.time.back();
  out.corrected.converged = out.pump.converged;
  return out;
}

SchemeSpec alternative_spec(const AlternativeSpec& a, bool high) {
  const auto& pump = pick_pump(a.species, a.pump_transition);
  const auto* rep = pick_repump(a.species, pump, a.repump_transition);
  SchemeSpec spec;
  spec.name = high ? "alt.high" : "alt.low";
  spec.species = a.species;
  spec.field_t = high ? a.high_field_t : a.low_field_t;
  spec.target = high ? a.high_target : a.low_target;
  spec.levels = a.levels;
  if (spec.levels.empty()) {
    spec.levels = {a.species.ground, pump.upper};
    if (rep) spec.levels.push_back(rep->lower);
  }
  spec.mw = a.mw;
  const int tF = spec.target.twoF, tFo = tF - 2;

  StepSpec mw1;
  mw1.kind = StepKind::microwave;
  mw1.name = "mw.1";
  mw1.duration = a.mw_slot;
  for (int m = -tFo; m <= tFo; m += 2) {
    if (m == spec.target.twoM) continue;
    MicrowaveTone t;
    t.members.push_back({StateLabel{tF, m}, StateLabel{tFo, m}});
    mw1.tones.push_back(t);
  }
  StepSpec mw2;
  mw2.kind = StepKind::microwave;
  mw2.name = "mw.2";
  mw2.duration = a.mw_slot;
  for (int sg : {1, -1}) {
    if (spec.target == StateLabel{tF, sg * tF}) continue;
    MicrowaveTone t;
    t.members.push_back({StateLabel{tF, sg * tF}, StateLabel{tFo, sg * tFo}});
    mw2.tones.push_back(t);
  }
  // F=3 is emptied after each transfer: mw.1 and mw.2 share the stretched F=3 states
  auto pump_block = [&](std::vector<StepSpec>& cycle) {
    for (int m = -tFo; m <= tFo; m += 2) {
      StepSpec st;
      st.name = pump.name + "." + StateLabel{tFo, m}.str();
      st.duration = a.tone_duration;
      LaserBeam b;
      b.name = st.name;
      b.transition = pump.name;
      b.anchor.lower = {tFo, m};
      b.anchor.upper = {tF, m + 2 * a.tone_dm};
      b.s = a.tone_s;
      b.pol = linear_polarization(a.tone_theta);
      st.beams = {b};
      cycle.push_back(st);
    }
    if (rep) {
      StepSpec r;
      r.name = rep->name;
      r.duration = a.repump_duration;
      r.beams = {repump_beam(*rep, {tF, tF}, a.repump_s)};
      cycle.push_back(r);
    }
  };
  spec.cycle = {mw1};
  pump_block(spec.cycle);
  spec.cycle.push_back(mw2);
  pump_block(spec.cycle);
  return spec;
}

AlternativeResult run_alternative(const AlternativeSpec& a, int jobs) {
  AlternativeResult out;
  SchemeResult res[2];
  parallel_for(2, jobs, [&](int i) {
    Scheme s = build_scheme(alternative_spec(a, i == 1));
    ConvergenceOptions fixed;
    fixed.threshold = 0.0;
    fixed.min_cycles = a.cycles;
    res[i] = run_fssp(s, uniform_ground(*s.reg), a.cycles, fixed);
  });
  out.low = res[0];
  out.high = res[1];
  out.ratio = out.high.steady_error / out.low.steady_error;
  return out;
}

std::vector<SweepRow> sweep_intensity(const SchemeSpec& spec, const std::string& beam,
                                      const std::vector<double>& s_values,
                                      const Eigen::VectorXd* initial,
                                      const ConvergenceOptions& conv, int jobs) {
  std::vector<SweepRow> rows(s_values.size());
  parallel_for(static_cast<int>(s_values.size()), jobs, [&](int i) {
    SweepRow& row = rows[i];
    row.s = s_values[i];
    try {
      SchemeSpec sp = spec;
      bool found = false;
      for (auto& st : sp.cycle)
        for (auto& b : st.beams)
          if (b.name == beam) {
            b.s = s_values[i];
            found = true;
          }
      if (!found) throw ConfigError("sweep beam '" + beam + "' is not in the cycle");
      Scheme s = build_scheme(sp);
      ConvergenceOptions c = conv;
      c.keep_occupations = false;
      SchemeResult r = run_to_convergence(s, initial ? *initial : uniform_ground(*s.reg), c);
      row.steady_error = r.steady_error;
      row.cycles = r.cycles;
      row.duration = r.duration;
      row.converged = r.converged;
      if (!r.converged) row.error = "not converged";
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

double target_min_detuning_hz(const Scheme& s, const LaserBeam& beam) {
  const auto& reg = *s.reg;
  const auto& c = reg.coupling(beam.transition);
  const double nu = anchor_frequency_hz(beam, reg);
  const int k = s.target_index - c.lower_offset;
  if (k < 0 || k >= c.lower_count) throw ConfigError("beam does not act on the target level");
  double best = INFINITY;
  for (int q = -1; q <= 1; ++q) {
    if (beam.pol.weight(q) == 0.0) continue;
    for (int i = 0; i < c.upper_count; ++i) {
      if (c.d2[q + 1](i, k) == 0.0) continue;
      const double f = reg.state(c.upper_offset + i).frequency_hz() - reg.state(s.target_index).frequency_hz();
      best = std::min(best, std::abs(nu - f));
    }
  }
  return best;
}

std::vector<SpeciesScanRow> cross_species_errors(const std::vector<SpeciesScanEntry>& entries,
                                                 const std::string& dir, const FsspDefaults& d,
                                                 const ConvergenceOptions& conv, int jobs) {
  std::vector<SpeciesScanRow> rows(entries.size());
  parallel_for(static_cast<int>(entries.size()), jobs, [&](int i) {
    const auto& e = entries[i];
    SpeciesScanRow& row = rows[i];
    row.species = e.species;
    row.target = e.target;
    try {
      SpeciesData sp = load_species_by_name(dir, e.species);
      row.splitting_hz = sp.ground_splitting_hz();
      const auto& g = sp.level(sp.ground);
      if (e.field_t) {
        row.field_t = *e.field_t;
      } else {
        ClockPoint cp = clock_field(g, sp, e.clock_lower, e.clock_upper, e.search_lo_t, e.search_hi_t);
        if (!cp.found) throw PhysicsError(e.species + ": " + cp.message);
        row.field_t = cp.field_t;
        row.clock_frequency_hz = cp.frequency_hz;
      }
      const auto spec = default_fssp_spec(sp, row.field_t, e.target, d);
      Scheme s = build_scheme(spec);
      const std::string pump = pick_pump(sp, d.pump_transition).name;
      for (const auto& st : spec.cycle)
        if (st.kind == StepKind::laser && st.beams.front().transition == pump)
          row.min_detuning_hz = target_min_detuning_hz(s, st.beams.front());
      ConvergenceOptions c = conv;
      c.keep_occupations = false;
      SchemeResult r = run_to_convergence(s, uniform_ground(*s.reg), c);
      row.steady_error = r.steady_error;
      row.cycles = r.cycles;
      row.converged = r.converged;
      if (!r.converged) row.error = "not converged";
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
  });
  return rows;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope needs two or more points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw ConfigError("log-log slope needs positive values");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace ionprep
