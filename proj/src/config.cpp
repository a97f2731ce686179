#include "ionprep/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#ifndef IONPREP_DEFAULT_SPECIES_DIR
#define IONPREP_DEFAULT_SPECIES_DIR "data/species"
#endif

namespace fs = std::filesystem;

namespace ionprep {

namespace {

constexpr double mT = 1e-3;
constexpr double us = 1e-6;

std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<double> number_list(const std::string& s, const std::string& where) {
  std::vector<double> out;
  std::string t = s;
  for (char& c : t)
    if (c == ',') c = ' ';
  for (const auto& w : words(t)) out.push_back(parse_number(w, where));
  return out;
}

bool parse_bool(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw ConfigError(where + ": expected a boolean, got '" + t + "'");
}

const IniSection& empty_section(const std::string& name) {
  static thread_local IniSection s;
  s.name = name;
  s.entries.clear();
  return s;
}

const IniSection& section_or_empty(const IniDocument& doc, const std::string& name) {
  const auto* s = doc.find(name);
  return s ? *s : empty_section(name);
}

int parse_int(const IniSection& sec, const std::string& key, int fallback) {
  const double v = sec.number_or(key, fallback);
  if (v != std::floor(v)) throw ConfigError("[" + sec.name + "] " + key + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace

std::string resolve_species_dir(const std::string& explicit_dir, const std::string& config_path) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("IONPREP_SPECIES_DIR"); env && *env) return env;
  if (!config_path.empty()) {
    fs::path p = fs::path(config_path).parent_path() / ".." / "data" / "species";
    if (fs::is_directory(p)) return p.lexically_normal().string();
  }
  return IONPREP_DEFAULT_SPECIES_DIR;
}

RunConfig load_run_config(const std::string& path, const std::string& species_dir) {
  RunConfig c;
  c.path = path;
  c.doc = load_ini(path);
  c.species_dir = resolve_species_dir(species_dir, path);
  return c;
}

Anchor parse_anchor(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() != 2) throw ConfigError("anchor '" + s + "': expected lower:upper");
  Anchor a;
  if (parts[0] == "median")
    a.lower_median = true;
  else
    a.lower = parse_label(parts[0]);
  a.upper = parse_label(parts[1]);
  return a;
}

MwTransition parse_mw_transition(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() != 2) throw ConfigError("MW transition '" + s + "': expected F,M:F,M");
  return {parse_label(parts[0]), parse_label(parts[1])};
}

MicrowaveTone parse_tone(const std::string& s) {
  MicrowaveTone t;
  auto at = s.find('@');
  for (const auto& m : split(s.substr(0, at), '|')) t.members.push_back(parse_mw_transition(m));
  if (at != std::string::npos) {
    for (const auto& kv : words(s.substr(at + 1))) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("tone option '" + kv + "': expected key=value");
      const std::string k = kv.substr(0, eq);
      const double v = parse_number(kv.substr(eq + 1), "tone " + k);
      if (k == "rabi_khz")
        t.omega = constants::two_pi * v * 1e3;
      else if (k == "scale")
        t.amplitude_scale = v;
      else
        throw ConfigError("unknown tone option '" + k + "'");
    }
  }
  return t;
}

LaserBeam parse_beam(const IniSection& sec) {
  LaserBeam b;
  b.name = sec.name.substr(sec.name.find('.') + 1);
  b.transition = sec.require("transition");
  b.anchor = parse_anchor(sec.require("anchor"));
  b.detuning_hz = sec.number_or("detuning_mhz", 0.0) * 1e6;
  b.s = sec.number("s");
  if (b.s < 0) throw ConfigError("[" + sec.name + "] s must be >= 0");
  if (sec.has("weights")) {
    auto w = number_list(sec.require("weights"), "[" + sec.name + "] weights");
    if (w.size() != 3) throw ConfigError("[" + sec.name + "] weights: expected sigma-, pi, sigma+");
    b.pol = Polarization::from_weights(w[0], w[1], w[2]);
  } else {
    b.pol = linear_polarization(sec.number_or("theta_deg", 90.0) * constants::pi / 180.0);
  }
  const std::string ls = sec.get("lineshape").value_or("natural");
  if (ls == "natural")
    b.lineshape = Lineshape::natural;
  else if (ls == "power_broadened")
    b.lineshape = Lineshape::power_broadened;
  else
    throw ConfigError("[" + sec.name + "] unknown lineshape '" + ls + "'");
  return b;
}

MwOptions parse_mw_options(const IniDocument& doc) {
  MwOptions o;
  const auto& sec = section_or_empty(doc, "mw");
  const std::string mode = sec.get("mode").value_or("ideal");
  if (mode == "ideal")
    o.mode = MwMode::ideal;
  else if (mode == "characterized")
    o.mode = MwMode::characterized;
  else
    throw ConfigError("[mw] unknown mode '" + mode + "'");
  const std::string lk = sec.get("leakage_model").value_or("shaped");
  if (lk == "shaped")
    o.leakage = LeakageModel::shaped;
  else if (lk == "square_pulse")
    o.leakage = LeakageModel::square_pulse;
  else
    throw ConfigError("[mw] unknown leakage_model '" + lk + "'");
  o.omega = constants::two_pi * sec.number_or("rabi_khz", 1000.0) * 1e3;
  o.weak_factor = sec.number_or("weak_factor", 4.0);
  if (!(o.weak_factor > 0)) throw ConfigError("[mw] weak_factor must be > 0");
  o.max_area = sec.number_or("max_area_pi", 1.5) * constants::pi;
  for (const auto& w : sec.get_all("weak")) o.weak.push_back(parse_mw_transition(w));
  return o;
}

std::vector<StepSpec> parse_steps(const IniDocument& doc, const std::string& list) {
  std::vector<StepSpec> steps;
  for (const auto& tok : words(list)) {
    StepSpec st;
    st.name = tok;
    if (tok.rfind("mw.", 0) == 0) {
      const auto& sec = doc.require(tok);
      st.kind = StepKind::microwave;
      st.duration = sec.number_or("duration_us", 0.0) * us;
      for (const auto& t : sec.get_all("tone")) st.tones.push_back(parse_tone(t));
      if (st.tones.empty()) throw ConfigError("[" + tok + "] has no tones");
    } else {
      st.kind = StepKind::laser;
      std::optional<double> dur;
      for (const auto& b : split(tok, '+')) {
        if (b.rfind("beam.", 0) != 0) throw ConfigError("cycle entry '" + b + "': expected beam.X or mw.X");
        const auto& sec = doc.require(b);
        st.beams.push_back(parse_beam(sec));
        const double d = sec.number("duration_us") * us;
        if (dur && std::abs(*dur - d) > 1e-15)
          throw ConfigError("beams in '" + tok + "' have different durations");
        dur = d;
      }
      st.duration = *dur;
    }
    steps.push_back(st);
  }
  return steps;
}

std::string config_species_path(const RunConfig& cfg) {
  return species_path(cfg.species_dir, cfg.doc.require("run").require("species"));
}

SpeciesData config_species(const RunConfig& cfg) {
  return load_species_by_name(cfg.species_dir, cfg.doc.require("run").require("species"));
}

SchemeSpec scheme_from_config(const RunConfig& cfg, std::optional<double> field_t) {
  const auto& run = cfg.doc.require("run");
  SchemeSpec s;
  s.name = run.get("name").value_or("fssp");
  s.species = config_species(cfg);
  s.field_t = field_t ? *field_t : run.number("field_mT") * mT;
  if (s.field_t < 0) throw ConfigError("[run] field must be >= 0");
  s.levels = words(run.require("levels"));
  s.target = parse_label(run.require("target"));
  s.cycle = parse_steps(cfg.doc, run.require("cycle"));
  s.dead_time = run.number_or("dead_time_us", 0.0) * us;
  s.mw = parse_mw_options(cfg.doc);
  if (run.has("mirror") && parse_bool(run.require("mirror"), "[run] mirror")) s = mirror(s);
  return s;
}

ConvergenceOptions convergence_from_config(const RunConfig& cfg) {
  ConvergenceOptions c;
  const auto& sec = section_or_empty(cfg.doc, "convergence");
  c.threshold = sec.number_or("threshold", c.threshold);
  c.min_cycles = parse_int(sec, "min_cycles", static_cast<int>(c.min_cycles));
  c.max_cycles = parse_int(sec, "max_cycles", static_cast<int>(c.max_cycles));
  if (c.max_cycles < 0 || c.min_cycles < 0 || c.threshold < 0)
    throw ConfigError("[convergence] values must be >= 0");
  return c;
}

Eigen::VectorXd initial_from_config(const RunConfig& cfg, const Registry& reg,
                                    const std::string& override_label) {
  std::string v = override_label;
  if (v.empty()) v = section_or_empty(cfg.doc, "run").get("initial").value_or("uniform");
  if (v == "uniform") return uniform_ground(reg);
  const StateLabel l = parse_label(v);
  for (const auto& st : reg.level_states(reg.species().ground))
    if (st.label == l) return ground_state(reg, l);
  throw ConfigError("unknown state '" + v + "' in the ground level");
}

SweepConfig sweep_from_config(const RunConfig& cfg) {
  SweepConfig s;
  const auto& sec = section_or_empty(cfg.doc, "sweep");
  s.beam = sec.get("beam").value_or(s.beam);
  if (sec.has("s")) s.s = number_list(sec.require("s"), "[sweep] s");
  for (double x : s.s)
    if (!(x > 0 && x <= 1)) throw ConfigError("[sweep] s values must lie in (0, 1]");
  return s;
}

PsspRun pssp_from_config(const RunConfig& cfg, std::optional<double> field_t) {
  PsspRun r;
  r.spec.pump = scheme_from_config(cfg, field_t);
  const auto& sec = cfg.doc.require("pssp");
  r.spec.correction = parse_steps(cfg.doc, sec.require("correction"));
  r.spec.correction_cycles = parse_int(sec, "correction_cycles", 1);
  if (r.spec.correction_cycles < 0) throw ConfigError("[pssp] correction_cycles must be >= 0");
  r.spec.impure_beams = words(sec.get("impure_beams").value_or(""));
  r.epsilons = sec.has("epsilon") ? number_list(sec.require("epsilon"), "[pssp] epsilon")
                                  : std::vector<double>{0.0};
  const bool mirrored = cfg.doc.require("run").has("mirror") &&
                        parse_bool(cfg.doc.require("run").require("mirror"), "[run] mirror");
  if (mirrored)
    for (auto& st : r.spec.correction) st = mirror(st);
  return r;
}

AlternativeSpec alternative_from_config(const RunConfig& cfg) {
  AlternativeSpec a;
  const auto& run = cfg.doc.require("run");
  const auto& sec = cfg.doc.require("alt");
  a.species = config_species(cfg);
  if (run.has("levels")) a.levels = words(run.require("levels"));
  a.low_field_t = sec.number_or("low_field_mT", a.low_field_t / mT) * mT;
  a.high_field_t = sec.number_or("high_field_mT", a.high_field_t / mT) * mT;
  if (sec.has("low_target")) a.low_target = parse_label(sec.require("low_target"));
  if (sec.has("high_target")) a.high_target = parse_label(sec.require("high_target"));
  a.tone_s = sec.number_or("tone_s", a.tone_s);
  a.tone_duration = sec.number_or("tone_duration_us", a.tone_duration / us) * us;
  a.tone_theta = sec.number_or("tone_theta_deg", 0.0) * constants::pi / 180.0;
  a.tone_dm = parse_int(sec, "tone_dm", a.tone_dm);
  if (std::abs(a.tone_dm) > 1) throw ConfigError("[alt] tone_dm must be -1, 0 or 1");
  a.pump_transition = sec.get("pump_transition").value_or("");
  a.repump_transition = sec.get("repump_transition").value_or("");
  a.repump_s = sec.number_or("repump_s", a.repump_s);
  a.repump_duration = sec.number_or("repump_duration_us", a.repump_duration / us) * us;
  a.mw_slot = sec.number_or("mw_slot_us", 0.0) * us;
  a.cycles = parse_int(sec, "cycles", static_cast<int>(a.cycles));
  a.mw = parse_mw_options(cfg.doc);
  return a;
}

ScanConfig scan_from_config(const RunConfig& cfg) {
  ScanConfig c;
  const auto& sec = section_or_empty(cfg.doc, "scan");
  auto& d = c.defaults;
  d.pump_s = sec.number_or("pump_s", d.pump_s);
  d.pump_duration = sec.number_or("pump_duration_us", d.pump_duration / us) * us;
  d.pump_theta = sec.number_or("pump_theta_deg", 90.0) * constants::pi / 180.0;
  d.repump_s = sec.number_or("repump_s", d.repump_s);
  d.repump_duration = sec.number_or("repump_duration_us", d.repump_duration / us) * us;
  if (sec.has("mw_slots_us")) {
    d.mw_slots = number_list(sec.require("mw_slots_us"), "[scan] mw_slots_us");
    for (auto& x : d.mw_slots) x *= us;
  }
  for (const auto* e : cfg.doc.with_prefix("scan.")) {
    SpeciesScanEntry en;
    en.species = e->require("species");
    en.target = parse_label(e->require("target"));
    if (e->has("field_mT")) {
      en.field_t = e->number("field_mT") * mT;
    } else {
      auto cl = parse_mw_transition(e->require("clock"));
      en.clock_lower = cl.a;
      en.clock_upper = cl.b;
      if (e->has("search_mT")) {
        auto r = number_list(e->require("search_mT"), "[" + e->name + "] search_mT");
        if (r.size() != 2) throw ConfigError("[" + e->name + "] search_mT: expected lo hi");
        en.search_lo_t = r[0] * mT;
        en.search_hi_t = r[1] * mT;
      }
    }
    c.entries.push_back(en);
  }
  return c;
}

ReadoutConfig readout_from_config(const RunConfig& cfg) {
  ReadoutConfig r;
  const auto& sec = cfg.doc.require("readout");
  r.species = load_species_by_name(cfg.species_dir, sec.require("species"));
  r.field_t = sec.number("field_mT") * mT;
  r.levels = words(sec.require("levels"));
  r.cycle = parse_steps(cfg.doc, sec.require("cycle"));
  r.cycles = parse_int(sec, "cycles", r.cycles);
  if (sec.has("bright_state")) r.bright_state = parse_label(sec.require("bright_state"));
  if (sec.has("dark_state")) r.dark_state = parse_label(sec.require("dark_state"));
  r.shelf_level = sec.get("shelf_level").value_or(r.shelf_level);
  if (sec.has("shelving_probability")) r.shelving_probability = sec.number("shelving_probability");
  if (sec.has("shelf_lifetime_s")) r.shelf_lifetime_s = sec.number("shelf_lifetime_s");
  r.deshelving_window_s = sec.number_or("deshelving_window_us", 0.0) * us;
  r.lambda_bright = sec.number("lambda_bright");
  r.background_mean = sec.number("background_mean");
  r.threshold = parse_int(sec, "threshold", 0);
  r.thresholding_unc = sec.number_or("thresholding_unc", 0.0);
  return r;
}

MeasuredErrorInputs measured_from_config(const RunConfig& cfg) {
  MeasuredErrorInputs m;
  for (const auto* s : cfg.doc.with_prefix("transfer.")) {
    TransferSource t;
    t.name = s->name;
    const std::string k = s->require("kind");
    if (k == "leakage")
      t.kind = TransferKind::leakage;
    else if (k == "decoherence")
      t.kind = TransferKind::decoherence;
    else if (k == "detuning")
      t.kind = TransferKind::detuning;
    else if (k == "amplitude")
      t.kind = TransferKind::amplitude;
    else
      throw ConfigError("[" + s->name + "] unknown kind '" + k + "'");
    t.state = s->require("state");
    t.transition = s->get("transition").value_or("");
    auto opt = [&](const char* key, double scale) -> std::optional<double> {
      if (!s->has(key)) return std::nullopt;
      return s->number(key) * scale;
    };
    t.idle_s = opt("idle_us", us);
    t.lifetime_s = opt("lifetime_s", 1.0);
    t.lifetime_unc_s = opt("lifetime_unc_s", 1.0);
    t.pulse_s = opt("pulse_us", us);
    t.t2_s = opt("t2_ms", 1e-3);
    t.t2_unc_s = opt("t2_unc_ms", 1e-3);
    t.rabi_hz = opt("rabi_khz", 1e3);
    t.detuning_rms_hz = opt("detuning_rms_hz", 1.0);
    t.detuning_rms_unc_hz = opt("detuning_rms_unc_hz", 1.0);
    t.error = opt("error", 1.0);
    t.error_unc = opt("error_unc", 1.0);
    m.sources.push_back(t);
  }
  return m;
}

std::vector<BudgetRow> components_from_config(const RunConfig& cfg) {
  std::vector<BudgetRow> rows;
  for (const auto* s : cfg.doc.with_prefix("component.")) {
    BudgetRow r;
    r.name = s->get("label").value_or(s->name.substr(10));
    r.group = s->require("group");
    r.simulated = s->has("simulated") && parse_bool(s->require("simulated"), "[" + s->name + "] simulated");
    r.bright_applies = s->has("bright");
    r.dark_applies = s->has("dark");
    if (r.bright_applies)
      r.bright = {{s->number("bright"), s->number_or("bright_unc", 0.0), s->get("bright_key").value_or("")}};
    if (r.dark_applies)
      r.dark = {{s->number("dark"), s->number_or("dark_unc", 0.0), s->get("dark_key").value_or("")}};
    for (const auto& c : r.bright)
      if (c.value < 0 || c.value > 1) throw ConfigError("[" + s->name + "] bright outside [0, 1]");
    for (const auto& c : r.dark)
      if (c.value < 0 || c.value > 1) throw ConfigError("[" + s->name + "] dark outside [0, 1]");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ionprep
