// ionprep: command-line driver for state-preparation simulations.
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ionprep/budget.hpp"
#include "ionprep/config.hpp"
#include "ionprep/output.hpp"
#include "ionprep/schemes.hpp"

namespace fs = std::filesystem;
using namespace ionprep;
using nlohmann::json;

namespace {

enum Exit { ok = 0, config_error = 2, physics_error = 3, not_converged = 4 };

struct Options {
  std::string command;
  std::string config;
  std::string species_dir;
  std::string out;
  std::string initial;
  std::optional<double> field_mT;
  std::string species;
  std::vector<std::string> levels;
  int jobs = 1;
  bool allow_partial = false;
  bool all_states = false;
  std::string check_dir;
};

// fields that change results; --out and --jobs do not
json result_args(const Options& o) {
  json a = json::object();
  a["initial"] = o.initial;
  a["field_mT"] = o.field_mT ? json(*o.field_mT) : json(nullptr);
  a["species"] = o.species;
  a["levels"] = o.levels;
  a["all_states"] = o.all_states;
  return a;
}

json manifest_args(const Options& o) {
  json a = result_args(o);
  a["config"] = o.config;
  a["species_dir"] = o.species_dir;
  a["jobs"] = o.jobs;
  a["allow_partial"] = o.allow_partial;
  return a;
}

Options options_from_manifest(const json& m) {
  Options o;
  o.command = m.at("command").get<std::string>();
  const auto& a = m.at("args");
  o.config = a.at("config").get<std::string>();
  o.species_dir = a.at("species_dir").get<std::string>();
  o.initial = a.at("initial").get<std::string>();
  if (!a.at("field_mT").is_null()) o.field_mT = a.at("field_mT").get<double>();
  o.species = a.at("species").get<std::string>();
  o.levels = a.at("levels").get<std::vector<std::string>>();
  o.all_states = a.at("all_states").get<bool>();
  o.jobs = a.at("jobs").get<int>();
  o.allow_partial = a.at("allow_partial").get<bool>();
  return o;
}

std::string config_hash(const Options& o, const std::vector<std::string>& inputs) {
  std::uint64_t h = fnv1a64(std::string("ionprep ") + version + "\n" + o.command + "\n");
  h = fnv1a64(result_args(o).dump() + "\n", h);
  for (const auto& p : inputs) h = fnv1a64(read_file(p) + "\n", h);
  return hex64(h);
}

json manifest_fields(const Options& o, const std::vector<std::string>& inputs) {
  return {{"command", o.command}, {"config", o.config}, {"inputs", inputs},
          {"output_dir", o.out}, {"args", manifest_args(o)}};
}

std::optional<double> field_t(const Options& o) {
  if (!o.field_mT) return std::nullopt;
  if (*o.field_mT < 0) throw ConfigError("--field must be >= 0");
  return *o.field_mT * 1e-3;
}

// quantum numbers as integers where integral
Cell qn(double x) {
  if (x == std::floor(x)) return static_cast<long>(x);
  return x;
}

json result_json(const SchemeResult& r) {
  return {{"steady_error", number_json(r.steady_error)},
          {"fixed_point_error", number_json(r.fixed_point_error)},
          {"second_eigenvalue", number_json(r.second_eigenvalue)},
          {"cycles", r.cycles},
          {"duration_s", number_json(r.duration)},
          {"converged", r.converged}};
}

Table trace_table(const std::string& name, const SchemeResult& r) {
  Table t{name, {"cycle", "time_s", "error"}, {}};
  for (size_t k = 0; k < r.trace.error.size(); ++k)
    t.rows.push_back({static_cast<long>(k), r.trace.time[k], r.trace.error[k]});
  return t;
}

Table mw_table(const Scheme& s) {
  Table t{"mw_blocks", {"step", "a", "b", "probability", "rabi_hz", "detuning_hz", "pulse_s"}, {}};
  const auto gs = s.reg->level_states(s.reg->species().ground);
  for (const auto& st : s.cycle.steps) {
    if (!st.mw) continue;
    for (const auto& b : st.mw->blocks)
      t.rows.push_back({st.name, gs[b.a].label.str(), gs[b.b].label.str(), b.probability,
                        b.omega / constants::two_pi, b.delta / constants::two_pi, b.duration});
  }
  return t;
}

double target_leakage(const Scheme& s) {
  const auto gs = s.reg->level_states(s.reg->species().ground);
  const int o = s.reg->offset(s.reg->species().ground);
  double sum = 0.0;
  for (const auto& st : s.cycle.steps)
    if (st.mw) sum += st.mw->leakage(s.target_index - o);
  return sum;
}

int cmd_levels(const Options& o) {
  std::vector<std::string> inputs;
  SpeciesData sp;
  double B = 0.0;
  std::vector<std::string> levels = o.levels;
  if (!o.config.empty()) {
    RunConfig cfg = load_run_config(o.config, o.species_dir);
    sp = config_species(cfg);
    inputs = {o.config, config_species_path(cfg)};
    B = field_t(o).value_or(cfg.doc.require("run").number("field_mT") * 1e-3);
  } else {
    if (o.species.empty()) throw ConfigError("levels needs --species or --config");
    const std::string dir = resolve_species_dir(o.species_dir, "");
    sp = load_species_by_name(dir, o.species);
    inputs = {species_path(dir, o.species)};
    B = field_t(o).value_or(0.0);
  }
  if (levels.empty()) levels = {sp.ground};
  Table t{"levels", {"level", "F", "M", "energy_hz"}, {}};
  for (const auto& l : levels) {
    auto states = dressed_states(sp.level(l), sp, B);
    for (const auto& s : states) t.rows.push_back({l, qn(s.label.F()), qn(s.label.M()), s.frequency_hz()});
  }
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(t);
  w.set_summary({{"species", sp.name}, {"field_mT", B * 1e3}, {"levels", levels},
                 {"states", static_cast<long>(t.rows.size())}});
  w.finish(manifest_fields(o, inputs));
  std::printf("%zu states of %s at %.4f mT written to %s\n", t.rows.size(), sp.name.c_str(), B * 1e3,
              o.out.c_str());
  return ok;
}

int cmd_fssp(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  const std::vector<std::string> inputs{o.config, config_species_path(cfg)};
  SchemeSpec spec = scheme_from_config(cfg, field_t(o));
  ConvergenceOptions conv = convergence_from_config(cfg);
  Scheme s = build_scheme(spec);
  Eigen::VectorXd p0 = initial_from_config(cfg, *s.reg, o.initial);

  SchemeResult r = run_to_convergence(s, p0, conv);
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(trace_table("trace", r));
  w.add_table(mw_table(s));
  json sum = result_json(r);
  sum["scheme"] = spec.name;
  sum["species"] = spec.species.name;
  sum["field_mT"] = spec.field_t * 1e3;
  sum["target"] = spec.target.str();
  sum["cycle_duration_s"] = s.cycle.cycle_duration();
  sum["target_mw_leakage_per_cycle"] = target_leakage(s);
  for (const auto& st : spec.cycle)
    for (const auto& b : st.beams)
      if (s.reg->coupling(b.transition).spec.lower == spec.species.ground)
        sum["min_target_detuning_hz"][b.name] = target_min_detuning_hz(s, b);
  if (o.all_states) {
    auto rows = prepare_from_all_states(s, conv.max_cycles, o.jobs);
    Table t{"all_states", {"state", "F", "M", "initial_error", "cycles_to_1e"}, {}};
    bool all = true;
    for (const auto& row : rows) {
      t.rows.push_back({row.label.str(), qn(row.label.F()), qn(row.label.M()), row.initial_error, row.cycles});
      all = all && row.cycles >= 0;
    }
    w.add_table(t);
    sum["all_states_reached"] = all;
  }
  w.set_summary(sum);
  w.finish(manifest_fields(o, inputs));
  std::printf("%s %s target %s: steady error %.4e after %ld cycles (%.3f ms), fixed point %.4e\n",
              spec.name.c_str(), spec.species.name.c_str(), spec.target.str().c_str(), r.steady_error,
              r.cycles, r.duration * 1e3, r.fixed_point_error);
  if (!r.converged) {
    std::fprintf(stderr, "not converged after %ld cycles\n", r.cycles);
    if (!o.allow_partial) return not_converged;
  }
  return ok;
}

int cmd_pssp(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  const std::vector<std::string> inputs{o.config, config_species_path(cfg)};
  PsspRun run = pssp_from_config(cfg, field_t(o));
  ConvergenceOptions conv = convergence_from_config(cfg);
  Scheme probe = build_scheme(run.spec.pump);
  Eigen::VectorXd p0 = initial_from_config(cfg, *probe.reg, o.initial);

  std::vector<PsspResult> res(run.epsilons.size());
  parallel_for(static_cast<int>(res.size()), o.jobs,
               [&](int i) { res[i] = run_pssp(run.spec, run.epsilons[i], &p0, conv); });

  Table t{"pssp", {"epsilon", "pump_error", "pump_cycles", "pump_duration_s", "corrected_error",
                   "total_duration_s", "converged"}, {}};
  Table tr{"pssp_trace", {"epsilon", "stage", "cycle", "time_s", "error"}, {}};
  bool conv_all = true;
  for (const auto& r : res) {
    t.rows.push_back({r.epsilon, r.pump.steady_error, r.pump.cycles, r.pump.duration,
                      r.corrected.steady_error, r.corrected.duration, static_cast<long>(r.pump.converged)});
    for (size_t k = 0; k < r.pump.trace.error.size(); ++k)
      tr.rows.push_back({r.epsilon, std::string("pump"), static_cast<long>(k), r.pump.trace.time[k],
                         r.pump.trace.error[k]});
    for (size_t k = 0; k < r.corrected.trace.error.size(); ++k)
      tr.rows.push_back({r.epsilon, std::string("correction"), static_cast<long>(k),
                         r.corrected.trace.time[k], r.corrected.trace.error[k]});
    conv_all = conv_all && r.pump.converged;
    std::printf("PSSP eps=%.3g: pumped %.4e (%ld cycles), corrected %.4e, %.3f ms\n", r.epsilon,
                r.pump.steady_error, r.pump.cycles, r.corrected.steady_error, r.corrected.duration * 1e3);
  }
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(t);
  w.add_table(tr);
  w.set_summary({{"scheme", "pssp"}, {"target", run.spec.pump.target.str()},
                 {"field_mT", run.spec.pump.field_t * 1e3},
                 {"correction_cycles", run.spec.correction_cycles}, {"converged", conv_all}});
  w.finish(manifest_fields(o, inputs));
  return conv_all || o.allow_partial ? ok : not_converged;
}

int cmd_alt(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  const std::vector<std::string> inputs{o.config, config_species_path(cfg)};
  AlternativeSpec a = alternative_from_config(cfg);
  AlternativeResult r = run_alternative(a, o.jobs);
  Table t{"alt_trace", {"cycle", "time_low_s", "error_low", "time_high_s", "error_high"}, {}};
  for (size_t k = 0; k < r.low.trace.error.size() && k < r.high.trace.error.size(); ++k)
    t.rows.push_back({static_cast<long>(k), r.low.trace.time[k], r.low.trace.error[k],
                      r.high.trace.time[k], r.high.trace.error[k]});
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(t);
  w.set_summary({{"scheme", "alternative"},
                 {"low", result_json(r.low)},
                 {"high", result_json(r.high)},
                 {"low_field_mT", a.low_field_t * 1e3},
                 {"high_field_mT", a.high_field_t * 1e3},
                 {"low_target", a.low_target.str()},
                 {"high_target", a.high_target.str()},
                 {"cycles", a.cycles},
                 {"ratio_high_low", number_json(r.ratio)}});
  w.finish(manifest_fields(o, inputs));
  std::printf("alternative scheme after %ld cycles: low field %.4e, high field %.4e, ratio %.1f\n",
              a.cycles, r.low.steady_error, r.high.steady_error, r.ratio);
  return ok;
}

int rows_exit(const std::vector<std::string>& errors, bool allow_partial) {
  int code = ok;
  for (const auto& e : errors) {
    if (e.empty()) continue;
    if (e == "not converged")
      code = std::max<int>(code, not_converged);
    else
      code = physics_error;
  }
  return allow_partial ? ok : code;
}

int cmd_sweep(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  const std::vector<std::string> inputs{o.config, config_species_path(cfg)};
  SchemeSpec spec = scheme_from_config(cfg, field_t(o));
  ConvergenceOptions conv = convergence_from_config(cfg);
  SweepConfig sw = sweep_from_config(cfg);
  std::optional<Eigen::VectorXd> p0;
  if (!o.initial.empty()) {
    Registry reg(spec.species, spec.field_t, spec.levels);
    p0 = initial_from_config(cfg, reg, o.initial);
  }
  auto rows = sweep_intensity(spec, sw.beam, sw.s, p0 ? &*p0 : nullptr, conv, o.jobs);
  Table t{"sweep", {"s", "steady_error", "cycles", "duration_s", "converged", "errors"}, {}};
  std::vector<std::string> errs;
  for (const auto& r : rows) {
    t.rows.push_back({r.s, r.steady_error, r.cycles, r.duration, static_cast<long>(r.converged), r.error});
    errs.push_back(r.error);
    std::printf("s=%.4g: error %.4e, %ld cycles, %.3f ms %s\n", r.s, r.steady_error, r.cycles,
                r.duration * 1e3, r.error.c_str());
  }
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(t);
  w.set_summary({{"beam", sw.beam}, {"points", static_cast<long>(rows.size())}});
  w.finish(manifest_fields(o, inputs));
  return rows_exit(errs, o.allow_partial);
}

int cmd_species_scan(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  ScanConfig sc = scan_from_config(cfg);
  std::vector<std::string> inputs{o.config};
  for (const auto& e : sc.entries) inputs.push_back(species_path(cfg.species_dir, e.species));
  std::vector<std::string> present;
  for (const auto& p : inputs)
    if (fs::exists(p)) present.push_back(p);
  ConvergenceOptions conv = convergence_from_config(cfg);
  auto rows = cross_species_errors(sc.entries, cfg.species_dir, sc.defaults, conv, o.jobs);
  Table t{"species_scan", {"species", "target", "field_mT", "splitting_hz", "clock_frequency_hz",
                           "min_detuning_hz", "steady_error", "cycles", "converged", "errors"}, {}};
  std::vector<std::string> errs;
  std::vector<double> x, y;
  for (const auto& r : rows) {
    t.rows.push_back({r.species, r.target.str(), r.field_t * 1e3, r.splitting_hz, r.clock_frequency_hz,
                      r.min_detuning_hz, r.steady_error, r.cycles, static_cast<long>(r.converged), r.error});
    errs.push_back(r.error);
    if (r.error.empty()) {
      x.push_back(r.splitting_hz);
      y.push_back(r.steady_error);
    }
    std::printf("%-6s %-5s B=%8.3f mT  error %.4e  %s\n", r.species.c_str(), r.target.str().c_str(),
                r.field_t * 1e3, r.steady_error, r.error.c_str());
  }
  json sum = {{"rows", static_cast<long>(rows.size())}};
  if (x.size() >= 2) {
    sum["loglog_slope"] = loglog_slope(x, y);
    std::printf("log-log slope of error vs splitting: %.3f\n", loglog_slope(x, y));
  }
  RunWriter w(o.out, config_hash(o, present));
  w.add_table(t);
  w.set_summary(sum);
  w.finish(manifest_fields(o, present));
  return rows_exit(errs, o.allow_partial);
}

int cmd_budget(const Options& o) {
  RunConfig cfg = load_run_config(o.config, o.species_dir);
  std::vector<std::string> inputs{o.config};
  std::vector<BudgetRow> rows;
  json sum = json::object();
  if (!cfg.doc.with_prefix("transfer.").empty()) {
    auto tr = transfer_pulse_errors(measured_from_config(cfg));
    rows.insert(rows.end(), tr.begin(), tr.end());
  }
  if (cfg.doc.find("readout")) {
    ReadoutConfig r = readout_from_config(cfg);
    inputs.push_back(species_path(cfg.species_dir, cfg.doc.require("readout").require("species")));
    auto rr = readout_rows(r);
    rows.insert(rows.end(), rr.begin(), rr.end());
    const ThresholdResult th = r.threshold > 0
                                   ? thresholding_error(r.lambda_bright, r.background_mean, 1.0, r.threshold)
                                   : optimal_threshold(r.lambda_bright, r.background_mean);
    const ShelvingResult sh = shelving_failure_and_deshelving(r);
    sum["threshold_k"] = th.k;
    sum["lambda_bright"] = r.lambda_bright;
    sum["background_mean"] = r.background_mean;
    sum["shelving_probability_per_cycle"] = sh.per_cycle;
    sum["shelving_probability_rate_model"] = shelving_probability_rate_model(r);
    sum["shelving_cycles"] = r.cycles;
  }
  auto comp = components_from_config(cfg);
  rows.insert(rows.end(), comp.begin(), comp.end());
  BudgetReport rep = aggregate_budget(rows);

  auto val = [](const std::vector<Contribution>& c, bool applies, bool provided) -> Cell {
    if (!applies || !provided) return NAN;
    return sum_values(c);
  };
  auto unc = [](const std::vector<Contribution>& c, bool applies, bool provided) -> Cell {
    if (!applies || !provided) return NAN;
    return combine_uncertainty(c);
  };
  auto status = [](bool applies, bool provided) -> Cell {
    return std::string(!applies ? "not applicable" : !provided ? "not provided" : "");
  };
  Table t{"budget", {"row", "group", "simulated", "bright", "bright_unc", "bright_status", "dark",
                     "dark_unc", "dark_status"}, {}};
  for (const auto& r : rep.rows)
    t.rows.push_back({r.name, r.group, static_cast<long>(r.simulated),
                      val(r.bright, r.bright_applies, r.bright_provided),
                      unc(r.bright, r.bright_applies, r.bright_provided),
                      status(r.bright_applies, r.bright_provided),
                      val(r.dark, r.dark_applies, r.dark_provided),
                      unc(r.dark, r.dark_applies, r.dark_provided), status(r.dark_applies, r.dark_provided)});
  for (const auto& [g, tot] : rep.groups)
    t.rows.push_back({"Total " + g, g, 0L, tot.bright, tot.bright_unc, std::string("total"), tot.dark,
                      tot.dark_unc, std::string("total")});
  t.rows.push_back({std::string("Total expected error"), std::string("all"), 0L, rep.total.bright,
                    rep.total.bright_unc, std::string("total"), rep.total.dark, rep.total.dark_unc,
                    std::string("total")});
  const std::string text = format_budget(rep);
  RunWriter w(o.out, config_hash(o, inputs));
  w.add_table(t);
  w.add_text("budget.txt", text);
  sum["total_bright"] = rep.total.bright;
  sum["total_dark"] = rep.total.dark;
  w.set_summary(sum);
  w.finish(manifest_fields(o, inputs));
  std::cout << text;
  return ok;
}

int dispatch(const Options& o);

int cmd_check(const Options& o) {
  const fs::path dir(o.check_dir);
  const json m = json::parse(read_file((dir / "manifest.json").string()));
  Options re = options_from_manifest(m);
  const fs::path tmp = fs::temp_directory_path() / ("ionprep-check-" + m.at("config_hash").get<std::string>());
  fs::remove_all(tmp);
  re.out = tmp.string();
  const int code = dispatch(re);
  const json m2 = json::parse(read_file((tmp / "manifest.json").string()));
  int bad = 0;
  if (m2.at("config_hash") != m.at("config_hash")) {
    std::printf("config hash differs: %s vs %s\n", m.at("config_hash").get<std::string>().c_str(),
                m2.at("config_hash").get<std::string>().c_str());
    ++bad;
  }
  for (const auto& [file, h] : m.at("outputs").items()) {
    const bool same = m2.at("outputs").contains(file) && m2.at("outputs").at(file) == h;
    std::printf("%-24s %s\n", file.c_str(), same ? "identical" : "DIFFERS");
    if (!same) ++bad;
  }
  fs::remove_all(tmp);
  if (bad) {
    std::printf("check failed: %d mismatches\n", bad);
    return physics_error;
  }
  std::printf("check passed (rerun exit code %d)\n", code);
  return ok;
}

int dispatch(const Options& o) {
  if (o.command == "levels") return cmd_levels(o);
  if (o.command == "fssp") return cmd_fssp(o);
  if (o.command == "pssp") return cmd_pssp(o);
  if (o.command == "alt") return cmd_alt(o);
  if (o.command == "sweep") return cmd_sweep(o);
  if (o.command == "species-scan") return cmd_species_scan(o);
  if (o.command == "budget") return cmd_budget(o);
  if (o.command == "check") return cmd_check(o);
  throw ConfigError("unknown command " + o.command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ionprep: optical-pumping state preparation simulator"};
  app.require_subcommand(1);
  Options o;
  double field = NAN;

  auto common = [&](CLI::App* c, bool needs_config) {
    auto* cf = c->add_option("--config", o.config, "run configuration file");
    if (needs_config) cf->required()->check(CLI::ExistingFile);
    c->add_option("--species-dir", o.species_dir, "species data directory (else $IONPREP_SPECIES_DIR)");
    c->add_option("--out", o.out, "output directory")->default_val("out");
    c->add_option("--jobs", o.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
    c->add_flag("--allow-partial", o.allow_partial, "exit 0 despite non-convergence or failed points");
  };
  auto* levels = app.add_subcommand("levels", "dressed-state energies");
  common(levels, false);
  levels->add_option("--species", o.species, "species name, e.g. Ca43");
  levels->add_option("--field", field, "static field in mT");
  levels->add_option("--levels", o.levels, "level names (default: ground level)");
  const std::pair<const char*, const char*> runs[] = {
      {"fssp", "pulsed frequency-selective state preparation to convergence"},
      {"pssp", "polarisation-selective preparation vs polarisation impurity"},
      {"sweep", "FSSP error and duration vs pump intensity"}};
  for (const auto& [name, help] : runs) {
    auto* c = app.add_subcommand(name, help);
    common(c, true);
    c->add_option("--initial", o.initial, "initial ground state F,M (default from config)");
    c->add_option("--field", field, "override the static field, mT");
    if (std::string(name) == "fssp")
      c->add_flag("--all-states", o.all_states, "1/e cycle counts for every initial state");
  }
  auto* alt = app.add_subcommand("alt", "alternative multi-tone scheme at low and high field");
  common(alt, true);
  auto* scan = app.add_subcommand("species-scan", "FSSP error across species");
  common(scan, true);
  auto* budget = app.add_subcommand("budget", "readout and transfer error budget");
  common(budget, true);
  auto* check = app.add_subcommand("check", "re-run a previous output directory and compare");
  check->add_option("dir", o.check_dir, "output directory holding manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : config_error;
  }
  o.command = app.get_subcommands().front()->get_name();
  if (!std::isnan(field)) o.field_mT = field;
  try {
    return dispatch(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return config_error;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "not converged: %s\n", e.what());
    return not_converged;
  } catch (const LambdaGuardError& e) {
    std::fprintf(stderr, "lambda guard: %s\n", e.what());
    return physics_error;
  } catch (const PhysicsError& e) {
    std::fprintf(stderr, "physics error: %s\n", e.what());
    return physics_error;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "manifest error: %s\n", e.what());
    return config_error;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return physics_error;
  }
}
