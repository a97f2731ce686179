// Acceptance runner: one PASS/FAIL line per criterion A1..A10.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>

#include "ionprep/ini.hpp"
#include "properties.hpp"

#ifndef IONPREP_CLI
#define IONPREP_CLI "ionprep"
#endif

using namespace ionprep;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double x, double lo, double hi) { return x >= lo && x <= hi; }

SchemeResult converge(const char* cfg_name) {
  RunConfig cfg = props::config(cfg_name);
  Scheme s = build_scheme(scheme_from_config(cfg));
  return run_to_convergence(s, initial_from_config(cfg, *s.reg), convergence_from_config(cfg));
}

Verdict a1() {
  Verdict v;
  auto t0 = std::chrono::steady_clock::now();
  SpeciesData sp = props::species("Ca43");
  ClockPoint cp = clock_field(sp.level("S12"), sp, {6, 2}, {8, 2}, 1e-3, 0.1);
  const double dt = seconds_since(t0);
  v.require(cp.found, "clock point found");
  v.require(std::abs(cp.field_t - 28.8e-3) <= 0.3e-3, fmt("B* = %.4f mT", cp.field_t * 1e3));
  v.require(std::abs(cp.frequency_hz - 3.123e9) <= 3e6, fmt("f = %.6f GHz", cp.frequency_hz / 1e9));
  v.require(dt < 1.0, fmt("%.3f s", dt));
  return v;
}

Verdict a2() {
  Verdict v;
  auto t0 = std::chrono::steady_clock::now();
  SchemeResult ideal = converge("ca43_fssp.ini");
  const double dt = seconds_since(t0);
  SchemeResult charz = converge("ca43_fssp_characterized.ini");
  v.require(ideal.converged, "converged");
  v.require(within(ideal.steady_error, 3e-4, 1.3e-3), fmt("ideal error %.3e", ideal.steady_error));
  const double shift = charz.steady_error - ideal.steady_error;
  v.require(within(shift, 0.5e-4, 2e-4), fmt("characterized shift %+.3e", shift));
  v.require(dt < 30.0, fmt("%.2f s", dt));
  return v;
}

Verdict a3() {
  Verdict v;
  const double plus = converge("ca43_fssp.ini").steady_error;
  const double minus = converge("ca43_fssp_mirror.ini").steady_error;
  v.require(within(minus, 0.6e-4, 2.6e-4), fmt("|4,-4> error %.3e", minus));
  v.require(within(plus / minus, 3.0, 8.0), fmt("ratio %.2f", plus / minus));
  return v;
}

Verdict a4() {
  Verdict v;
  const double e90 = converge("ca43_fssp.ini").steady_error;
  const double e45 = converge("ca43_fssp_45deg.ini").steady_error;
  v.require(within(e45, 0.9e-3, 2.3e-3), fmt("45 deg error %.3e", e45));
  v.require(within(e45 / e90, 2.0, 4.0), fmt("ratio %.2f", e45 / e90));
  return v;
}

Verdict a5() {
  Verdict v;
  RunConfig cfg = props::config("species_scan.ini");
  ScanConfig sc = scan_from_config(cfg);
  auto rows = cross_species_errors(sc.entries, props::species_dir(), sc.defaults, convergence_from_config(cfg), 3);
  std::vector<double> x, y;
  for (const auto& r : rows) {
    v.require(r.error.empty(), r.species + " ran" + (r.error.empty() ? "" : " (" + r.error + ")"));
    x.push_back(r.splitting_hz);
    y.push_back(r.steady_error);
    if (r.species == "Mg25")
      v.require(within(r.steady_error, 0.5 * 1.1e-2, 2 * 1.1e-2), fmt("Mg25 %.3e", r.steady_error));
    if (r.species == "Ba137")
      v.require(within(r.steady_error, 0.5 * 1.4e-5, 3 * 1.4e-5), fmt("Ba137 %.3e", r.steady_error));
    if (r.species == "Ca43") v.detail += fmt("; Ca43 %.3e", r.steady_error);
  }
  const double slope = loglog_slope(x, y);
  v.require(within(slope, -2.6, -1.4), fmt("slope %.2f", slope));
  return v;
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / ra.size();
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / rb.size();
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Verdict a6() {
  Verdict v;
  RunConfig cfg = props::config("ca43_fssp.ini");
  Scheme s = build_scheme(scheme_from_config(cfg));
  auto rows = prepare_from_all_states(s, convergence_from_config(cfg).max_cycles, 4);
  bool all = rows.size() == 16;
  long worst = 0, target_cycles = -1;
  std::vector<double> cycles, dist;
  for (const auto& r : rows) {
    all = all && r.cycles >= 0;
    worst = std::max(worst, r.cycles);
    if (r.label == s.target) target_cycles = r.cycles;
    cycles.push_back(double(r.cycles));
    dist.push_back(std::abs(r.label.M() - s.target.M()) + std::abs(r.label.F() - s.target.F()));
  }
  v.require(all, "all 16 states reach 1/e");
  v.require(target_cycles == 0, fmt("target start %.0f cycles", double(target_cycles)));
  v.require(worst <= 10, fmt("max cycles to 1/e %.0f", double(worst)));
  const double rho = spearman(dist, cycles);
  v.require(rho > 0.5, fmt("rank correlation with |M-4|+|F-4| %.2f", rho));
  return v;
}

Verdict a7() {
  Verdict v;
  AlternativeSpec a = alternative_from_config(props::config("ca43_alt.ini"));
  AlternativeResult r = run_alternative(a, 2);
  v.require(r.low.steady_error <= 5e-4, fmt("low field %.3e", r.low.steady_error));
  v.require(r.high.steady_error >= 5e-3, fmt("high field %.3e", r.high.steady_error));
  v.require(r.ratio >= 10.0, fmt("ratio %.1f", r.ratio));
  return v;
}

Verdict a8() {
  Verdict v;
  RunConfig cfg = props::config("ca43_budget.ini");
  ReadoutConfig r = readout_from_config(cfg);
  const double off = off_resonant_shelving_error(r);
  v.require(std::abs(off / 2.5e-4 - 1) <= 0.3, fmt("off-resonant shelving %.3e", off));
  ThresholdResult th = optimal_threshold(r.lambda_bright, r.background_mean);
  v.require(std::abs(th.bright_miss / 3.4e-5 - 1) <= 0.2, fmt("threshold bright %.3e", th.bright_miss));
  v.require(std::abs(th.dark_false / 3.4e-5 - 1) <= 0.2, fmt("threshold dark %.3e", th.dark_false));
  BudgetReport rep = aggregate_budget(components_from_config(props::config("ca43_budget_components.ini")));
  v.require(std::abs(rep.total.bright / 42e-5 - 1) <= 0.15, fmt("total bright %.2fe-5", rep.total.bright * 1e5));
  v.require(std::abs(rep.total.dark / 34e-5 - 1) <= 0.15, fmt("total dark %.2fe-5", rep.total.dark * 1e5));
  return v;
}

Verdict a9() {
  Verdict v;
  double cs = 0.0;
  for (const char* c : {"ca43_fssp.ini", "ca43_fssp_45deg.ini", "ca43_pssp.ini"})
    cs = std::max(cs, props::column_sum_dev(scheme_from_config(props::config(c))));
  v.require(cs < 1e-10, fmt("column sums %.1e", cs));
  Scheme s = build_scheme(scheme_from_config(props::config("ca43_fssp.ini")));
  const double norm = props::normalization_drift(s, 1000);
  v.require(norm < 1e-9, fmt("normalisation %.1e", norm));
  double br = 0.0;
  for (const char* n : {"Ca43", "Mg25", "Ba137"}) br = std::max(br, props::breit_rabi_max_rel_dev(props::species(n)));
  v.require(br < 1e-9, fmt("Breit-Rabi %.1e", br));
  const double rabi = props::rabi_vs_integrator_max_dev(1000);
  v.require(rabi < 1e-6, fmt("Rabi vs integrator %.1e", rabi));
  const double inv = props::inverse_square_dev(1e9);
  v.require(inv < 0.02, fmt("1/detuning^2 %.2e", inv));
  const double pssp = props::pssp_eps0_error();
  v.require(pssp < 1e-5, fmt("PSSP eps=0 %.2e", pssp));
  auto mc = props::poisson_threshold_mc(21.0, 0.585, 6);
  v.require(mc.bright_z < 3 && mc.dark_z < 3, fmt("Poisson MC %.2f sigma", std::max(mc.bright_z, mc.dark_z)));
  return v;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IONPREP_CLI) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Verdict a10() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("ionprep-accept-" + std::to_string(::getpid()));
  fs::remove_all(root);
  auto cfg = [](const char* n) { return props::source_path(std::string("configs/") + n); };
  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"levels", "levels --species Ca43 --field 28.8 --levels S12 P12 P32 D32 D52"},
      {"fssp", "fssp --config " + cfg("ca43_fssp.ini") + " --all-states"},
      {"pssp", "pssp --config " + cfg("ca43_pssp.ini")},
      {"alt", "alt --config " + cfg("ca43_alt.ini")},
      {"sweep", "sweep --config " + cfg("ca43_fssp.ini")},
      {"species-scan", "species-scan --config " + cfg("species_scan.ini")},
      {"budget", "budget --config " + cfg("ca43_budget.ini")},
  };
  int files = 0, diffs = 0;
  for (const auto& [name, args] : cmds) {
    const fs::path a = root / (name + ".1"), b = root / (name + ".2");
    const int ra = run_cli(args + " --jobs 4 --allow-partial --out " + a.string());
    const int rb = run_cli(args + " --jobs 1 --allow-partial --out " + b.string());
    if (ra != 0 || rb != 0) {
      v.require(false, name + " exit " + std::to_string(ra) + "/" + std::to_string(rb));
      continue;
    }
    for (const auto& e : fs::directory_iterator(a)) {
      const std::string f = e.path().filename().string();
      if (f == "manifest.json") continue;  // holds the output directory
      ++files;
      if (read_file(e.path().string()) != read_file((b / f).string())) {
        ++diffs;
        v.require(false, name + "/" + f + " differs");
      }
    }
    v.require(run_cli("check " + a.string()) == 0, name + " check");
  }
  v.detail = std::to_string(files) + " files compared, " + std::to_string(diffs) + " differ; " + v.detail;
  fs::remove_all(root);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5},
      {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10}};
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::printf("%-4s %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
