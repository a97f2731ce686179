#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "properties.hpp"

using namespace ionprep;

namespace {

Scheme fssp(const char* cfg = "ca43_fssp.ini") { return build_scheme(scheme_from_config(props::config(cfg))); }

}  // namespace

TEST_CASE("cycle matrix is column stochastic") {
  Scheme s = fssp();
  CHECK((s.M.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(s.M.minCoeff() >= 0.0);
}

TEST_CASE("fixed point of the cycle matrix is invariant") {
  Scheme s = fssp();
  double fp = 0, lam2 = 0;
  cycle_spectrum(s, fp, lam2);
  CHECK(fp > 0.0);
  CHECK(fp < 1.0);
  CHECK(lam2 < 1.0);
  // long power iteration lands on the same error
  Eigen::VectorXd p = uniform_ground(*s.reg);
  for (int k = 0; k < 40000; ++k) p = s.M * p;
  CHECK(1.0 - p(s.target_index) == doctest::Approx(fp).epsilon(1e-6));
}

TEST_CASE("convergence trace: times, monotone cycles and the stop rule") {
  Scheme s = fssp();
  ConvergenceOptions c;
  SchemeResult r = run_to_convergence(s, uniform_ground(*s.reg), c);
  REQUIRE(r.converged);
  REQUIRE(r.trace.error.size() == static_cast<size_t>(r.cycles + 1));
  CHECK(r.trace.error.front() == doctest::Approx(15.0 / 16.0));
  for (size_t k = 1; k < r.trace.time.size(); ++k)
    CHECK(r.trace.time[k] == doctest::Approx(k * s.cycle.cycle_duration()).epsilon(1e-12));
  const size_t n = r.trace.error.size();
  CHECK(std::abs(r.trace.error[n - 1] - r.trace.error[n - 2]) < c.threshold);
  CHECK(r.steady_error == r.trace.error.back());
  CHECK(r.duration == doctest::Approx(r.trace.time.back()));
}

TEST_CASE("cycle cap reports non-convergence") {
  Scheme s = fssp();
  ConvergenceOptions c;
  c.max_cycles = 20;
  SchemeResult r = run_to_convergence(s, uniform_ground(*s.reg), c);
  CHECK_FALSE(r.converged);
  CHECK(r.cycles == 20);
}

TEST_CASE("starting in the target gives zero cycles to 1/e") {
  Scheme s = fssp();
  auto rows = prepare_from_all_states(s, 100000, 4);
  REQUIRE(rows.size() == 16);
  for (const auto& row : rows) {
    CAPTURE(row.label.str());
    if (row.label == s.target) {
      CHECK(row.cycles == 0);
      CHECK(row.initial_error == 0.0);
    } else {
      CHECK(row.cycles > 0);
      CHECK(row.initial_error == 1.0);
    }
  }
}

TEST_CASE("mirroring twice is the identity") {
  SchemeSpec spec = scheme_from_config(props::config("ca43_fssp.ini"));
  SchemeSpec mm = mirror(mirror(spec));
  CHECK(mm.target == spec.target);
  Scheme a = build_scheme(spec), b = build_scheme(mm);
  CHECK((a.M - b.M).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generated default cycle equals the shipped configuration") {
  SchemeSpec spec = scheme_from_config(props::config("ca43_fssp.ini"));
  SchemeSpec gen = default_fssp_spec(spec.species, spec.field_t, spec.target);
  gen.mw = spec.mw;
  Scheme a = build_scheme(spec), b = build_scheme(gen);
  CHECK((a.M - b.M).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("PSSP with pure polarisation leaves the target dark") {
  CHECK(props::pssp_eps0_error() < 1e-5);
}

TEST_CASE("PSSP error is nondecreasing in the polarisation impurity") {
  RunConfig cfg = props::config("ca43_pssp.ini");
  PsspRun run = pssp_from_config(cfg);
  double last = -1.0;
  for (double eps : {0.0, 1e-4, 1e-3, 1e-2}) {
    PsspResult r = run_pssp(run.spec, eps, nullptr, convergence_from_config(cfg));
    CAPTURE(eps);
    CHECK(r.corrected.steady_error >= last);
    last = r.corrected.steady_error;
  }
  PsspResult worst = run_pssp(run.spec, 1.0, nullptr, convergence_from_config(cfg));
  CHECK(worst.corrected.steady_error > 0.5);
}

TEST_CASE("impurity weights") {
  auto p = impure_polarization(0.1, +1);
  CHECK(p.weight(1) == doctest::Approx(0.9));
  CHECK(p.weight(0) == doctest::Approx(0.05));
  CHECK(p.weight(-1) == doctest::Approx(0.05));
  CHECK(impure_polarization(0.1, -1).weight(-1) == doctest::Approx(0.9));
}

TEST_CASE("intensity sweep reports each point") {
  SchemeSpec spec = scheme_from_config(props::config("ca43_fssp.ini"));
  auto rows = sweep_intensity(spec, "397", {0.05, 0.15}, nullptr, {}, 2);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    CHECK(r.converged);
  }
  CHECK(rows[1].duration < rows[0].duration);
  auto bad = sweep_intensity(spec, "nope", {0.05}, nullptr, {}, 1);
  CHECK_FALSE(bad[0].error.empty());
}

TEST_CASE("alternative scheme: equal pulse settings at both fields") {
  AlternativeSpec a = alternative_from_config(props::config("ca43_alt.ini"));
  SchemeSpec lo = alternative_spec(a, false), hi = alternative_spec(a, true);
  REQUIRE(lo.cycle.size() == hi.cycle.size());
  for (size_t i = 0; i < lo.cycle.size(); ++i) {
    CHECK(lo.cycle[i].duration == hi.cycle[i].duration);
    for (size_t j = 0; j < lo.cycle[i].beams.size(); ++j)
      CHECK(lo.cycle[i].beams[j].s == hi.cycle[i].beams[j].s);
  }
  AlternativeResult r = run_alternative(a, 2);
  CHECK(r.low.cycles == a.cycles);
  CHECK(r.high.cycles == a.cycles);
  CHECK(r.low.trace.error.back() == r.low.steady_error);
}

TEST_CASE("log-log slope of an exact power law") {
  CHECK(loglog_slope({1, 2, 4}, {1, 0.25, 0.0625}) == doctest::Approx(-2.0));
}

TEST_CASE("clock-field search across species") {
  ScanConfig sc = scan_from_config(props::config("species_scan.ini"));
  REQUIRE(sc.entries.size() == 3);
  auto rows = cross_species_errors(sc.entries, props::species_dir(), sc.defaults, {}, 3);
  for (const auto& r : rows) {
    CAPTURE(r.species);
    CHECK(r.error.empty());
    CHECK(r.steady_error > 0.0);
    CHECK(r.min_detuning_hz > 1e9);
  }
}

TEST_CASE("minimum detuning of the FSSP pump from the target transitions") {
  RunConfig cfg = props::config("ca43_fssp.ini");
  SchemeSpec spec = scheme_from_config(cfg);
  Scheme s = build_scheme(spec);
  const LaserBeam& pump = spec.cycle[3].beams[0];
  CHECK(target_min_detuning_hz(s, pump) == doctest::Approx(2.4936e9).epsilon(1e-3));
}
