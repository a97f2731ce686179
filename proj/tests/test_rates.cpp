#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "ionprep/linalg.hpp"
#include "properties.hpp"

using namespace ionprep;

namespace {

// Toy ion, I = 3/2, whose stretched S1/2 <-> P3/2 pair is closed under sigma+.
SpeciesData toy_species() {
  const char* text = R"(
[species]
name = Toy
nuclear_spin = 1.5
nuclear_g = 0
ground = S12
[level.S12]
term = S1/2
n = 1
L = 0
J = 0.5
A_mhz = 500
g_J = 2.0
lifetime_s = inf
[level.P32]
term = P3/2
n = 1
L = 1
J = 1.5
A_mhz = 50
g_J = 1.3333333333
lifetime_s = 7e-9
[transition.cyc]
lower = S12
upper = P32
wavelength_nm = 400
branching = 1
)";
  return parse_species(parse_ini(text));
}

Eigen::MatrixXd random_generator(int n, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && u(rng) < 0.4) G(i, j) = scale * std::pow(10.0, -3 * u(rng));
  for (int j = 0; j < n; ++j) G(j, j) = -G.col(j).sum();
  return G;
}

// Stationary vector from the matrix-tree theorem: sum over spanning in-trees.
Eigen::VectorXd tree_stationary(const Eigen::MatrixXd& G) {
  const int n = static_cast<int>(G.rows());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  std::vector<int> parent(n);
  for (int root = 0; root < n; ++root) {
    std::function<void(int)> rec = [&](int k) {
      if (k == n) {
        double prod = 1.0;
        for (int v = 0; v < n; ++v) {
          if (v == root) continue;
          int x = v, steps = 0;
          while (x != root && steps <= n) x = parent[x], ++steps;
          if (x != root) return;
          prod *= G(parent[v], v);
        }
        w(root) += prod;
        return;
      }
      if (k == root) return rec(k + 1);
      for (int p = 0; p < n; ++p)
        if (p != k) parent[k] = p, rec(k + 1);
    };
    rec(0);
  }
  return w / w.sum();
}

}  // namespace

TEST_CASE("rate-matrix columns sum to zero") {
  for (const char* cfg : {"ca43_fssp.ini", "ca43_fssp_45deg.ini", "ca43_pssp.ini"}) {
    CAPTURE(cfg);
    CHECK(props::column_sum_dev(scheme_from_config(props::config(cfg))) < 1e-10);
  }
}

TEST_CASE("stimulated rates are symmetric and non-negative off the diagonal") {
  SchemeSpec spec = scheme_from_config(props::config("ca43_fssp.ini"));
  Registry reg(spec.species, spec.field_t, spec.levels);
  for (const auto& st : spec.cycle) {
    if (st.kind != StepKind::laser) continue;
    LaserBeam b = st.beams[0];
    RateMatrix with = build_rate_matrix({b}, reg);
    b.s = 0;
    RateMatrix without = build_rate_matrix({b}, reg);
    Eigen::MatrixXd S = with.R - without.R;
    S.diagonal().setZero();
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * S.cwiseAbs().maxCoeff());
    Eigen::MatrixXd off = with.R;
    off.diagonal().setZero();
    CHECK(off.minCoeff() >= 0.0);
  }
}

TEST_CASE("closed two-level steady state is s / (2 (1 + s))") {
  SpeciesData sp = toy_species();
  Registry reg(sp, 1e-4, {"S12", "P32"});
  for (double s : {0.01, 0.3, 1.0, 7.0}) {
    LaserBeam b;
    b.name = "cyc";
    b.transition = "cyc";
    b.anchor.lower = StateLabel{4, 4};
    b.anchor.upper = StateLabel{6, 6};
    b.s = s;
    b.pol = Polarization::from_weights(0, 0, 1);
    SteadyState ss = steady_state(build_rate_matrix({b}, reg));
    REQUIRE(ss.vectors.size() == 1);
    const int e = reg.index("P32", {6, 6});
    CHECK(ss.vectors[0](e) == doctest::Approx(s / (2 * (1 + s))).epsilon(1e-9));
  }
}

TEST_CASE("matrix exponential agrees with an ODE integration on 50 states") {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd G = random_generator(50, rng, 1e7);
  Eigen::VectorXd p0 = Eigen::VectorXd::Zero(50);
  p0(0) = 0.5;
  p0(17) = 0.5;
  for (double t : {1e-8, 1e-7, 2e-6}) {
    Eigen::VectorXd a = stochastic_propagator<double>(G, t) * p0;
    Eigen::VectorXd b = integrate_linear_ode<double>(G, p0, t);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("steady state matches matrix-tree enumeration for small chains") {
  std::mt19937_64 rng(99);
  for (int n = 2; n <= 4; ++n)
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::MatrixXd G;
      Eigen::VectorXd w;
      // resample until the chain is irreducible
      do {
        G = random_generator(n, rng, 1.0);
        for (int i = 0; i < n; ++i) G((i + 1) % n, i) += 0.1, G(i, i) -= 0.1;
        w = tree_stationary(G);
      } while (!(w.minCoeff() > 0));
      RateMatrix R;
      R.R = G;
      SteadyState ss = steady_state(R);
      REQUIRE(ss.vectors.size() == 1);
      CHECK((ss.vectors[0] - w).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("off-resonant scattering falls as 1 / detuning^2") {
  CHECK(props::inverse_square_dev(1e9) < 0.02);
  CHECK(props::inverse_square_dev(3e9) < 0.02);
}

TEST_CASE("propagators preserve normalisation") {
  SchemeSpec spec = scheme_from_config(props::config("ca43_fssp.ini"));
  Scheme s = build_scheme(spec);
  CHECK(props::normalization_drift(s, 1000) < 1e-9);
  for (const auto& st : s.cycle.steps) {
    CHECK((st.P.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(st.P.minCoeff() >= 0.0);
  }
}

TEST_CASE("two beams exciting the same upper states in one step are rejected") {
  RunConfig cfg = props::config("ca43_pssp.ini");
  SchemeSpec spec = scheme_from_config(cfg);
  Registry reg(spec.species, spec.field_t, spec.levels);
  const LaserBeam car = spec.cycle[0].beams[0], sb = spec.cycle[1].beams[0];
  CHECK_THROWS_AS(build_rate_matrix({car, sb}, reg), LambdaGuardError);
}

TEST_CASE("polarisation weights") {
  auto p = linear_polarization(constants::pi / 2);
  CHECK(p.weight(-1) == doctest::Approx(0.5));
  CHECK(p.weight(0) == doctest::Approx(0.0));
  CHECK(p.weight(1) == doctest::Approx(0.5));
  auto q = linear_polarization(0.0);
  CHECK(q.weight(0) == doctest::Approx(1.0));
  auto w = Polarization::from_weights(0.25, 0.25, 0.5);
  CHECK(w.weight(1) == doctest::Approx(0.5));
  CHECK(w.mirrored().weight(-1) == doctest::Approx(0.5));
  CHECK_THROWS(Polarization::from_weights(1, 1, 2));
  CHECK_THROWS(linear_polarization(2.0));
}
