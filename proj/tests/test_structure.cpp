#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ionprep/angular.hpp"
#include "properties.hpp"

using namespace ionprep;

TEST_CASE("Breit-Rabi closed form matches diagonalisation for J=1/2 ground levels") {
  for (const char* name : {"Ca43", "Mg25", "Ba137"}) {
    CAPTURE(name);
    CHECK(props::breit_rabi_max_rel_dev(props::species(name)) < 1e-9);
  }
}

TEST_CASE("3j symbols: orthogonality sums") {
  for (int tj1 = 0; tj1 <= 7; ++tj1)
    for (int tj2 = 0; tj2 <= 4; ++tj2)
      for (int tj3 = std::abs(tj1 - tj2); tj3 <= tj1 + tj2; tj3 += 2)
        for (int tm3 = -tj3; tm3 <= tj3; tm3 += 2) {
          double sum = 0.0;
          for (int tm1 = -tj1; tm1 <= tj1; tm1 += 2) {
            const int tm2 = -tm1 - tm3;
            if (std::abs(tm2) > tj2) continue;
            const double w = wigner_3j_twice(tj1, tj2, tj3, tm1, tm2, tm3);
            sum += w * w;
          }
          CHECK(sum == doctest::Approx(1.0 / (tj3 + 1)).epsilon(1e-12));
        }
}

TEST_CASE("3j symbols: selection rules and a known value") {
  CHECK(wigner_3j(1, 1, 1, 1, 0, 0) == 0.0);
  CHECK(wigner_3j(1, 1, 2, 1, 1, 1) == 0.0);
  // (1 1 0; 1 -1 0) = 1/sqrt(3)
  CHECK(wigner_3j(1, 1, 0, 1, -1, 0) == doctest::Approx(1.0 / std::sqrt(3.0)));
}

TEST_CASE("zero-field energies reduce to the hyperfine interval rule") {
  SpeciesData sp = props::species("Ca43");
  const auto st = dressed_states(sp.level("S12"), sp, 0.0);
  const double A = sp.level("S12").A_hz;
  for (const auto& s : st) {
    const double F = s.label.F(), I = sp.I(), J = 0.5;
    const double expect = 0.5 * A * (F * (F + 1) - I * (I + 1) - J * (J + 1));
    CHECK(s.frequency_hz() == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("labels are stable when the continuation step is halved") {
  SpeciesData sp = props::species("Ca43");
  for (const char* lvl : {"S12", "P12", "P32", "D32", "D52"}) {
    CAPTURE(lvl);
    TrackingOptions a, b;
    b.max_step_t = a.max_step_t / 2;
    auto s1 = dressed_states(sp.level(lvl), sp, 28.8e-3, a);
    auto s2 = dressed_states(sp.level(lvl), sp, 28.8e-3, b);
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i) {
      CHECK(s1[i].label == s2[i].label);
      CHECK(s1[i].omega == doctest::Approx(s2[i].omega).epsilon(1e-12));
    }
  }
}

TEST_CASE("every label appears once per level") {
  SpeciesData sp = props::species("Ca43");
  for (const char* lvl : {"S12", "P32", "D52"}) {
    auto st = dressed_states(sp.level(lvl), sp, 28.8e-3);
    std::set<std::pair<int, int>> seen;
    for (const auto& s : st) seen.insert({s.label.twoF, s.label.twoM});
    CHECK(seen.size() == st.size());
  }
}

TEST_CASE("clock point of the 3,+1 <-> 4,+1 transition") {
  SpeciesData sp = props::species("Ca43");
  ClockPoint cp = clock_field(sp.level("S12"), sp, StateLabel{6, 2}, StateLabel{8, 2}, 1e-3, 0.1);
  REQUIRE(cp.found);
  CHECK(cp.field_t == doctest::Approx(28.8e-3).epsilon(0.3 / 28.8));
  CHECK(std::abs(cp.frequency_hz - 3.123e9) < 3e6);
  // first derivative vanishes
  const double h = 1e-6;
  const double f1 = transition_frequency_hz(sp.level("S12"), sp, {6, 2}, {8, 2}, cp.field_t - h);
  const double f2 = transition_frequency_hz(sp.level("S12"), sp, {6, 2}, {8, 2}, cp.field_t + h);
  CHECK(std::abs(f2 - f1) / (2 * h) < 1e3);  // Hz per T
}

TEST_CASE("E1 strengths out of each upper state sum to one") {
  SpeciesData sp = props::species("Ca43");
  Registry reg(sp, 28.8e-3, {"S12", "P12", "P32", "D32", "D52"});
  for (const auto& c : reg.couplings()) {
    CAPTURE(c.spec.name);
    for (int u = 0; u < c.upper_count; ++u) {
      double sum = 0.0;
      for (int q = 0; q < 3; ++q) sum += c.d2[q].row(u).sum();
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("stretched-state cycling transition has unit strength") {
  SpeciesData sp = props::species("Ca43");
  Registry reg(sp, 28.8e-3, {"S12", "P32", "D32", "D52"});
  const auto& c = reg.coupling("393");
  const int l = reg.index("S12", {8, 8}) - c.lower_offset;
  const int u = reg.index("P32", {10, 10}) - c.upper_offset;
  CHECK(c.d2[2](u, l) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("labels parse and print") {
  CHECK(parse_label("4,-3") == StateLabel{8, -6});
  CHECK(parse_label("3/2,-1/2") == StateLabel{3, -1});
  CHECK(parse_label("1.5,0.5") == StateLabel{3, 1});
  CHECK(StateLabel{8, -6}.str() == "4,-3");
  CHECK_THROWS(parse_label("4"));
}

TEST_CASE("species files validate") {
  for (const char* name : {"Ca43", "Mg25", "Ba137"}) {
    SpeciesData sp = props::species(name);
    CHECK_NOTHROW(validate(sp));
    CHECK(sp.ground_splitting_hz() > 1e9);
  }
}
