#include "ionprep/species.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace ionprep {

const LevelSpec& SpeciesData::level(const std::string& n) const {
  for (const auto& l : levels)
    if (l.name == n) return l;
  throw ConfigError(name + ": unknown level '" + n + "'");
}

bool SpeciesData::has_level(const std::string& n) const {
  return std::any_of(levels.begin(), levels.end(), [&](const auto& l) { return l.name == n; });
}

const TransitionSpec& SpeciesData::transition(const std::string& n) const {
  for (const auto& t : transitions)
    if (t.name == n) return t;
  throw ConfigError(name + ": unknown transition '" + n + "'");
}

const TransitionSpec* SpeciesData::transition_between(const std::string& lo,
                                                      const std::string& up) const {
  for (const auto& t : transitions)
    if (t.lower == lo && t.upper == up) return &t;
  return nullptr;
}

double SpeciesData::ground_splitting_hz() const {
  const auto& g = level(ground);
  return std::abs(g.A_hz) * (I() + 0.5);
}

static int twice(double x, const std::string& where) {
  double t = 2.0 * x;
  if (std::abs(t - std::round(t)) > 1e-9 || t < 0)
    throw ConfigError(where + ": expected a non-negative half-integer, got " + std::to_string(x));
  return static_cast<int>(std::lround(t));
}

void validate(const SpeciesData& s) {
  if (s.twoI <= 1) throw ConfigError(s.name + ": nuclear spin must exceed 1/2");
  if (!s.has_level(s.ground)) throw ConfigError(s.name + ": ground level missing");
  for (const auto& l : s.levels) {
    if (l.twoJ < 1) throw ConfigError(s.name + "/" + l.name + ": J must be >= 1/2");
    if (!(l.lifetime_s > 0)) throw ConfigError(s.name + "/" + l.name + ": lifetime must be > 0");
    if (l.B_hz != 0.0 && (l.twoJ < 2 || s.twoI < 2))
      throw ConfigError(s.name + "/" + l.name +
                        ": quadrupole constant requires J >= 1 and I >= 1");
  }
  std::map<std::string, double> branch_sum;
  for (const auto& t : s.transitions) {
    if (!s.has_level(t.lower) || !s.has_level(t.upper))
      throw ConfigError(s.name + "/" + t.name + ": references unknown level");
    if (t.lower == t.upper) throw ConfigError(s.name + "/" + t.name + ": levels must differ");
    if (!(t.wavelength_nm > 0)) throw ConfigError(s.name + "/" + t.name + ": wavelength <= 0");
    const double g = t.branching / s.level(t.upper).lifetime_s;
    if (std::abs(g - t.gamma) > 1e-6 * g)
      throw ConfigError(s.name + "/" + t.name + ": linewidth inconsistent with branching/lifetime");
    branch_sum[t.upper] += t.branching;
  }
  for (const auto& [lvl, sum] : branch_sum)
    if (std::abs(sum - 1.0) > 1e-10)
      throw ConfigError(s.name + "/" + lvl + ": branching fractions sum to " +
                        std::to_string(sum));
}

SpeciesData parse_species(const IniDocument& doc) {
  SpeciesData s;
  const auto& sp = doc.require("species");
  s.name = sp.require("name");
  s.twoI = twice(sp.number("nuclear_spin"), "[species] nuclear_spin");
  s.g_I = sp.number("nuclear_g");
  s.ground = sp.require("ground");
  s.citation = sp.get("citation").value_or("");

  for (const auto* sec : doc.with_prefix("level.")) {
    LevelSpec l;
    l.name = sec->name.substr(6);
    l.term = sec->get("term").value_or(l.name);
    l.n = static_cast<int>(sec->number_or("n", 0));
    l.L = static_cast<int>(sec->number_or("L", 0));
    l.twoJ = twice(sec->number("J"), "[" + sec->name + "] J");
    l.A_hz = sec->number("A_mhz") * 1e6;
    l.B_hz = sec->number_or("B_mhz", 0.0) * 1e6;
    l.g_J = sec->number("g_J");
    l.lifetime_s = sec->number("lifetime_s");
    s.levels.push_back(l);
  }
  for (const auto* sec : doc.with_prefix("transition.")) {
    TransitionSpec t;
    t.name = sec->name.substr(11);
    t.lower = sec->require("lower");
    t.upper = sec->require("upper");
    t.wavelength_nm = sec->number("wavelength_nm");
    t.branching = sec->number("branching");
    if (!s.has_level(t.upper))
      throw ConfigError(doc.source + ": transition " + t.name + " references unknown level");
    const double tau = s.level(t.upper).lifetime_s;
    t.gamma_total = 1.0 / tau;
    t.gamma = t.branching / tau;
    if (auto lw = sec->get("linewidth_mhz")) {
      // optional cross-check of the tabulated partial linewidth
      double g = constants::two_pi * parse_number(*lw, sec->name + " linewidth_mhz") * 1e6;
      if (std::abs(g - t.gamma) > 1e-6 * t.gamma)
        throw ConfigError(doc.source + ": " + t.name +
                          " linewidth_mhz inconsistent with branching / lifetime");
    }
    const double lam = t.wavelength_nm * 1e-9;
    t.saturation_w_m2 = constants::pi * constants::planck * constants::speed_of_light *
                        t.gamma_total / (3.0 * lam * lam * lam);
    s.transitions.push_back(t);
  }
  validate(s);
  return s;
}

SpeciesData load_species(const std::string& path) { return parse_species(load_ini(path)); }

std::string species_path(const std::string& dir, const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return dir + "/" + lower + ".ini";
}

SpeciesData load_species_by_name(const std::string& dir, const std::string& name) {
  auto s = load_species(species_path(dir, name));
  if (s.name != name)
    throw ConfigError(species_path(dir, name) + ": declares species '" + s.name + "'");
  return s;
}

}  // namespace ionprep
