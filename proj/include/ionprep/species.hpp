#pragma once

#include <string>
#include <vector>

#include "ionprep/ini.hpp"

namespace ionprep {

namespace constants {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double bohr_magneton_hz_per_t = 13.99624493e9;  // muB / h
inline constexpr double proton_electron_mass_ratio = 1836.15267343;
inline constexpr double nuclear_magneton_hz_per_t =
    bohr_magneton_hz_per_t / proton_electron_mass_ratio;
inline constexpr double planck = 6.62607015e-34;
inline constexpr double speed_of_light = 299792458.0;
}  // namespace constants

// Twice-valued integers keep half-integer angular momenta exact.
struct LevelSpec {
  std::string name;   // key used in files, e.g. "S12"
  std::string term;   // e.g. "4S1/2"
  int n = 0;
  int L = 0;
  int twoJ = 1;
  double A_hz = 0.0;  // magnetic dipole hyperfine constant
  double B_hz = 0.0;  // electric quadrupole hyperfine constant
  double g_J = 0.0;
  double lifetime_s = 0.0;  // +inf for the ground level

  double J() const { return 0.5 * twoJ; }
};

struct TransitionSpec {
  std::string name;
  std::string lower;
  std::string upper;
  double wavelength_nm = 0.0;
  double branching = 0.0;
  double gamma = 0.0;          // partial decay rate upper -> lower, 1/s (angular units)
  double gamma_total = 0.0;    // 1/tau of the upper level
  double saturation_w_m2 = 0.0;  // two-level reference intensity I0
};

struct SpeciesData {
  std::string name;
  int twoI = 0;
  double g_I = 0.0;  // mu_I / (I mu_N)
  std::string ground;
  std::vector<LevelSpec> levels;
  std::vector<TransitionSpec> transitions;
  std::string citation;

  double I() const { return 0.5 * twoI; }
  const LevelSpec& level(const std::string& name) const;
  bool has_level(const std::string& name) const;
  const TransitionSpec& transition(const std::string& name) const;
  // transition joining two levels, or nullptr
  const TransitionSpec* transition_between(const std::string& lower,
                                           const std::string& upper) const;
  // zero-field ground hyperfine splitting |A| (I + 1/2) in Hz (J = 1/2 ground)
  double ground_splitting_hz() const;
};

SpeciesData parse_species(const IniDocument& doc);
SpeciesData load_species(const std::string& path);
// Looks for <dir>/<name lowercased>.ini
SpeciesData load_species_by_name(const std::string& dir, const std::string& name);
std::string species_path(const std::string& dir, const std::string& name);
void validate(const SpeciesData& s);

}  // namespace ionprep
