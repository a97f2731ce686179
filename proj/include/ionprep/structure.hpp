#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "ionprep/species.hpp"

namespace ionprep {

class PhysicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StructureError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

// Adiabatic (F, M) label, stored as twice the quantum numbers.
struct StateLabel {
  int twoF = 0;
  int twoM = 0;

  static StateLabel of(double F, double M);
  double F() const { return 0.5 * twoF; }
  double M() const { return 0.5 * twoM; }
  StateLabel mirrored() const { return {twoF, -twoM}; }
  std::string str() const;  // "F,M"
  bool operator==(const StateLabel& o) const { return twoF == o.twoF && twoM == o.twoM; }
  bool operator!=(const StateLabel& o) const { return !(*this == o); }
  bool operator<(const StateLabel& o) const {
    return twoF != o.twoF ? twoF < o.twoF : twoM < o.twoM;
  }
};

// Parses "F,M" (half-integers allowed as "3/2" or "1.5").
StateLabel parse_label(const std::string& s);

// |m_I, m_J> basis, m_I and m_J descending; index = i (2J+1) + j
struct ProductBasis {
  int twoI = 0;
  int twoJ = 0;
  int dim() const { return (twoI + 1) * (twoJ + 1); }
  int twoMI(int k) const { return twoI - 2 * (k / (twoJ + 1)); }
  int twoMJ(int k) const { return twoJ - 2 * (k % (twoJ + 1)); }
  int index(int twoMI, int twoMJ) const {
    return ((twoI - twoMI) / 2) * (twoJ + 1) + (twoJ - twoMJ) / 2;
  }
};

struct DressedState {
  std::string level;
  ProductBasis basis;
  StateLabel label;
  double omega = 0.0;  // rad/s, from the level's field-free centroid
  Eigen::VectorXd amplitudes;

  double frequency_hz() const { return omega / constants::two_pi; }
};

struct TrackingOptions {
  double max_step_t = 1e-4;          // field continuation step
  double degeneracy_tol_hz = 1e-3;   // minimum in-block eigenvalue separation
};

// Hermitian matrix in Hz over the product basis.
Eigen::MatrixXd build_hamiltonian(const LevelSpec& level, const SpeciesData& species,
                                  double field_t);

// Eigenstates sorted by energy, labelled by continuation from zero field.
std::vector<DressedState> dressed_states(const LevelSpec& level, const SpeciesData& species,
                                         double field_t, const TrackingOptions& opts = {});

// Continues an already labelled set from field_from to field_to.
std::vector<DressedState> continue_states(const std::vector<DressedState>& from,
                                          double field_from, const LevelSpec& level,
                                          const SpeciesData& species, double field_to,
                                          const TrackingOptions& opts = {});

const DressedState& find_state(const std::vector<DressedState>& states, StateLabel label);

struct ClockPoint {
  bool found = false;
  double field_t = 0.0;
  double frequency_hz = 0.0;
  std::string message;
};

// Field where d(nu)/dB = 0 for lower -> upper inside [field_lo, field_hi].
ClockPoint clock_field(const LevelSpec& level, const SpeciesData& species, StateLabel lower,
                       StateLabel upper, double field_lo, double field_hi,
                       const TrackingOptions& opts = {});

double transition_frequency_hz(const LevelSpec& level, const SpeciesData& species,
                               StateLabel a, StateLabel b, double field_t,
                               const TrackingOptions& opts = {});

// Relative E1 amplitude with q = M_upper - M_lower. Squared amplitudes out of
// any upper state summed over lower states and q give 1.
double electric_dipole_amplitude(const DressedState& lower, const DressedState& upper, int q);

// Product-basis E1 operator for component q, rows upper, columns lower.
Eigen::MatrixXd dipole_operator(const ProductBasis& lower, const ProductBasis& upper, int q);

// <a| J_q |b> with q = M_a - M_b in the spherical basis. nuclear_ratio adds
// nuclear_ratio * I_q to model the nuclear moment (zero by default).
double magnetic_dipole_element(const DressedState& a, const DressedState& b,
                               double nuclear_ratio = 0.0);

// Dressed states of several levels at one field, plus E1 couplings.
class Registry {
 public:
  struct Coupling {
    TransitionSpec spec;
    int lower_offset = 0, lower_count = 0;
    int upper_offset = 0, upper_count = 0;
    std::array<Eigen::MatrixXd, 3> d2;  // |d_q|^2, rows upper, cols lower, index q+1
  };

  Registry(SpeciesData species, double field_t, std::vector<std::string> levels,
           const TrackingOptions& opts = {});

  const SpeciesData& species() const { return species_; }
  double field() const { return field_; }
  int size() const { return static_cast<int>(states_.size()); }
  const std::vector<std::string>& levels() const { return levels_; }
  bool has_level(const std::string& l) const;
  int offset(const std::string& level) const;
  int count(const std::string& level) const;
  const DressedState& state(int i) const { return states_[i]; }
  const std::vector<DressedState>& states() const { return states_; }
  std::vector<DressedState> level_states(const std::string& level) const;
  int index(const std::string& level, StateLabel label) const;
  const std::vector<Coupling>& couplings() const { return couplings_; }
  const Coupling& coupling(const std::string& transition) const;
  std::string describe(int i) const;  // "S12|4,4>"

 private:
  SpeciesData species_;
  double field_;
  std::vector<std::string> levels_;
  std::vector<int> offsets_;
  std::vector<DressedState> states_;
  std::vector<Coupling> couplings_;
};

}  // namespace ionprep
