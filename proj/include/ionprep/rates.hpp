#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <string>
#include <vector>

#include "ionprep/structure.hpp"

namespace ionprep {

class LambdaGuardError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

class NumericalError : public PhysicsError {
 public:
  using PhysicsError::PhysicsError;
};

// Spherical components, index q + 1: (sigma-, pi, sigma+).
struct Polarization {
  std::array<std::complex<double>, 3> a{0.0, 0.0, 0.0};

  static Polarization from_weights(double w_minus, double w_pi, double w_plus);
  double weight(int q) const { return std::norm(a[q + 1]); }
  Polarization mirrored() const { return {{a[2], a[1], a[0]}}; }
  void check() const;
};

// Linear polarisation at angle theta (radians) to the quantisation axis.
Polarization linear_polarization(double theta);

enum class Lineshape { natural, power_broadened };

struct Anchor {
  StateLabel lower;
  StateLabel upper;
  bool lower_median = false;  // use the median-energy state of the lower level
};

struct LaserBeam {
  std::string name;
  std::string transition;
  Anchor anchor;
  double detuning_hz = 0.0;  // from the anchor transition
  double s = 0.0;            // intensity in units of I0
  Polarization pol;
  Lineshape lineshape = Lineshape::natural;
};

struct RateMatrix {
  Eigen::MatrixXd R;  // dp/dt = R p, R(to, from)
  std::vector<std::string> beams;
};

struct GuardThresholds {
  double lineshape = 1e-4;  // minimum lineshape factor counted as coupling
  double strength = 1e-6;   // minimum w_q |d|^2 counted as coupling
};

// Beam frequency offset (Hz) of the anchor transition, relative to level centroids.
double anchor_frequency_hz(const LaserBeam& beam, const Registry& reg);

// Lorentzian 1 / (1 + (2 delta / gamma)^2), delta and gamma in the same units.
inline double lorentzian(double delta, double gamma) {
  const double x = 2.0 * delta / gamma;
  return 1.0 / (1.0 + x * x);
}

RateMatrix build_rate_matrix(const std::vector<LaserBeam>& beams, const Registry& reg,
                             const GuardThresholds& guard = {});

Eigen::MatrixXd propagator(const RateMatrix& R, double t);
Eigen::VectorXd evolve(const Eigen::VectorXd& p0, const RateMatrix& R, double t);
Eigen::VectorXd evolve_ode(const Eigen::VectorXd& p0, const RateMatrix& R, double t);

struct SteadyState {
  std::vector<Eigen::VectorXd> vectors;        // one per closed component, full length
  std::vector<std::vector<int>> components;    // member states of each
  std::vector<int> transient;                  // states outside every closed component
  double singular_gap = 0.0;                   // smallest kept / largest dropped singular value
};

SteadyState steady_state(const RateMatrix& R);

// Occupation vector invariants: entries in [0, 1] within tol, sum 1 within tol.
bool valid_occupations(const Eigen::VectorXd& p, double tol = 1e-9);

}  // namespace ionprep
