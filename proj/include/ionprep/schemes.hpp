#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ionprep/microwave.hpp"
#include "ionprep/parallel.hpp"
#include "ionprep/rates.hpp"
#include "ionprep/structure.hpp"

namespace ionprep {

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepKind { laser, microwave };

// Unbuilt step: beams applied together for a duration, or simultaneous MW tones.
struct StepSpec {
  StepKind kind = StepKind::laser;
  std::string name;
  std::vector<LaserBeam> beams;
  std::vector<MicrowaveTone> tones;
  double duration = 0.0;  // s; MW slot length, 0 means the longest pulse
};

struct SchemeSpec {
  std::string name = "fssp";
  SpeciesData species;
  double field_t = 0.0;
  std::vector<std::string> levels;
  StateLabel target;
  std::vector<StepSpec> cycle;
  double dead_time = 0.0;
  MwOptions mw;
  TrackingOptions tracking;
};

// Flips every M label, swaps sigma+ and sigma-, mirrors tones and the weak set.
// The field is left unchanged.
SchemeSpec mirror(const SchemeSpec& spec);
StepSpec mirror(const StepSpec& step);

struct PulseStep {
  StepKind kind = StepKind::laser;
  std::string name;
  double duration = 0.0;
  Eigen::MatrixXd P;                        // full-space transfer matrix of the step
  std::shared_ptr<const MwOperation> mw;    // set for microwave steps
};

struct PulseSequence {
  std::vector<PulseStep> steps;
  double dead_time = 0.0;

  double cycle_duration() const;
  Eigen::MatrixXd cycle_matrix() const;  // last step leftmost
};

PulseSequence build_sequence(const std::vector<StepSpec>& steps, const Registry& reg,
                             const MwOptions& mw, double dead_time = 0.0);

struct Scheme {
  std::string name;
  std::shared_ptr<const Registry> reg;
  StateLabel target;
  int target_index = 0;  // registry index
  PulseSequence cycle;
  Eigen::MatrixXd M;     // one-cycle matrix
};

Scheme build_scheme(const SchemeSpec& spec);

struct ConvergenceOptions {
  double threshold = 1e-7;   // per-cycle change
  long min_cycles = 10;
  long max_cycles = 100000;
  bool keep_occupations = true;
};

struct SimulationTrace {
  std::vector<Eigen::VectorXd> occupations;  // entry k after k cycles
  std::vector<double> error;
  std::vector<double> time;
  bool converged = false;
};

struct SchemeResult {
  double steady_error = 1.0;       // final trace error
  long cycles = 0;
  double duration = 0.0;           // s of experiment time
  bool converged = false;
  double fixed_point_error = NAN;  // 1 - p_target at the cycle fixed point
  double second_eigenvalue = NAN;  // modulus, sets the asymptotic rate
  SimulationTrace trace;
};

Eigen::VectorXd uniform_ground(const Registry& reg);
Eigen::VectorXd ground_state(const Registry& reg, StateLabel label);

// Fixed point error and subdominant eigenvalue modulus of a cycle matrix.
void cycle_spectrum(const Scheme& s, double& fixed_point_error, double& second_eigenvalue);

// Runs cycles until the per-cycle change of both the target error and every
// occupation drops below the threshold (after min_cycles), or max_cycles.
SchemeResult run_fssp(const Scheme& s, const Eigen::VectorXd& initial, long max_cycles,
                      const ConvergenceOptions& conv = {});
SchemeResult run_to_convergence(const Scheme& s, const Eigen::VectorXd& initial,
                                const ConvergenceOptions& conv = {});

struct InitialStateRow {
  StateLabel label;
  double initial_error = 1.0;
  long cycles = -1;  // first cycle with error < 1/e; -1 if never
};

std::vector<InitialStateRow> prepare_from_all_states(const Scheme& s, long max_cycles = 100000,
                                                     int jobs = 1);

// Defaults for generated FSSP cycles (any species with a J=1/2 ground level).
struct FsspDefaults {
  double pump_s = 0.05;
  double pump_duration = 150e-9;
  double pump_theta = constants::pi / 2;
  double repump_s = 1e5;
  double repump_duration = 2e-6;
  std::vector<double> mw_slots{2.5e-6, 2.5e-6, 2.0e-6};
  std::string pump_transition;    // empty: ground -> first J=1/2 excited level
  std::string repump_transition;  // empty: strongest other decay channel of the pumped level
};

// Three MW groups, pump pulse and repump (if the pumped level has a dark decay).
SchemeSpec default_fssp_spec(const SpeciesData& species, double field_t, StateLabel target,
                             const FsspDefaults& d = {});

// PSSP: pump stage run to its fixed point, then correction cycles.
struct PsspSpec {
  SchemeSpec pump;                         // its cycle is the pumping cycle
  std::vector<StepSpec> correction;        // correction cycle
  long correction_cycles = 1;
  std::vector<std::string> impure_beams;   // beams whose polarisation carries epsilon
};

// Polarisation with weight 1 - eps on the component that keeps target dark
// and eps / 2 on each of the other two.
Polarization impure_polarization(double epsilon, int sign);

PsspSpec with_impurity(const PsspSpec& spec, double epsilon);

struct PsspResult {
  SchemeResult pump;        // trace of the pumping stage
  SchemeResult corrected;   // trace through the correction cycles, time continuing
  double epsilon = 0.0;
};

PsspResult run_pssp(const PsspSpec& spec, double epsilon, const Eigen::VectorXd* initial,
                    const ConvergenceOptions& conv = {});

// Multi-tone scheme: MW pi pulses move F_t states except the target into F_t - 1,
// a stretch MW slot, one pump tone per F_t - 1 state, then repump.
struct AlternativeSpec {
  SpeciesData species;
  std::vector<std::string> levels;
  double low_field_t = 0.5e-3;
  double high_field_t = 28.8e-3;
  StateLabel low_target{8, 0};
  StateLabel high_target{8, 2};
  double tone_s = 0.01;
  double tone_duration = 1e-6;
  double tone_theta = 0.0;
  int tone_dm = 0;  // anchor F=3,M -> P(F',M + tone_dm)
  std::string pump_transition;
  std::string repump_transition;
  double repump_s = 1e5;
  double repump_duration = 2e-6;
  double mw_slot = 0.0;
  long cycles = 200;
  MwOptions mw;
};

SchemeSpec alternative_spec(const AlternativeSpec& a, bool high_field);

struct AlternativeResult {
  SchemeResult low;
  SchemeResult high;
  double ratio = NAN;  // high / low
};

AlternativeResult run_alternative(const AlternativeSpec& a, int jobs = 1);

struct SweepRow {
  double s = 0.0;
  double steady_error = NAN;
  long cycles = 0;
  double duration = NAN;
  bool converged = false;
  std::string error;  // failure diagnostic, empty on success
};

// One run_to_convergence per s, scaling the named beam.
std::vector<SweepRow> sweep_intensity(const SchemeSpec& spec, const std::string& beam,
                                      const std::vector<double>& s_values,
                                      const Eigen::VectorXd* initial,
                                      const ConvergenceOptions& conv = {}, int jobs = 1);

struct SpeciesScanEntry {
  std::string species;
  StateLabel target;
  StateLabel clock_lower, clock_upper;
  double search_lo_t = 1e-4, search_hi_t = 0.5;
  std::optional<double> field_t;  // overrides the clock search
};

struct SpeciesScanRow {
  std::string species;
  StateLabel target;
  double field_t = NAN;
  double splitting_hz = NAN;
  double clock_frequency_hz = NAN;
  double min_detuning_hz = NAN;   // pump beam to nearest target transition
  double steady_error = NAN;
  long cycles = 0;
  bool converged = false;
  std::string error;
};

std::vector<SpeciesScanRow> cross_species_errors(const std::vector<SpeciesScanEntry>& entries,
                                                 const std::string& species_dir,
                                                 const FsspDefaults& d,
                                                 const ConvergenceOptions& conv = {},
                                                 int jobs = 1);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Smallest detuning between a beam and any dipole-allowed transition out of
// the target state, in Hz.
double target_min_detuning_hz(const Scheme& s, const LaserBeam& beam);

}  // namespace ionprep
