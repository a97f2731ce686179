#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "ionprep/structure.hpp"

namespace ionprep {

// P = (Omega^2 / W^2) sin^2(W t / 2), W = sqrt(Omega^2 + delta^2); angular units.
double rabi_transfer_probability(double omega, double delta, double t);

struct MwTransition {
  StateLabel a;
  StateLabel b;
  MwTransition mirrored() const { return {a.mirrored(), b.mirrored()}; }
  bool same_as(const MwTransition& o) const {
    return (a == o.a && b == o.b) || (a == o.b && b == o.a);
  }
  std::string str() const { return a.str() + ":" + b.str(); }
};

// One tone: a single transition or a near-degenerate pair driven together.
struct MicrowaveTone {
  std::vector<MwTransition> members;
  std::optional<double> omega;            // rad/s on the strongest member; default from options
  std::optional<double> amplitude_scale;  // fixed pulse area in units of pi on the strongest member
};

enum class MwMode { ideal, characterized };
enum class LeakageModel { shaped, square_pulse };

struct MwOptions {
  MwMode mode = MwMode::ideal;
  LeakageModel leakage = LeakageModel::shaped;
  double omega = 2.0 * constants::pi * 1e6;  // nominal Rabi frequency, rad/s
  double weak_factor = 4.0;
  std::vector<MwTransition> weak;
  double max_area = 1.5 * constants::pi;  // bound on the strongest-member pulse area
};

struct MwBlock {
  int a = 0, b = 0;  // ground-level indices
  double probability = 1.0;
  double omega = 0.0;
  double delta = 0.0;
  double duration = 0.0;
};

struct MwLeak {
  int from = 0, to = 0;
  double probability = 0.0;
};

struct MwOperation {
  std::string name;
  std::vector<MicrowaveTone> tones;
  Eigen::MatrixXd T;                // over the ground level states
  std::vector<MwBlock> blocks;
  std::vector<MwLeak> leaks;        // off-resonant action on untouched states
  Eigen::VectorXd leakage;          // summed leakage per ground state
  double duration = 0.0;            // slot length, s
};

// Builds the transfer matrix for simultaneous tones on the ground level of reg.
MwOperation build_mw_operation(const std::string& name, const std::vector<MicrowaveTone>& tones,
                               const Registry& reg, const MwOptions& opts, double slot_duration);

// Ground-level transfer matrix embedded into the full registry space.
Eigen::MatrixXd embed_ground(const Eigen::MatrixXd& T, const Registry& reg);

struct MwGroupPlan {
  std::string name;
  std::vector<MicrowaveTone> tones;
  double duration = 0.0;
};

// Alternating-pair plan driving every ground state except target toward the
// pump state (F_target - 1, sign(M_target) (F_target - 1)). Three slots: A and B
// hold alternating near-degenerate pairs, C holds the pi link at the far end.
std::vector<MwGroupPlan> fssp_group_plan(const Registry& reg, StateLabel target,
                                         const std::vector<double>& slot_durations);

// Errors unless every ground state other than target connects to pump across
// the union of groups, and target is left untouched.
void check_coverage(const std::vector<MwGroupPlan>& groups, const Registry& reg,
                    StateLabel target, StateLabel pump);

std::vector<MwOperation> default_fssp_mw_groups(const Registry& reg, StateLabel target,
                                                const MwOptions& opts,
                                                const std::vector<double>& slot_durations);

}  // namespace ionprep
