#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ionprep/budget.hpp"
#include "ionprep/ini.hpp"
#include "ionprep/schemes.hpp"

namespace ionprep {

struct RunConfig {
  std::string path;
  IniDocument doc;
  std::string species_dir;
};

// species_dir: explicit value, else $IONPREP_SPECIES_DIR, else data/species next
// to the config directory, else the built-in default.
std::string resolve_species_dir(const std::string& explicit_dir, const std::string& config_path);
RunConfig load_run_config(const std::string& path, const std::string& species_dir = "");

// "F,M:F,M" and "median:F,M"
Anchor parse_anchor(const std::string& s);
MwTransition parse_mw_transition(const std::string& s);
// "a:b | c:d @ rabi_khz=500 scale=1"
MicrowaveTone parse_tone(const std::string& s);

LaserBeam parse_beam(const IniSection& sec);
MwOptions parse_mw_options(const IniDocument& doc);
// Whitespace-separated list of beam.X, mw.X or beam.X+beam.Y
std::vector<StepSpec> parse_steps(const IniDocument& doc, const std::string& list);

SpeciesData config_species(const RunConfig& cfg);
std::string config_species_path(const RunConfig& cfg);
SchemeSpec scheme_from_config(const RunConfig& cfg, std::optional<double> field_t = std::nullopt);
ConvergenceOptions convergence_from_config(const RunConfig& cfg);
// "uniform" or a ground label; CLI value wins
Eigen::VectorXd initial_from_config(const RunConfig& cfg, const Registry& reg,
                                    const std::string& override_label = "");

struct SweepConfig {
  std::string beam = "397";
  std::vector<double> s;
};
SweepConfig sweep_from_config(const RunConfig& cfg);

struct PsspRun {
  PsspSpec spec;
  std::vector<double> epsilons;
};
PsspRun pssp_from_config(const RunConfig& cfg, std::optional<double> field_t = std::nullopt);

AlternativeSpec alternative_from_config(const RunConfig& cfg);

struct ScanConfig {
  std::vector<SpeciesScanEntry> entries;
  FsspDefaults defaults;
};
ScanConfig scan_from_config(const RunConfig& cfg);

ReadoutConfig readout_from_config(const RunConfig& cfg);
MeasuredErrorInputs measured_from_config(const RunConfig& cfg);
// [component.X] rows with fixed values
std::vector<BudgetRow> components_from_config(const RunConfig& cfg);

}  // namespace ionprep
