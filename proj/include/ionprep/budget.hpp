#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ionprep/schemes.hpp"

namespace ionprep {

struct ReadoutConfig {
  SpeciesData species;
  double field_t = 28.8e-3;
  std::vector<std::string> levels;   // must include the shelf level
  std::vector<StepSpec> cycle;       // one shelving cycle
  int cycles = 10;
  StateLabel bright_state{6, 2};     // qubit state that must not shelve
  StateLabel dark_state{8, 8};       // state that is shelved
  std::string shelf_level = "D52";
  std::optional<double> shelving_probability;  // per cycle; rate model when absent
  std::optional<double> shelf_lifetime_s;      // species value when absent
  double deshelving_window_s = 0.0;
  double lambda_bright = 0.0;        // mean bright counts in the detection window
  double background_mean = 0.0;      // mean dark counts in the detection window
  int threshold = 0;                 // 0 picks the optimum
  double thresholding_unc = 0.0;     // quoted uncertainty per side
};

// Shelf population reached from bright_state after the configured cycles.
double off_resonant_shelving_error(const ReadoutConfig& r);

// Shelf population after one cycle from dark_state.
double shelving_probability_rate_model(const ReadoutConfig& r);

struct ShelvingResult {
  double per_cycle = 0.0;
  double failure = 0.0;      // (1 - p)^cycles
  double deshelving = 0.0;   // 1 - exp(-t / tau)
  bool rate_model = false;
};

ShelvingResult shelving_failure_and_deshelving(const ReadoutConfig& r);

// P(X < k) for X ~ Poisson(mean).
double poisson_cdf_below(int k, double mean);

struct ThresholdResult {
  int k = 0;
  double bright_miss = 0.0;   // P(X < k | bright)
  double dark_false = 0.0;    // P(Y >= k | dark)
};

ThresholdResult thresholding_error(double lambda_bright, double background_rate,
                                   double detect_time, int k);
// k in [1, kmax] minimising the summed error.
ThresholdResult optimal_threshold(double lambda_bright, double background_mean, int kmax = 0);

enum class TransferKind { leakage, decoherence, detuning, amplitude };
std::string to_string(TransferKind k);

// One measured contribution to a transfer-pulse error row.
struct TransferSource {
  std::string name;
  TransferKind kind = TransferKind::leakage;
  std::string state;        // "bright" or "dark"
  std::string transition;   // correlation key for detuning and decoherence
  std::optional<double> idle_s, lifetime_s, lifetime_unc_s;
  std::optional<double> pulse_s, t2_s, t2_unc_s;
  std::optional<double> rabi_hz, detuning_rms_hz, detuning_rms_unc_hz;
  std::optional<double> error, error_unc;
};

struct MeasuredErrorInputs {
  std::vector<TransferSource> sources;
};

struct Contribution {
  double value = 0.0;
  double unc = 0.0;
  std::string key;  // contributions sharing a non-empty key are correlated
};

struct BudgetRow {
  std::string name;
  std::string group;       // "transfer" or "readout"
  bool simulated = false;
  std::vector<Contribution> bright, dark;
  bool bright_provided = true, dark_provided = true;
  bool bright_applies = true, dark_applies = true;
};

struct BudgetTotal {
  double bright = 0.0, dark = 0.0;
  double bright_unc = 0.0, dark_unc = 0.0;
};

// Linear within a correlation key, quadrature across keys.
double combine_uncertainty(const std::vector<Contribution>& c);
double sum_values(const std::vector<Contribution>& c);

std::vector<BudgetRow> transfer_pulse_errors(const MeasuredErrorInputs& in);

std::vector<BudgetRow> readout_rows(const ReadoutConfig& r);

struct BudgetReport {
  std::vector<BudgetRow> rows;
  std::vector<std::pair<std::string, BudgetTotal>> groups;  // subtotal per group, first-seen order
  BudgetTotal total;
};

BudgetReport aggregate_budget(const std::vector<BudgetRow>& rows);

// Aligned text table in units of 1e-5.
std::string format_budget(const BudgetReport& rep);

}  // namespace ionprep
