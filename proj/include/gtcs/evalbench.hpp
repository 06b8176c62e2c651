#pragma once
// Metrics, the four estimator pipelines, and the desk-scale experiment
// suites with CSV/plot-data reporting.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtcs/corrector.hpp"
#include "gtcs/detector.hpp"
#include "gtcs/simkit.hpp"

namespace gtcs::bench {

std::pair<double, double> sens_spec(std::span<const int> true_support,
                                    std::span<const int> declared_support, int p);

double rrmse(std::span<const double> beta_true, std::span<const double> beta_hat);

enum class Setting { EA, EB, EC, ED, ZETA, LOG_SIGMA, LOG_N, MULTISTAGE, CONVERGENCE };

const char* to_string(Setting s);
Setting setting_from_string(const std::string& s);

enum class Estimator { RL, MMER, CAPE, ODRLT };
const char* to_string(Estimator e);

struct ExperimentConfig {
  Setting setting = Setting::EA;
  std::string sweep_name;        // e.g. "f_adv"
  std::vector<double> sweep;     // sweep values

  // n is the centered system size: the generated pooling matrix has 2n rows
  // and adversarial errors are injected among the first n rows, so every
  // corrupted row pairs with a clean partner under the identity pairing.
  int p = 200;
  int n = 80;
  double f_sp = 0.05;
  double f_adv = 0.02;
  double f_sigma = 0.01;
  double theta = 0.5;
  sim::MmeModel model = sim::MmeModel::SSM;
  sim::NoiseKind noise = sim::NoiseKind::gaussian;
  double q = 0.95;
  double zeta = 0.2;             // r_U = round(zeta * n); ZETA ties it to r
  bool r_u_matched = false;
  sim::MarginMode margin = sim::MarginMode::a1;
  int trials = 25;
  std::uint64_t master_seed = 1;
  double alpha = 0.05;
  int max_stages = 10;
  double epsilon_rel = 0.05;     // CAPE stopping (0 = run all stages)
  bool fix_matrix_across_trials = true;
  bool fix_signal_across_trials = true;
  std::vector<Estimator> estimators{Estimator::RL, Estimator::MMER, Estimator::CAPE,
                                    Estimator::ODRLT};
  int workers = 0;               // 0 = hardware concurrency
  bool record_timing = true;
};

ExperimentConfig make_config(Setting setting);

struct TrialRow {
  std::string setting;
  std::string sweep_name;
  double sweep_value;
  std::string estimator;
  int trial;
  double sensitivity;
  double specificity;
  double rrmse;
  double runtime_ms;
  std::uint64_t seed;
};

struct StageRow {  // MULTISTAGE reporting
  std::string model;
  int trial;
  int stage;
  double n_e, n_ef, n_et;
};

struct TraceRow {  // CONVERGENCE reporting
  int r;
  int stage;
  double f_ape;
};

struct ExperimentOutput {
  std::vector<TrialRow> rows;
  std::vector<StageRow> stage_rows;
  std::vector<TraceRow> trace_rows;
};

ExperimentOutput run_experiment(const ExperimentConfig& cfg);

// Pipelines on an explicit instance (z, B raw with 2n' rows).
struct PipelineConfig {
  double theta = 0.5;
  double sigma_tilde = 0.0;  // additive-equivalent uncentered noise scale
  int r_U = -1;
  double zeta = 0.2;
  double alpha = 0.05;
  int max_stages = 10;
  double epsilon_rel = 0.05;
  sim::MmeModel model = sim::MmeModel::SSM;
  std::uint64_t seed = 0;
};

struct PipelineResult {
  std::vector<double> beta_hat;
  std::vector<int> declared_support;
  solve::RobustFit fit;
  detect::DetectionResult detection;  // empty for RL
};

PipelineResult pipeline_rl(std::span<const double> z, const BinMat& B, const PipelineConfig& cfg);
PipelineResult pipeline_mmer(std::span<const double> z, const BinMat& B,
                             const PipelineConfig& cfg);
PipelineResult pipeline_cape(std::span<const double> z, const BinMat& B,
                             const PipelineConfig& cfg);
PipelineResult pipeline_odrlt(std::span<const double> z, const BinMat& B,
                              const PipelineConfig& cfg);

// Additive-equivalent noise scale for the lognormal model, estimated from
// the measurements themselves: sigma~ * ln(1+q) * mean |z|.
double lognormal_sigma_equiv(std::span<const double> z, double sigma_exp, double q);

// CSV serialization (doubles at 17 significant digits).
std::string trials_to_csv(std::span<const TrialRow> rows);
std::string aggregate_to_csv(std::span<const TrialRow> rows);
std::string stages_to_csv(std::span<const StageRow> rows);
std::string trace_to_csv(std::span<const TraceRow> rows);

// gnuplot-ready two-column files keyed "<setting>_<estimator>_<metric>.dat"
std::map<std::string, std::string> plot_data(std::span<const TrialRow> rows);

}  // namespace gtcs::bench
