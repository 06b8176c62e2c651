#pragma once
// Model-based perturbation sets, APE scoring, single-stage row correction
// and the multi-stage correction loop with its stopping function.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gtcs/simkit.hpp"
#include "gtcs/solver.hpp"

namespace gtcs::correct {

struct PerturbationSet {
  int row = 0;
  sim::MmeModel model = sim::MmeModel::SSM;
  // candidate 0 is always the unmodified row itself
  std::vector<std::vector<std::uint8_t>> candidates;
};

PerturbationSet build_perturbation_set(const BinMat& B, int row, sim::MmeModel model,
                                       std::span<const int> flagged_rows = {});

double ape(double z_i, std::span<const std::uint8_t> candidate_row, std::span<const double> beta);

struct CorrectOptions {
  // Acceptance scale: a non-original candidate is installed only when
  // APE(original) > (k_margin+1)*scale >= APE(candidate). scale = 0
  // reduces to the plain argmin with the original-first tie-break.
  double scale = 0.0;
  double k_margin = 3.0;
  // PERM candidate pool override (permissive mode feeds every row here);
  // empty means the flagged set itself.
  std::vector<int> perm_pool;
};

struct RowDecision {
  int row;
  int chosen_index;  // index into the perturbation set; 0 = kept original
  double ape_original;
  double ape_chosen;
  double ape_runner_up;
};

std::pair<BinMat, std::vector<RowDecision>> correct_rows(std::span<const double> z, const BinMat& B,
                                                         std::span<const int> flagged_rows,
                                                         std::span<const double> beta_hat,
                                                         sim::MmeModel model,
                                                         const CorrectOptions& opts = {});

// Stopping function: (1/n) || z - B_hat beta_lasso ||^2.
double f_ape(std::span<const double> z, const BinMat& B_hat, std::span<const double> beta_lasso);

struct CapeConfig {
  double zeta = 0.2;      // r_U = round(zeta * n') unless r_U >= 0
  int r_U = -1;
  double alpha = 0.05;
  double epsilon = 0.0;      // absolute stopping threshold on |f(k) - f(k-1)|
  double epsilon_rel = 0.0;  // relative variant: eps = max(epsilon, epsilon_rel*|f(k-1)|)
  int max_stages = 10;
  std::uint64_t seed = 0;
  double k_margin = 3.0;
  double sel_factor_estimate = 0.5;  // support-stage scaling for APE/estimate fits
  bool permissive_perm_pool = false; // PERM candidates from all rows instead of flagged
};

struct StageInfo {
  int stage;
  std::vector<int> flagged_rows;
  std::vector<RowDecision> decisions;
  double f_ape_value;
};

struct CorrectionResult {
  BinMat B_hat;
  std::vector<StageInfo> stages;
  std::vector<double> f_ape_trace;
  int stages_run = 0;
  solve::RobustFit final_fit;             // robust lasso on the corrected system
  std::vector<double> beta_relaxed;       // support-refit estimate on the same system
};

// Per-stage observer for instrumentation (multi-stage tables); receives the
// stage index, the flagged original rows and the corrected matrix so far.
using StageObserver = std::function<void(int, const std::vector<int>&, const BinMat&)>;

CorrectionResult cape(std::span<const double> z, const BinMat& B, double theta,
                      sim::MmeModel model, const CapeConfig& cfg, double sigma_tilde,
                      const StageObserver& observer = {});

}  // namespace gtcs::correct
