#pragma once
// Pooling-system generation, sparse signals, mis-specification injection,
// measurement forward models and the centering transform.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtcs/matrix.hpp"

namespace gtcs::sim {

enum class MmeModel { SSM, ASM, PERM };
enum class NoiseKind { none, gaussian, lognormal_pcr };
enum class MarginMode { none, a1, full_a2 };

const char* to_string(MmeModel m);
MmeModel mme_model_from_string(const std::string& s);

struct PoolingSystem {
  int n = 0;
  int p = 0;
  double theta = 0.5;
  BinMat B;
  std::uint64_t seed = 0;
};

struct SignalVector {
  std::vector<double> beta;
  std::vector<int> support;  // sorted indices of the nonzeros
};

struct MmeRecord {
  MmeModel model;
  int row;     // affected row of B
  int detail;  // SSM: flipped column; ASM: swap position j (partner (j mod p)+1); PERM: partner row
  double delta_tilde;  // (b~_row - b_row) . beta*
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::gaussian;
  double f_sigma = 0.01;     // gaussian: sigma~ = f_sigma * mean |b~_i . beta|
  double sigma_tilde = 0.0;  // lognormal: std of the exponent; gaussian: derived
  double q = 0.95;           // lognormal per-cycle replication factor
};

struct MeasurementSet {
  std::vector<double> z;
  NoiseKind noise_kind = NoiseKind::none;
  double sigma_tilde = 0.0;
  double f_sigma = 0.0;
  double q = 0.0;
};

struct CenteredSystem {
  std::vector<double> y;
  Mat A;
  std::vector<std::pair<int, int>> pairing;  // centered index i -> (row, partner row)
  double h = 0.0;                            // 1 / (2 theta (1-theta))
  double theta = 0.5;
  double sigma_centered = 0.0;
};

struct InjectOptions {
  bool adversarial = true;
  MarginMode margin = MarginMode::a1;
  double k_margin = 3.0;     // A1/A2 margin constant: |delta| >= 2 (k+1) sigma~
  double sigma_tilde = 0.0;  // noise scale the margins are measured against
  int max_retries = 1000;
  int row_limit = -1;  // restrict affected rows to [0, row_limit); -1 = all rows
};

PoolingSystem gen_pooling(int n, int p, double theta, std::uint64_t seed);

// Raw i.i.d. Bernoulli(theta) matrix without the compressive-shape check;
// the experiment harness stacks two compressive halves into one design.
BinMat bernoulli_matrix(int rows, int p, double theta, std::uint64_t seed);

SignalVector gen_signal(int p, int s, double low, double high, std::uint64_t seed);

// Returns the executed matrix B~ and one record per affected row.
std::pair<BinMat, std::vector<MmeRecord>> inject_mmes(const PoolingSystem& sys,
                                                      const SignalVector& signal, MmeModel model,
                                                      int r, std::uint64_t seed,
                                                      const InjectOptions& opts = {});

MeasurementSet forward(const BinMat& B_tilde, const SignalVector& signal, const NoiseConfig& cfg,
                       std::uint64_t seed);

// row_order empty = identity. Odd row counts drop the final ordered row.
CenteredSystem center(std::span<const double> z, const BinMat& B, double theta,
                      std::span<const int> row_order = {}, double sigma_tilde = 0.0);

// Line-oriented text format: one row of '0'/'1' characters per line.
std::string pooling_to_text(const BinMat& B);
BinMat pooling_from_text(const std::string& text);

// CSV: model,row,detail
std::string records_to_csv(std::span<const MmeRecord> records);

// Indices of records whose error magnitude falls short of the noise margin
// |delta~| >= 2 (k+1) sigma~ (the generators report these, they never
// silently resample unless margin enforcement was requested).
std::vector<int> margin_violations(std::span<const MmeRecord> records, double sigma_tilde,
                                   double k = 3.0);

}  // namespace gtcs::sim
