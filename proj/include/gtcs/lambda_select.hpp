#pragma once
// Two-stage regularization selection: a coarse log-grid screened by a
// Lilliefors normality test on the standardized debiased coordinates,
// then 10-fold cross-validation among the retained pairs. Falls back to
// the theory pair when the screen retains nothing.

#include <cstdint>
#include <span>
#include <vector>

#include "gtcs/matrix.hpp"

namespace gtcs::select {

struct LambdaGrid {
  double log_min = 1.0;
  double log_max = 7.0;
  double step = 0.25;  // natural-log spacing for both lambdas
  double lilliefors_alpha = 0.01;
  double gaussian_fraction_threshold = 0.70;
  int cv_folds = 10;
};

// Lilliefors test of composite normality: KS distance between the empirical
// CDF of the standardized sample and the standard normal CDF, with the
// p-value calibrated by Monte-Carlo simulation of the null (fixed internal
// seed, `replicates` draws). Degenerate (zero-variance) samples give p = 0.
double lilliefors_pvalue(std::span<const double> sample, int replicates = 2000);

// The Lilliefors KS statistic itself (mean/std estimated from the sample).
double lilliefors_statistic(std::span<const double> sample);

std::pair<double, double> select_lambdas(std::span<const double> y, const Mat& A,
                                         const LambdaGrid& grid, double sigma);

}  // namespace gtcs::select
