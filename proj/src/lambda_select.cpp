#include "gtcs/lambda_select.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "gtcs/debias.hpp"
#include "gtcs/errors.hpp"
#include "gtcs/rng.hpp"
#include "gtcs/solver.hpp"
#include "gtcs/stats.hpp"

namespace gtcs::select {

double lilliefors_statistic(std::span<const double> sample) {
  const std::size_t m = sample.size();
  std::vector<double> v(sample.begin(), sample.end());
  const double mu = mean(v);
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  var /= static_cast<double>(m > 1 ? m - 1 : 1);
  if (var <= 0.0) return 1.0;  // degenerate sample: maximal distance
  const double sd = std::sqrt(var);
  std::sort(v.begin(), v.end());
  double d = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = normal_cdf((v[i] - mu) / sd);
    const double lo = static_cast<double>(i) / m;
    const double hi = static_cast<double>(i + 1) / m;
    d = std::max(d, std::max(f - lo, hi - f));
  }
  return d;
}

double lilliefors_pvalue(std::span<const double> sample, int replicates) {
  const std::size_t m = sample.size();
  if (m < 8) throw ParameterError("lilliefors_pvalue: need at least 8 observations");
  const double d_obs = lilliefors_statistic(sample);
  if (d_obs >= 1.0) return 0.0;  // zero-variance sample

  // Null distribution for this m is cached; the internal seed is fixed so
  // p-values are reproducible across runs.
  static std::map<std::pair<std::size_t, int>, std::vector<double>> cache;
  static std::mutex mtx;
  std::vector<double>* null_stats;
  {
    std::lock_guard<std::mutex> lock(mtx);
    auto& slot = cache[{m, replicates}];
    if (slot.empty()) {
      Rng rng(0x4c696c6cu, Stream::lilliefors, m);
      slot.resize(replicates);
      std::vector<double> draw(m);
      for (int t = 0; t < replicates; ++t) {
        for (std::size_t i = 0; i < m; ++i) draw[i] = rng.normal();
        slot[t] = lilliefors_statistic(draw);
      }
      std::sort(slot.begin(), slot.end());
    }
    null_stats = &slot;
  }
  const auto it = std::lower_bound(null_stats->begin(), null_stats->end(), d_obs);
  const std::size_t ge = null_stats->size() - static_cast<std::size_t>(it - null_stats->begin());
  return static_cast<double>(ge) / static_cast<double>(null_stats->size());
}

std::pair<double, double> select_lambdas(std::span<const double> y, const Mat& A,
                                         const LambdaGrid& grid, double sigma) {
  const int np = A.rows(), p = A.cols();
  if (grid.step <= 0.0 || grid.log_max < grid.log_min)
    throw ParameterError("select_lambdas: invalid grid");

  std::vector<double> lambdas;
  for (double lg = grid.log_max; lg >= grid.log_min - 1e-12; lg -= grid.step)
    lambdas.push_back(std::exp(lg));
  if (lambdas.size() == 1) return {lambdas[0], lambdas[0]};  // nothing to select

  const debias::DebiasOperator op = debias::closed_form_W(A, 0.5);  // scale-free in theta here
  const double band = normal_quantile(0.995);

  struct Retained {
    double l1, l2;
    solve::RobustFit fit;
  };
  std::vector<Retained> retained;

  // Stage 1: screen; warm starts flow down each lambda1 column.
  for (double l1 : lambdas) {
    solve::RobustFit warm;
    bool have_warm = false;
    for (double l2 : lambdas) {
      solve::RobustFit fit;
      try {
        fit = solve::robust_lasso(y, A, l1, l2, {}, have_warm ? &warm : nullptr);
      } catch (const SolverError&) {
        continue;
      }
      warm = fit;
      have_warm = true;
      const debias::DebiasedDelta dd = debias::debias_delta(y, A, op, fit, std::max(sigma, 1e-300));
      std::vector<double> std_coords(np);
      for (int i = 0; i < np; ++i) std_coords[i] = dd.delta_w[i] / dd.sigma_diag[i];
      int inside = 0;
      for (double v : std_coords)
        if (std::fabs(v) <= band) ++inside;
      if (static_cast<double>(inside) / np < grid.gaussian_fraction_threshold) continue;
      if (np >= 8 && lilliefors_pvalue(std_coords) < grid.lilliefors_alpha) continue;
      retained.push_back({l1, l2, std::move(fit)});
    }
  }

  if (retained.empty())
    return solve::theory_lambdas(sigma, p, np, 0);

  // Stage 2: mean K-fold CV error over held-out rows (delta is row-specific
  // and unlearnable out of fold, so it is excluded from the error).
  const int folds = std::max(2, std::min(grid.cv_folds, np));
  double best_err = 0.0;
  std::pair<double, double> best{retained.front().l1, retained.front().l2};
  bool first = true;
  for (const auto& cand : retained) {
    double err_sum = 0.0;
    int err_cnt = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train, test;
      for (int i = 0; i < np; ++i) (i % folds == f ? test : train).push_back(i);
      if (test.empty() || static_cast<int>(train.size()) < 2) continue;
      Mat At = A.select_rows(train);
      std::vector<double> yt(train.size());
      for (std::size_t k = 0; k < train.size(); ++k) yt[k] = y[train[k]];
      solve::RobustFit fit;
      try {
        fit = solve::robust_lasso(yt, At, cand.l1, cand.l2);
      } catch (const SolverError&) {
        continue;
      }
      for (int i : test) {
        const double pred = kern::dot(A.row(i), fit.beta.data(), fit.beta.size());
        err_sum += (y[i] - pred) * (y[i] - pred);
        ++err_cnt;
      }
    }
    if (err_cnt == 0) continue;
    const double err = err_sum / err_cnt;
    if (first || err < best_err) {
      first = false;
      best_err = err;
      best = {cand.l1, cand.l2};
    }
  }
  return best;
}

}  // namespace gtcs::select
