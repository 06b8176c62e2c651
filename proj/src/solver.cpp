#include "gtcs/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "gtcs/errors.hpp"
#include "gtcs/kernels.hpp"
#include "gtcs/stats.hpp"

namespace gtcs::solve {

namespace {

// Shared CD core. With delta == nullptr this is the plain lasso.
RobustFit descend(std::span<const double> y, const Mat& A, double lambda1,
                  std::optional<double> lambda2, const SolveOptions& opts,
                  const std::vector<double>* warm_beta, const std::vector<double>* warm_delta) {
  const int np = A.rows(), p = A.cols();
  if (static_cast<int>(y.size()) != np) throw ParameterError("solver: y/A dimension mismatch");
  if (lambda1 < 0.0 || (lambda2 && *lambda2 < 0.0)) throw ParameterError("solver: negative lambda");

  const Mat At = A.transposed();
  std::vector<double> colsq(p);
  for (int j = 0; j < p; ++j) colsq[j] = kern::nrm2sq(At.row(j), np);

  RobustFit fit;
  fit.lambda1 = lambda1;
  fit.lambda2 = lambda2.value_or(0.0);
  fit.beta = warm_beta && static_cast<int>(warm_beta->size()) == p ? *warm_beta
                                                                   : std::vector<double>(p, 0.0);
  if (lambda2) {
    fit.delta = warm_delta && static_cast<int>(warm_delta->size()) == np
                    ? *warm_delta
                    : std::vector<double>(np, 0.0);
  }

  // resid = y - A beta - delta, maintained incrementally
  std::vector<double> resid(y.begin(), y.end());
  for (int j = 0; j < p; ++j)
    if (fit.beta[j] != 0.0) kern::axpy(-fit.beta[j], At.row(j), resid.data(), np);
  for (std::size_t i = 0; i < fit.delta.size(); ++i) resid[i] -= fit.delta[i];

  const double thr_beta = static_cast<double>(np) * lambda1;
  const double thr_delta = lambda2 ? static_cast<double>(np) * *lambda2 : 0.0;

#ifndef NDEBUG
  double prev_obj = objective_value(y, A, fit.beta, fit.delta, lambda1, fit.lambda2);
#endif

  long sweep = 0;
  for (; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      if (colsq[j] == 0.0) continue;
      const double old = fit.beta[j];
      const double rho = kern::dot(At.row(j), resid.data(), np) + colsq[j] * old;
      const double next = soft_threshold(rho, thr_beta) / colsq[j];
      if (next != old) {
        kern::axpy(old - next, At.row(j), resid.data(), np);
        fit.beta[j] = next;
        max_change = std::max(max_change, std::fabs(next - old));
      }
    }
    if (lambda2) {
      for (int i = 0; i < np; ++i) {
        const double old = fit.delta[i];
        const double next = soft_threshold(resid[i] + old, thr_delta);
        if (next != old) {
          resid[i] += old - next;
          fit.delta[i] = next;
          max_change = std::max(max_change, std::fabs(next - old));
        }
      }
    }
#ifndef NDEBUG
    {
      const double obj = objective_value(y, A, fit.beta, fit.delta, lambda1, fit.lambda2);
      assert(obj <= prev_obj + 1e-9 * (1.0 + std::fabs(prev_obj)) && "CD objective increased");
      prev_obj = obj;
    }
#endif
    const double scale =
        1.0 + std::max(kern::max_abs(fit.beta.data(), fit.beta.size()),
                       fit.delta.empty() ? 0.0 : kern::max_abs(fit.delta.data(), fit.delta.size()));
    if (max_change < opts.tol_rel * scale) {
      ++sweep;
      break;
    }
  }

  fit.iterations = sweep;
  fit.objective = objective_value(y, A, fit.beta, fit.delta, lambda1, fit.lambda2);
  fit.kkt_gap = kkt_residual(y, A, fit);
  if (sweep >= opts.max_sweeps)
    throw SolverError("coordinate descent did not converge", fit.kkt_gap);
  return fit;
}

}  // namespace

double objective_value(std::span<const double> y, const Mat& A, std::span<const double> beta,
                       std::span<const double> delta, double lambda1, double lambda2) {
  const int np = A.rows();
  std::vector<double> resid(y.begin(), y.end());
  for (int i = 0; i < np; ++i) {
    resid[i] -= kern::dot(A.row(i), beta.data(), beta.size());
    if (!delta.empty()) resid[i] -= delta[i];
  }
  double obj = kern::nrm2sq(resid.data(), resid.size()) / (2.0 * static_cast<double>(np));
  obj += lambda1 * kern::asum(beta.data(), beta.size());
  if (!delta.empty()) obj += lambda2 * kern::asum(delta.data(), delta.size());
  return obj;
}

RobustFit lasso(std::span<const double> y, const Mat& A, double lambda, const SolveOptions& opts,
                const std::vector<double>* warm) {
  return descend(y, A, lambda, std::nullopt, opts, warm, nullptr);
}

RobustFit robust_lasso(std::span<const double> y, const Mat& A, double lambda1, double lambda2,
                       const SolveOptions& opts, const RobustFit* warm) {
  return descend(y, A, lambda1, lambda2, opts, warm ? &warm->beta : nullptr,
                 warm ? &warm->delta : nullptr);
}

double kkt_residual(std::span<const double> y, const Mat& A, const RobustFit& fit) {
  const int np = A.rows(), p = A.cols();
  std::vector<double> resid(y.begin(), y.end());
  const Mat At = A.transposed();
  for (int j = 0; j < p; ++j)
    if (fit.beta[j] != 0.0) kern::axpy(-fit.beta[j], At.row(j), resid.data(), np);
  for (std::size_t i = 0; i < fit.delta.size(); ++i) resid[i] -= fit.delta[i];

  double gap = 0.0;
  for (int j = 0; j < p; ++j) {
    const double g = kern::dot(At.row(j), resid.data(), np) / static_cast<double>(np);
    if (fit.beta[j] == 0.0) {
      gap = std::max(gap, std::fabs(g) - fit.lambda1);
    } else {
      gap = std::max(gap, std::fabs(g - fit.lambda1 * (fit.beta[j] > 0 ? 1.0 : -1.0)));
    }
  }
  if (!fit.delta.empty()) {
    for (int i = 0; i < np; ++i) {
      const double g = resid[i] / static_cast<double>(np);
      if (fit.delta[i] == 0.0) {
        gap = std::max(gap, std::fabs(g) - fit.lambda2);
      } else {
        gap = std::max(gap, std::fabs(g - fit.lambda2 * (fit.delta[i] > 0 ? 1.0 : -1.0)));
      }
    }
  }
  return std::max(gap, 0.0);
}

namespace {

// Solve (G + jitter I) x = b in place via Cholesky; G is s x s SPD-ish.
void cholesky_solve(std::vector<double>& G, std::vector<double>& b, int s) {
  double trace = 0.0;
  for (int i = 0; i < s; ++i) trace += G[static_cast<std::size_t>(i) * s + i];
  const double jitter = 1e-10 * std::max(trace / std::max(s, 1), 1.0);
  for (int i = 0; i < s; ++i) G[static_cast<std::size_t>(i) * s + i] += jitter;
  // in-place LL^T
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = G[static_cast<std::size_t>(i) * s + j];
      for (int k = 0; k < j; ++k)
        sum -= G[static_cast<std::size_t>(i) * s + k] * G[static_cast<std::size_t>(j) * s + k];
      if (i == j) {
        G[static_cast<std::size_t>(i) * s + j] = std::sqrt(std::max(sum, 1e-300));
      } else {
        G[static_cast<std::size_t>(i) * s + j] = sum / G[static_cast<std::size_t>(j) * s + j];
      }
    }
  }
  for (int i = 0; i < s; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= G[static_cast<std::size_t>(i) * s + k] * b[k];
    b[i] = sum / G[static_cast<std::size_t>(i) * s + i];
  }
  for (int i = s - 1; i >= 0; --i) {
    double sum = b[i];
    for (int k = i + 1; k < s; ++k) sum -= G[static_cast<std::size_t>(k) * s + i] * b[k];
    b[i] = sum / G[static_cast<std::size_t>(i) * s + i];
  }
}

}  // namespace

RobustFit relaxed_robust_lasso(std::span<const double> y, const Mat& A, double lambda1,
                               double lambda2, const RelaxedOptions& opts,
                               RobustFit* penalized_out) {
  const int np = A.rows(), p = A.cols();
  RobustFit base = robust_lasso(y, A, opts.sel_factor * lambda1, lambda2, opts.solve);

  // noise-scale reference: the residual of the full-strength penalized fit
  // (its shrinkage bias keeps downstream tests conservative)
  double base_scale_full = -1.0;
  if (opts.sel_factor != 1.0) {
    try {
      const RobustFit full = robust_lasso(y, A, lambda1, lambda2, opts.solve, &base);
      std::vector<double> rf(y.begin(), y.end());
      for (int i = 0; i < np; ++i) {
        rf[i] -= kern::dot(A.row(i), full.beta.data(), full.beta.size());
        rf[i] -= full.delta[i];
      }
      base_scale_full = rms(rf);
      if (penalized_out) *penalized_out = full;
    } catch (const SolverError&) {
      base_scale_full = -1.0;
    }
  } else if (penalized_out) {
    *penalized_out = base;
  }

  std::vector<int> support;
  for (int j = 0; j < p; ++j)
    if (base.beta[j] != 0.0) support.push_back(j);
  const int cap = std::max(1, np / 2);
  if (static_cast<int>(support.size()) > cap) {
    std::sort(support.begin(), support.end(), [&](int a, int b) {
      return std::fabs(base.beta[a]) > std::fabs(base.beta[b]);
    });
    support.resize(cap);
    std::sort(support.begin(), support.end());
  }

  // refit rows: delta-free and residual within 3 robust sigma of the median
  std::vector<double> resid0(y.begin(), y.end());
  for (int i = 0; i < np; ++i) {
    resid0[i] -= kern::dot(A.row(i), base.beta.data(), base.beta.size());
    resid0[i] -= base.delta[i];
  }
  const double base_scale = rms(resid0);
  const double med = median(std::vector<double>(resid0.begin(), resid0.end()));
  const double lim = 3.0 * std::max(mad_sigma(resid0), 1e-9 * std::max(1.0, rms(y)));
  std::vector<int> rows;
  for (int i = 0; i < np; ++i)
    if (base.delta[i] == 0.0 && std::fabs(resid0[i] - med) <= lim) rows.push_back(i);
  const int need = std::max(4, static_cast<int>(support.size()) + 1);
  if (static_cast<int>(rows.size()) < need) {
    rows.clear();
    for (int i = 0; i < np; ++i)
      if (base.delta[i] == 0.0) rows.push_back(i);
  }
  if (static_cast<int>(rows.size()) < need) {
    rows.resize(np);
    for (int i = 0; i < np; ++i) rows[i] = i;
  }

  RobustFit fit;
  fit.lambda1 = lambda1;
  fit.lambda2 = lambda2;
  fit.iterations = base.iterations;
  fit.beta.assign(p, 0.0);
  const int s = static_cast<int>(support.size());
  if (s > 0) {
    std::vector<double> G(static_cast<std::size_t>(s) * s, 0.0);
    std::vector<double> rhs(s, 0.0);
    std::vector<double> col(rows.size());
    std::vector<std::vector<double>> cols(s, std::vector<double>(rows.size()));
    for (int a = 0; a < s; ++a) {
      for (std::size_t k = 0; k < rows.size(); ++k) cols[a][k] = A(rows[k], support[a]);
      rhs[a] = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) rhs[a] += cols[a][k] * y[rows[k]];
    }
    for (int a = 0; a < s; ++a)
      for (int b = a; b < s; ++b) {
        const double g = kern::dot(cols[a].data(), cols[b].data(), rows.size());
        G[static_cast<std::size_t>(a) * s + b] = g;
        G[static_cast<std::size_t>(b) * s + a] = g;
      }
    cholesky_solve(G, rhs, s);
    for (int a = 0; a < s; ++a) fit.beta[support[a]] = rhs[a];
  }

  fit.delta.resize(np);
  const double thr = static_cast<double>(np) * lambda2;
  for (int i = 0; i < np; ++i) {
    const double u = y[i] - kern::dot(A.row(i), fit.beta.data(), fit.beta.size());
    fit.delta[i] = soft_threshold(u, thr);
  }
  fit.objective = objective_value(y, A, fit.beta, fit.delta, lambda1, lambda2);
  fit.kkt_gap = kkt_residual(y, A, fit);
  fit.base_scale = base_scale_full >= 0.0 ? base_scale_full : base_scale;
  return fit;
}

std::pair<double, double> theory_lambdas(double sigma, int p, int np, int r_hat) {
  const double eff = std::max(np - r_hat, 1);
  return {4.0 * sigma * std::sqrt(std::log(static_cast<double>(p))) / std::sqrt(eff),
          4.0 * sigma * std::sqrt(std::log(static_cast<double>(np))) / eff};
}

}  // namespace gtcs::solve
