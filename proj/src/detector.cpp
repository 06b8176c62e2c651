#include "gtcs/detector.hpp"

#include <algorithm>
#include <cmath>

#include "gtcs/errors.hpp"
#include "gtcs/kernels.hpp"
#include "gtcs/stats.hpp"

namespace gtcs::detect {

OdrltResult odrlt_test(const debias::DebiasedDelta& dd, double alpha, bool one_sided) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("odrlt_test: alpha outside (0,1)");
  const std::size_t np = dd.delta_w.size();
  OdrltResult out;
  out.stats.resize(np);
  out.pvalues.resize(np);
  const double tau = normal_quantile(one_sided ? 1.0 - alpha : 1.0 - alpha / 2.0);
  for (std::size_t i = 0; i < np; ++i) {
    if (dd.sigma_diag[i] <= 0.0) throw DegenerateError("odrlt_test: zero sigma_diag entry");
    const double stat = std::fabs(dd.delta_w[i]) / dd.sigma_diag[i];
    out.stats[i] = stat;
    out.pvalues[i] = one_sided ? 1.0 - normal_cdf(stat) : 2.0 * (1.0 - normal_cdf(stat));
    if (stat > tau) out.rejected.push_back(static_cast<int>(i));
  }
  return out;
}

DetectionResult detect_mmes(std::span<const double> y, const Mat& A, double sigma, int r_U,
                            double alpha, const DetectOptions& opts) {
  const int np_full = A.rows(), p = A.cols();
  if (r_U >= np_full || r_U < 0) throw ParameterError("detect_mmes: need 0 <= r_U < n'");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("detect_mmes: alpha outside (0,1)");

  DetectionResult res;
  res.stats.assign(np_full, 0.0);
  res.pvalues.assign(np_full, 1.0);
  std::vector<char> flagged(np_full, 0);
  std::vector<int> J;

  const double y_floor = 1e-9 * std::max(1.0, rms(y));
  const double lambda_floor = 1e-4 * std::max(1.0, rms(y));

  for (int pass = 0; pass < opts.max_iterations; ++pass) {
    std::vector<int> keep;
    keep.reserve(np_full);
    for (int i = 0; i < np_full; ++i)
      if (!flagged[i]) keep.push_back(i);
    const int m = static_cast<int>(keep.size());
    if (m < 4) break;

    Mat Ak = A.select_rows(keep);
    std::vector<double> yk(m);
    for (int i = 0; i < m; ++i) yk[i] = y[keep[i]];

    auto [l1, l2] = solve::theory_lambdas(std::max(sigma, lambda_floor), p, m, 0);
    solve::RobustFit fit;
    try {
      fit = solve::relaxed_robust_lasso(yk, Ak, l1, l2, {.sel_factor = opts.sel_factor});
    } catch (const SolverError&) {
      break;  // keep whatever has been flagged so far
    }

    debias::DebiasOperator op;
    try {
      op = debias::closed_form_W(Ak, 0.5, opts.c_mu);
    } catch (const DegenerateError&) {
      break;
    }

    std::vector<double> resid(m);
    for (int i = 0; i < m; ++i) {
      resid[i] = yk[i] - kern::dot(Ak.row(i), fit.beta.data(), fit.beta.size()) - fit.delta[i];
    }
    double scale = opts.sigma_mode == SigmaMode::studentized_rms ? rms(resid) : sigma;
    scale = std::max(scale, y_floor);  // exact fits produce no spurious flags

    debias::DebiasedDelta dd = debias::debias_delta(yk, Ak, op, fit, scale);
    const double level =
        opts.multiplicity == Multiplicity::bonferroni ? alpha / m : alpha;
    OdrltResult pass_res = odrlt_test(dd, std::min(level, 0.5), opts.one_sided);

    for (int i = 0; i < m; ++i) {
      res.stats[keep[i]] = pass_res.stats[i];
      res.pvalues[keep[i]] = pass_res.pvalues[i];
    }

    std::vector<int> fresh;
    for (int loc : pass_res.rejected)
      if (!flagged[keep[loc]]) fresh.push_back(keep[loc]);
    if (fresh.empty()) break;
    for (int gi : fresh) {
      flagged[gi] = 1;
      J.push_back(gi);
    }
    if (static_cast<int>(J.size()) >= r_U) {
      // retain the r_U strongest by their last-known statistic
      std::sort(J.begin(), J.end(),
                [&](int a, int b) { return res.stats[a] > res.stats[b]; });
      J.resize(r_U);
      break;
    }
  }

  std::sort(J.begin(), J.end());
  res.J = std::move(J);
  res.r_hat = static_cast<int>(res.J.size());
  return res;
}

DetectionResult detect_mmes(const sim::CenteredSystem& cs, double sigma, int r_U, double alpha,
                            const DetectOptions& opts) {
  DetectionResult res = detect_mmes(cs.y, cs.A, sigma, r_U, alpha, opts);
  res.rows_B.clear();
  for (int i : res.J) {
    res.rows_B.push_back(cs.pairing[i].first);
    res.rows_B.push_back(cs.pairing[i].second);
  }
  std::sort(res.rows_B.begin(), res.rows_B.end());
  return res;
}

}  // namespace gtcs::detect
