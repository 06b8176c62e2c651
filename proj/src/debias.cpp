#include "gtcs/debias.hpp"

#include <cmath>

#include "gtcs/errors.hpp"
#include "gtcs/kernels.hpp"

namespace gtcs::debias {

DebiasOperator closed_form_W(const Mat& A, double theta, double c_mu, Smoothing smoothing) {
  const int np = A.rows(), p = A.cols();
  DebiasOperator op;
  op.np = np;
  op.p = p;
  op.h = 1.0 / (2.0 * theta * (1.0 - theta));
  op.mu1 = 2.0 * std::sqrt(2.0 * std::log(static_cast<double>(p)) / np);
  op.mu2 = 4.0 * std::sqrt(std::log(2.0 * static_cast<double>(np) * p) /
                           (static_cast<double>(np) * p)) +
           1.0 / np;
  op.mu3 = c_mu * std::sqrt(2.0 * std::log(static_cast<double>(np)) / static_cast<double>(p));
  if (op.mu3 >= 1.0)
    throw InfeasibleError("closed_form_W: mu3 >= 1 (p too small relative to log n')");

  std::vector<double> rowsq(np);
  for (int i = 0; i < np; ++i) {
    rowsq[i] = kern::nrm2sq(A.row(i), p);
    if (rowsq[i] == 0.0) throw DegenerateError("closed_form_W: zero row in A");
  }

  op.W = Mat(np, p);
  for (int i = 0; i < np; ++i) {
    const double c = static_cast<double>(p) * (1.0 - op.mu3) / rowsq[i];
    const double* a = A.row(i);
    double* w = op.W.row(i);
    for (int j = 0; j < p; ++j) w[j] = c * a[j];
  }

  // Gram of the rows drives both tau and the smoothing matrix.
  Mat G(np, np);
  for (int i = 0; i < np; ++i)
    for (int k = i; k < np; ++k) {
      const double g = kern::dot(A.row(i), A.row(k), p);
      G(i, k) = g;
      G(k, i) = g;
    }
  op.tau = 0.0;
  for (int i = 0; i < np; ++i)
    for (int k = 0; k < np; ++k)
      if (i != k) op.tau = std::max(op.tau, std::fabs(G(i, k)) / rowsq[i]);
  op.feasible = op.tau / (1.0 + op.tau) <= op.mu3;

  op.M = Mat(np, np);
  const double one_minus = 1.0 - op.mu3;
  switch (smoothing) {
    case Smoothing::p_awt:
      // M_ik = (a_i . w_k) / p = (1 - mu3) (a_i . a_k) / ||a_k||^2
      for (int i = 0; i < np; ++i)
        for (int k = 0; k < np; ++k) op.M(i, k) = one_minus * G(i, k) / rowsq[k];
      break;
    case Smoothing::np_awt:
      for (int i = 0; i < np; ++i)
        for (int k = 0; k < np; ++k)
          op.M(i, k) = static_cast<double>(p) * one_minus * G(i, k) / (rowsq[k] * np);
      break;
    case Smoothing::np_wat:
      for (int i = 0; i < np; ++i)
        for (int k = 0; k < np; ++k)
          op.M(i, k) = static_cast<double>(p) * one_minus * G(i, k) / (rowsq[i] * np);
      break;
  }

  op.row_norm.resize(np);
  for (int i = 0; i < np; ++i) {
    double s = 0.0;
    for (int k = 0; k < np; ++k) {
      const double v = (i == k ? 1.0 : 0.0) - op.M(i, k);
      s += v * v;
    }
    op.row_norm[i] = std::sqrt(s);
  }
  return op;
}

ConstraintReport verify_constraints(const Mat& W, const Mat& A, double theta, Radii radii,
                                    double c_mu) {
  const int np = A.rows(), p = A.cols();
  const double h = 1.0 / (2.0 * theta * (1.0 - theta));
  const double lg_p = std::log(static_cast<double>(p));
  const double lg_np = std::log(static_cast<double>(np));
  const double h2 = radii == Radii::h_scaled ? h * h : 1.0;
  const double h3 = radii == Radii::h_scaled ? h * h * h : 1.0;

  ConstraintReport rep{};
  const Mat Wt = W.transposed();
  const Mat At = A.transposed();

  // C0: max_j ||w_.j||^2 / n'
  double c0 = 0.0;
  for (int j = 0; j < p; ++j)
    c0 = std::max(c0, kern::nrm2sq(Wt.row(j), np) / static_cast<double>(np));
  rep.c0 = {"C0", c0, 1.0 + h2 * std::sqrt(lg_p / np), false};

  // C1: | I_p - (1/n') W^T A |_inf
  double c1 = 0.0;
  for (int j = 0; j < p; ++j) {
    const double* wj = Wt.row(j);
    for (int l = 0; l < p; ++l) {
      const double v = (j == l ? 1.0 : 0.0) - kern::dot(wj, At.row(l), np) / np;
      c1 = std::max(c1, std::fabs(v));
    }
  }
  rep.c1 = {"C1", c1, h2 * 2.0 * std::sqrt(2.0 * lg_p / np), false};

  // C2: | (1/p) (I - (1/n') A W^T) A |_inf
  Mat S(np, np);
  for (int i = 0; i < np; ++i)
    for (int k = 0; k < np; ++k)
      S(i, k) = (i == k ? 1.0 : 0.0) - kern::dot(A.row(i), W.row(k), p) / np;
  double c2 = 0.0;
  for (int i = 0; i < np; ++i) {
    const double* s = S.row(i);
    for (int j = 0; j < p; ++j) {
      const double v = kern::dot(s, At.row(j), np) / p;
      c2 = std::max(c2, std::fabs(v));
    }
  }
  rep.c2 = {"C2", c2, h3 * 4.0 * std::sqrt(std::log(2.0 * np * p) / (static_cast<double>(np) * p)) + 1.0 / np,
            false};

  // C3: | (1/p) A W^T - I |_inf
  double c3 = 0.0;
  for (int i = 0; i < np; ++i)
    for (int k = 0; k < np; ++k) {
      const double v = kern::dot(A.row(i), W.row(k), p) / p - (i == k ? 1.0 : 0.0);
      c3 = std::max(c3, std::fabs(v));
    }
  const double mu3 = h2 * c_mu * std::sqrt(2.0 * lg_np / p);
  rep.c3 = {"C3", c3, mu3, false};

  const double slack = 1e-12;
  rep.c0.pass = rep.c0.lhs <= rep.c0.radius + slack;
  rep.c1.pass = rep.c1.lhs <= rep.c1.radius + slack;
  rep.c2.pass = rep.c2.lhs <= rep.c2.radius + slack;
  rep.c3.pass = rep.c3.lhs <= rep.c3.radius + slack * (1.0 + std::fabs(mu3));
  rep.all_pass = rep.c0.pass && rep.c1.pass && rep.c2.pass && rep.c3.pass;
  return rep;
}

DebiasedDelta debias_delta(std::span<const double> y, const Mat& A, const DebiasOperator& op,
                           const solve::RobustFit& fit, double sigma) {
  if (sigma <= 0.0) throw ParameterError("debias_delta: sigma must be positive");
  const int np = A.rows();
  std::vector<double> resid(y.begin(), y.end());
  for (int i = 0; i < np; ++i) {
    resid[i] -= kern::dot(A.row(i), fit.beta.data(), fit.beta.size());
    if (!fit.delta.empty()) resid[i] -= fit.delta[i];
  }
  DebiasedDelta out;
  out.delta_w.resize(np);
  out.sigma_diag.resize(np);
  for (int i = 0; i < np; ++i) {
    double corr = resid[i];
    corr -= kern::dot(op.M.row(i), resid.data(), np);
    out.delta_w[i] = (fit.delta.empty() ? 0.0 : fit.delta[i]) + corr;
    out.sigma_diag[i] = sigma * op.row_norm[i];
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> debias_beta(std::span<const double> y,
                                                                const Mat& A,
                                                                std::span<const double> beta_hat,
                                                                double sigma) {
  const int np = A.rows(), p = A.cols();
  const Mat At = A.transposed();
  const double mu_b = 2.0 * std::sqrt(2.0 * std::log(static_cast<double>(p)) / np);
  std::vector<double> resid(y.begin(), y.end());
  for (int i = 0; i < np; ++i) resid[i] -= kern::dot(A.row(i), beta_hat.data(), beta_hat.size());

  std::vector<double> bw(p), se(p);
  for (int j = 0; j < p; ++j) {
    const double colsq = kern::nrm2sq(At.row(j), np);
    if (colsq == 0.0) throw DegenerateError("debias_beta: zero column in A");
    bw[j] = beta_hat[j] + (1.0 - mu_b) * kern::dot(At.row(j), resid.data(), np) / colsq;
    se[j] = sigma * std::fabs(1.0 - mu_b) / std::sqrt(colsq);
  }
  return {std::move(bw), std::move(se)};
}

}  // namespace gtcs::debias
