#include "gtcs/corrector.hpp"

#include "gtcs/detector.hpp"

#include <algorithm>
#include <cmath>

#include "gtcs/errors.hpp"
#include "gtcs/kernels.hpp"
#include "gtcs/rng.hpp"
#include "gtcs/stats.hpp"

namespace gtcs::correct {

PerturbationSet build_perturbation_set(const BinMat& B, int row, sim::MmeModel model,
                                       std::span<const int> flagged_rows) {
  const int p = B.cols();
  if (row < 0 || row >= B.rows()) throw ParameterError("build_perturbation_set: bad row");
  PerturbationSet out;
  out.row = row;
  out.model = model;
  const std::uint8_t* base = B.row(row);
  out.candidates.emplace_back(base, base + p);

  switch (model) {
    case sim::MmeModel::SSM:
      for (int j = 0; j < p; ++j) {
        auto cand = out.candidates.front();
        cand[j] = 1 - cand[j];
        out.candidates.push_back(std::move(cand));
      }
      break;
    case sim::MmeModel::ASM:
      for (int j = 0; j < p; ++j) {
        const int j2 = (j + 1) % p;
        if (base[j] == base[j2]) continue;
        auto cand = out.candidates.front();
        std::swap(cand[j], cand[j2]);
        out.candidates.push_back(std::move(cand));
      }
      break;
    case sim::MmeModel::PERM:
      if (flagged_rows.empty())
        throw ParameterError("build_perturbation_set: PERM needs a nonempty flagged set");
      for (int k : flagged_rows) {
        if (k == row) continue;
        const std::uint8_t* src = B.row(k);
        out.candidates.emplace_back(src, src + p);
      }
      break;
  }
  return out;
}

double ape(double z_i, std::span<const std::uint8_t> candidate_row, std::span<const double> beta) {
  return std::fabs(z_i - dot_row(candidate_row, beta));
}

namespace {

struct Scored {
  double ape;
  int index;     // candidate index in the perturbation-set ordering
  int src_row;   // PERM: source row of the candidate; else -1
};

}  // namespace

std::pair<BinMat, std::vector<RowDecision>> correct_rows(std::span<const double> z, const BinMat& B,
                                                         std::span<const int> flagged_rows,
                                                         std::span<const double> beta_hat,
                                                         sim::MmeModel model,
                                                         const CorrectOptions& opts) {
  const int p = B.cols();
  BinMat out = B;  // candidate sets come from the input matrix, not partial edits
  std::vector<RowDecision> log;
  const double z_scale = 1.0 + kern::max_abs(z.data(), z.size());
  const double thresh =
      (opts.k_margin + 1.0) * std::max(opts.scale, 1e-12 * z_scale);

  for (int i : flagged_rows) {
    const std::uint8_t* base = B.row(i);
    const double pred0 = dot_row({base, static_cast<std::size_t>(p)}, beta_hat);
    const double ape0 = std::fabs(z[i] - pred0);
    const double tol = 1e-9 * (1.0 + std::fabs(z[i]));

    // best strictly-improving candidate in index order (original wins ties)
    Scored best{ape0, 0, -1};
    double runner_up = ape0;
    auto consider = [&](double a, int idx, int src) {
      if (a < best.ape - tol) {
        runner_up = best.ape;
        best = {a, idx, src};
      } else if (idx != 0 && a < runner_up) {
        runner_up = a;
      }
    };

    switch (model) {
      case sim::MmeModel::SSM:
        for (int j = 0; j < p; ++j) {
          const double shift = base[j] ? -beta_hat[j] : beta_hat[j];
          consider(std::fabs(z[i] - (pred0 + shift)), 1 + j, -1);
        }
        break;
      case sim::MmeModel::ASM: {
        int idx = 0;
        for (int j = 0; j < p; ++j) {
          const int j2 = (j + 1) % p;
          if (base[j] == base[j2]) continue;
          ++idx;
          const double shift =
              base[j] == 0 ? beta_hat[j] - beta_hat[j2] : beta_hat[j2] - beta_hat[j];
          consider(std::fabs(z[i] - (pred0 + shift)), idx, -1);
        }
        break;
      }
      case sim::MmeModel::PERM: {
        int idx = 0;
        std::vector<Scored> scored;
        const std::span<const int> pool =
            opts.perm_pool.empty() ? flagged_rows : std::span<const int>(opts.perm_pool);
        for (int k : pool) {
          if (k == i) continue;
          ++idx;
          const double a =
              ape(z[i], {B.row(k), static_cast<std::size_t>(p)}, beta_hat);
          consider(a, idx, k);
          scored.push_back({a, idx, k});
        }
        // an alias can win the argmin yet fail the mutual-fit gate while the
        // true swap (both directions consistent) sits just behind it; walk
        // the candidates in APE order and take the first acceptable one
        if (opts.scale > 0.0 && best.index != 0) {
          std::stable_sort(scored.begin(), scored.end(),
                           [](const Scored& a, const Scored& b) { return a.ape < b.ape; });
          best = {ape0, 0, -1};
          for (const Scored& cand : scored) {
            if (cand.ape >= ape0 - tol || cand.ape > thresh) break;  // sorted: no hope past here
            const double reverse =
                ape(z[cand.src_row], {base, static_cast<std::size_t>(p)}, beta_hat);
            if (reverse <= thresh) {
              best = cand;
              break;
            }
          }
        }
        break;
      }
    }

    bool accept = best.index != 0;
    if (accept && opts.scale > 0.0) {
      accept = ape0 > thresh && best.ape <= thresh;
      if (accept && model == sim::MmeModel::PERM) {
        const double reverse =
            ape(z[best.src_row], {base, static_cast<std::size_t>(p)}, beta_hat);
        accept = reverse <= thresh;
      }
    }

    if (accept) {
      if (model == sim::MmeModel::SSM) {
        const int j = best.index - 1;
        out(i, j) = 1 - out(i, j);
      } else if (model == sim::MmeModel::ASM) {
        int idx = 0;
        for (int j = 0; j < p; ++j) {
          const int j2 = (j + 1) % p;
          if (base[j] == base[j2]) continue;
          if (++idx == best.index) {
            std::swap(out(i, j), out(i, j2));
            break;
          }
        }
      } else {
        const std::uint8_t* src = B.row(best.src_row);
        std::uint8_t* dst = out.row(i);
        for (int j = 0; j < p; ++j) dst[j] = src[j];
      }
      log.push_back({i, best.index, ape0, best.ape, runner_up});
    } else {
      log.push_back({i, 0, ape0, ape0, best.index != 0 ? best.ape : runner_up});
    }
  }
  return {std::move(out), std::move(log)};
}

double f_ape(std::span<const double> z, const BinMat& B_hat, std::span<const double> beta_lasso) {
  const int n = B_hat.rows();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = z[i] - dot_row({B_hat.row(i), static_cast<std::size_t>(B_hat.cols())},
                                    beta_lasso);
    acc += r * r;
  }
  return acc / static_cast<double>(n);
}

CorrectionResult cape(std::span<const double> z, const BinMat& B, double theta,
                      sim::MmeModel model, const CapeConfig& cfg, double sigma_tilde,
                      const StageObserver& observer) {
  const int n = B.rows(), p = B.cols();
  const int np = n / 2;
  const int r_U = cfg.r_U >= 0
                      ? std::min(cfg.r_U, np - 1)
                      : std::min(static_cast<int>(std::lround(cfg.zeta * np)), np - 1);

  CorrectionResult res;
  res.B_hat = B;

  const double z_floor = 1e-4 * std::max(1.0, rms(z));
  const double sig_t = std::max(sigma_tilde, 0.0);
  const double lam_z = solve::theory_lambdas(std::max(sig_t, z_floor), p, n, 0).first;

  // f(0): stopping baseline on the uncorrected system
  double prev_f;
  {
    const solve::RobustFit lz = solve::lasso(z, B.to_real(), lam_z);
    prev_f = f_ape(z, B, lz.beta);
  }

  for (int stage = 1; stage <= cfg.max_stages; ++stage) {
    Rng shuffle_rng(cfg.seed, Stream::shuffle, static_cast<std::uint64_t>(stage));
    const std::vector<int> order = shuffle_rng.permutation(n);
    const sim::CenteredSystem cs = sim::center(z, res.B_hat, theta, order, sig_t);
    const double sigma_c = std::max(cs.sigma_centered, 1e-4 * std::max(1.0, rms(cs.y)));

    detect::DetectionResult det = detect::detect_mmes(cs, sigma_c, r_U, cfg.alpha);

    // estimate on the clean centered subset
    std::vector<int> keep;
    for (int i = 0; i < np; ++i)
      if (!std::binary_search(det.J.begin(), det.J.end(), i)) keep.push_back(i);
    Mat Ak = cs.A.select_rows(keep);
    std::vector<double> yk(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) yk[i] = cs.y[keep[i]];
    auto [l1, l2] = solve::theory_lambdas(sigma_c, p, static_cast<int>(keep.size()), 0);
    solve::RobustFit ref;
    try {
      ref = solve::relaxed_robust_lasso(yk, Ak, l1, l2, {.sel_factor = cfg.sel_factor_estimate});
    } catch (const SolverError&) {
      break;  // abort with partial trace
    }

    // uncentered prediction scale over unflagged rows feeds the certificate
    std::vector<char> is_flagged(n, 0);
    for (int rB : det.rows_B) is_flagged[rB] = 1;
    std::vector<double> ur;
    ur.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (is_flagged[i]) continue;
      ur.push_back(z[i] - dot_row({res.B_hat.row(i), static_cast<std::size_t>(p)}, ref.beta));
    }
    const double scale = rms(ur);

    correct::CorrectOptions co;
    co.scale = scale;
    co.k_margin = cfg.k_margin;
    if (cfg.permissive_perm_pool && model == sim::MmeModel::PERM) {
      co.perm_pool.resize(n);
      for (int i = 0; i < n; ++i) co.perm_pool[i] = i;
    }
    auto [corrected, decisions] =
        correct_rows(z, res.B_hat, det.rows_B, ref.beta, model, co);
    res.B_hat = std::move(corrected);

    // stopping function: plain lasso on the uncentered corrected system
    double f_now = 0.0;
    try {
      const solve::RobustFit lz = solve::lasso(z, res.B_hat.to_real(), lam_z);
      f_now = f_ape(z, res.B_hat, lz.beta);
    } catch (const SolverError&) {
      break;
    }

    res.stages.push_back({stage, det.rows_B, std::move(decisions), f_now});
    res.f_ape_trace.push_back(f_now);
    res.stages_run = stage;
    if (observer) observer(stage, res.stages.back().flagged_rows, res.B_hat);

    if (cfg.epsilon >= 0.0) {  // negative epsilon: run every stage
      const double eps = std::max(cfg.epsilon, cfg.epsilon_rel * std::fabs(prev_f));
      if (std::fabs(f_now - prev_f) <= eps) break;
    }
    prev_f = f_now;
  }

  // final estimates on the corrected system, identity pairing
  const sim::CenteredSystem cs = sim::center(z, res.B_hat, theta, {}, sig_t);
  const double sigma_c = std::max(cs.sigma_centered, 1e-4 * std::max(1.0, rms(cs.y)));
  auto [l1, l2] = solve::theory_lambdas(sigma_c, p, np, 0);
  res.final_fit = solve::robust_lasso(cs.y, cs.A, l1, l2);
  res.beta_relaxed =
      solve::relaxed_robust_lasso(cs.y, cs.A, l1, l2, {.sel_factor = cfg.sel_factor_estimate})
          .beta;
  return res;
}

}  // namespace gtcs::correct
