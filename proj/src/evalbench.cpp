#include "gtcs/evalbench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "gtcs/errors.hpp"
#include "gtcs/kernels.hpp"
#include "gtcs/rng.hpp"
#include "gtcs/stats.hpp"

namespace gtcs::bench {

std::pair<double, double> sens_spec(std::span<const int> true_support,
                                    std::span<const int> declared_support, int p) {
  std::vector<char> truth(p, 0), decl(p, 0);
  for (int j : true_support) truth.at(j) = 1;
  for (int j : declared_support) decl.at(j) = 1;
  int tp = 0, fn = 0, tn = 0, fp = 0;
  for (int j = 0; j < p; ++j) {
    if (truth[j]) {
      decl[j] ? ++tp : ++fn;
    } else {
      decl[j] ? ++fp : ++tn;
    }
  }
  const double sens = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
  const double spec = tn + fp == 0 ? 1.0 : static_cast<double>(tn) / (tn + fp);
  return {sens, spec};
}

double rrmse(std::span<const double> beta_true, std::span<const double> beta_hat) {
  const double denom = std::sqrt(kern::nrm2sq(beta_true.data(), beta_true.size()));
  if (denom == 0.0) throw ParameterError("rrmse: zero true signal");
  double acc = 0.0;
  for (std::size_t j = 0; j < beta_true.size(); ++j) {
    const double d = beta_true[j] - beta_hat[j];
    acc += d * d;
  }
  return std::sqrt(acc) / denom;
}

const char* to_string(Setting s) {
  switch (s) {
    case Setting::EA: return "EA";
    case Setting::EB: return "EB";
    case Setting::EC: return "EC";
    case Setting::ED: return "ED";
    case Setting::ZETA: return "ZETA";
    case Setting::LOG_SIGMA: return "LOG_SIGMA";
    case Setting::LOG_N: return "LOG_N";
    case Setting::MULTISTAGE: return "MULTISTAGE";
    case Setting::CONVERGENCE: return "CONVERGENCE";
  }
  return "?";
}

Setting setting_from_string(const std::string& s) {
  for (Setting v : {Setting::EA, Setting::EB, Setting::EC, Setting::ED, Setting::ZETA,
                    Setting::LOG_SIGMA, Setting::LOG_N, Setting::MULTISTAGE, Setting::CONVERGENCE})
    if (s == to_string(v)) return v;
  throw ParameterError("unknown setting: " + s);
}

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::RL: return "RL";
    case Estimator::MMER: return "MMER";
    case Estimator::CAPE: return "CAPE";
    case Estimator::ODRLT: return "ODRLT";
  }
  return "?";
}

ExperimentConfig make_config(Setting setting) {
  ExperimentConfig c;
  c.setting = setting;
  switch (setting) {
    case Setting::EA:
      c.sweep_name = "f_adv";
      c.sweep = {0.02, 0.04, 0.06, 0.08, 0.10};
      break;
    case Setting::EB:
      c.sweep_name = "n";
      c.sweep = {50, 60, 70, 80, 90};
      break;
    case Setting::EC:
      c.sweep_name = "f_sigma";
      c.sweep = {0.01, 0.02, 0.03, 0.04, 0.05};
      c.f_adv = 0.01;
      break;
    case Setting::ED:
      c.sweep_name = "f_sp";
      c.sweep = {0.01, 0.04, 0.07};
      c.f_adv = 0.01;
      break;
    case Setting::ZETA:
      c.sweep_name = "zeta";
      for (int k = 1; k <= 15; ++k) c.sweep.push_back(0.02 * k);
      c.r_u_matched = true;
      break;
    case Setting::LOG_SIGMA:
      c.sweep_name = "f_sigma";
      c.sweep = {0.002, 0.004, 0.006, 0.008, 0.010};
      c.p = 500;
      c.n = 400;
      c.f_sp = 10.0 / 500.0;
      c.f_adv = 8.0 / 400.0;
      c.model = sim::MmeModel::PERM;
      c.noise = sim::NoiseKind::lognormal_pcr;
      c.trials = 10;
      break;
    case Setting::LOG_N:
      c.sweep_name = "n";
      c.sweep = {250, 300, 350, 400, 450};
      c.p = 500;
      c.f_sp = 10.0 / 500.0;
      c.f_sigma = 0.01;
      c.model = sim::MmeModel::PERM;
      c.noise = sim::NoiseKind::lognormal_pcr;
      c.trials = 10;
      break;
    case Setting::MULTISTAGE:
      c.sweep_name = "model";
      c.sweep = {0, 1, 2};  // SSM, ASM, PERM
      c.p = 200;
      c.n = 100;
      c.f_sp = 5.0 / 200.0;
      c.f_adv = 4.0 / 100.0;
      c.trials = 20;
      c.margin = sim::MarginMode::full_a2;
      c.estimators = {Estimator::CAPE};
      break;
    case Setting::CONVERGENCE:
      c.sweep_name = "r";
      c.sweep = {0, 2, 4, 6, 8, 10};
      c.model = sim::MmeModel::PERM;
      c.trials = 1;
      c.epsilon_rel = -1.0;  // run all stages
      c.estimators = {Estimator::CAPE};
      break;
  }
  return c;
}

double lognormal_sigma_equiv(std::span<const double> z, double sigma_exp, double q) {
  double acc = 0.0;
  for (double v : z) acc += std::fabs(v);
  return sigma_exp * std::log(1.0 + q) * acc / static_cast<double>(z.size());
}

namespace {

int effective_r_U(const PipelineConfig& cfg, int np) {
  const int v = cfg.r_U >= 0 ? cfg.r_U : static_cast<int>(std::lround(cfg.zeta * np));
  return std::clamp(v, 0, np - 1);
}

// Two-sided z-test on the debiased coordinates; the residual-estimated scale
// keeps the test conservative when sigma is a nuisance.
std::vector<int> declared_support(std::span<const double> y, const Mat& A,
                                  const solve::RobustFit& fit, double alpha) {
  const int np = A.rows();
  std::vector<double> resid(y.begin(), y.end());
  std::vector<double> y_less_delta(y.begin(), y.end());
  for (int i = 0; i < np; ++i) {
    resid[i] -= kern::dot(A.row(i), fit.beta.data(), fit.beta.size());
    if (!fit.delta.empty()) {
      resid[i] -= fit.delta[i];
      y_less_delta[i] -= fit.delta[i];
    }
  }
  // standardize with the penalized-fit residual scale (upward-biased by the
  // shrinkage, which keeps the test conservative), floored at 0.1% of the
  // data scale where residuals are coordinate-descent dust rather than noise
  const double sig = std::max({fit.base_scale, rms(resid), 1e-3 * rms(y), 1e-300});
  auto [bw, se] = debias::debias_beta(y_less_delta, A, fit.beta, sig);
  const double tau = normal_quantile(1.0 - alpha / 2.0);
  std::vector<int> out;
  for (std::size_t j = 0; j < bw.size(); ++j)
    if (std::fabs(bw[j]) / std::max(se[j], 1e-300) > tau) out.push_back(static_cast<int>(j));
  return out;
}

// relaxed fit for the internal machinery plus the plain penalized fit the
// pipelines report (the estimators named by the experiment protocol)
std::pair<solve::RobustFit, solve::RobustFit> fits_on(std::span<const double> y, const Mat& A,
                                                      double sigma_c) {
  auto [l1, l2] = solve::theory_lambdas(
      std::max(sigma_c, 1e-4 * std::max(1.0, rms(y))), A.cols(), A.rows(), 0);
  solve::RobustFit raw;
  solve::RobustFit relaxed =
      solve::relaxed_robust_lasso(y, A, l1, l2, {.sel_factor = 0.5}, &raw);
  if (raw.beta.empty()) raw = relaxed;  // penalized fit failed to converge
  return {std::move(relaxed), std::move(raw)};
}

}  // namespace

PipelineResult pipeline_rl(std::span<const double> z, const BinMat& B, const PipelineConfig& cfg) {
  const sim::CenteredSystem cs = sim::center(z, B, cfg.theta, {}, cfg.sigma_tilde);
  PipelineResult out;
  auto [relaxed, raw] = fits_on(cs.y, cs.A, cs.sigma_centered);
  out.fit = raw;
  out.beta_hat = raw.beta;
  out.declared_support = declared_support(cs.y, cs.A, relaxed, cfg.alpha);
  return out;
}

PipelineResult pipeline_mmer(std::span<const double> z, const BinMat& B,
                             const PipelineConfig& cfg) {
  const sim::CenteredSystem cs = sim::center(z, B, cfg.theta, {}, cfg.sigma_tilde);
  const int np = cs.A.rows();
  const double sigma_c = std::max(cs.sigma_centered, 1e-4 * std::max(1.0, rms(cs.y)));
  PipelineResult out;
  out.detection = detect::detect_mmes(cs, sigma_c, effective_r_U(cfg, np), cfg.alpha);
  std::vector<int> keep;
  for (int i = 0; i < np; ++i)
    if (!std::binary_search(out.detection.J.begin(), out.detection.J.end(), i)) keep.push_back(i);
  Mat Ak = cs.A.select_rows(keep);
  std::vector<double> yk(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) yk[i] = cs.y[keep[i]];
  auto [relaxed, raw] = fits_on(yk, Ak, cs.sigma_centered);
  out.fit = raw;
  out.beta_hat = raw.beta;
  out.declared_support = declared_support(yk, Ak, relaxed, cfg.alpha);
  return out;
}

PipelineResult pipeline_cape(std::span<const double> z, const BinMat& B,
                             const PipelineConfig& cfg) {
  correct::CapeConfig cc;
  cc.zeta = cfg.zeta;
  cc.r_U = cfg.r_U;
  cc.alpha = cfg.alpha;
  cc.epsilon_rel = cfg.epsilon_rel;
  cc.epsilon = cfg.epsilon_rel < 0 ? -1.0 : 0.0;
  cc.max_stages = cfg.max_stages;
  cc.seed = cfg.seed;
  const correct::CorrectionResult cr = correct::cape(z, B, cfg.theta, cfg.model, cc,
                                                     cfg.sigma_tilde);
  const sim::CenteredSystem cs = sim::center(z, cr.B_hat, cfg.theta, {}, cfg.sigma_tilde);
  PipelineResult out;
  auto [relaxed, raw] = fits_on(cs.y, cs.A, cs.sigma_centered);
  out.fit = raw;
  out.beta_hat = raw.beta;
  out.declared_support = declared_support(cs.y, cs.A, relaxed, cfg.alpha);
  return out;
}

PipelineResult pipeline_odrlt(std::span<const double> z, const BinMat& B,
                              const PipelineConfig& cfg) {
  const sim::CenteredSystem cs = sim::center(z, B, cfg.theta, {}, cfg.sigma_tilde);
  PipelineResult out;
  auto [relaxed, raw] = fits_on(cs.y, cs.A, cs.sigma_centered);
  out.fit = raw;
  out.beta_hat = raw.beta;
  out.declared_support = declared_support(cs.y, cs.A, relaxed, cfg.alpha);
  return out;
}

namespace {

struct Instance {
  BinMat B;           // raw pooling matrix (2n rows)
  BinMat B_tilde;
  sim::SignalVector signal;
  std::vector<sim::MmeRecord> records;
  int n_centered;
  int r;
};

Instance build_instance(const ExperimentConfig& cfg, double sweep_value, int sweep_idx) {
  Instance inst;
  int n_c = cfg.n;
  double f_sp = cfg.f_sp, f_adv = cfg.f_adv;
  switch (cfg.setting) {
    case Setting::EA: f_adv = sweep_value; break;
    case Setting::EB: n_c = static_cast<int>(sweep_value); break;
    case Setting::EC: break;  // noise handled per trial
    case Setting::ED: f_sp = sweep_value; break;
    case Setting::ZETA: f_adv = sweep_value; break;
    case Setting::LOG_SIGMA: break;
    case Setting::LOG_N: n_c = static_cast<int>(sweep_value); break;
    case Setting::MULTISTAGE: break;
    case Setting::CONVERGENCE: break;
  }
  inst.n_centered = n_c;
  const int s = std::max(1, static_cast<int>(std::lround(f_sp * cfg.p)));
  int r = cfg.setting == Setting::CONVERGENCE ? static_cast<int>(sweep_value)
                                              : static_cast<int>(std::lround(f_adv * n_c));
  const sim::MmeModel model =
      cfg.setting == Setting::MULTISTAGE
          ? static_cast<sim::MmeModel>(static_cast<int>(sweep_value))
          : cfg.model;
  if (model == sim::MmeModel::PERM && r % 2 != 0) ++r;
  inst.r = r;

  const std::uint64_t mat_salt =
      (cfg.setting == Setting::EB || cfg.setting == Setting::LOG_N) ? sweep_idx + 1 : 0;
  const std::uint64_t sig_salt = cfg.setting == Setting::ED ? sweep_idx + 1 : 0;
  sim::PoolingSystem sys;
  sys.n = 2 * n_c;
  sys.p = cfg.p;
  sys.theta = cfg.theta;
  sys.seed = derive(cfg.master_seed, 101, mat_salt);
  sys.B = sim::bernoulli_matrix(sys.n, cfg.p, cfg.theta, sys.seed);
  inst.signal = sim::gen_signal(cfg.p, s, 100.0, 1000.0, derive(cfg.master_seed, 202, sig_salt));
  inst.B = sys.B;

  // noise scale the injection margins are measured against
  const std::vector<double> clean = matvec(sys.B, inst.signal.beta);
  double sig_t;
  if (cfg.noise == sim::NoiseKind::lognormal_pcr) {
    const double fs = cfg.setting == Setting::LOG_SIGMA ? sweep_value : cfg.f_sigma;
    sig_t = lognormal_sigma_equiv(clean, fs, cfg.q);
  } else {
    const double fs = cfg.setting == Setting::EC ? sweep_value : cfg.f_sigma;
    sig_t = fs * kern::asum(clean.data(), clean.size()) / clean.size();
  }

  if (r > 0) {
    sim::InjectOptions io;
    io.adversarial = true;
    io.margin = cfg.margin;
    io.sigma_tilde = sig_t;
    io.row_limit = n_c;  // first-half rows: each corrupted row pairs with a clean one
    auto [bt, recs] = sim::inject_mmes(sys, inst.signal, model, r,
                                       derive(cfg.master_seed, 303, sweep_idx + 1), io);
    inst.B_tilde = std::move(bt);
    inst.records = std::move(recs);
  } else {
    inst.B_tilde = sys.B;
  }
  return inst;
}

struct TrialTask {
  int sweep_idx;
  int trial;
};

}  // namespace

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  const int n_sweep = static_cast<int>(cfg.sweep.size());

  // instances are shared across trials (fixing rules); build them up front
  std::vector<Instance> instances;
  instances.reserve(n_sweep);
  for (int si = 0; si < n_sweep; ++si) instances.push_back(build_instance(cfg, cfg.sweep[si], si));

  std::vector<TrialTask> tasks;
  for (int si = 0; si < n_sweep; ++si)
    for (int t = 0; t < cfg.trials; ++t) tasks.push_back({si, t});

  struct TrialOut {
    std::vector<TrialRow> rows;
    std::vector<StageRow> stage_rows;
    std::vector<TraceRow> trace_rows;
  };
  std::vector<TrialOut> results(tasks.size());

  auto run_task = [&](std::size_t tidx) {
    const auto [si, trial] = tasks[tidx];
    const Instance& inst = instances[si];
    const double sweep_value = cfg.sweep[si];

    sim::NoiseConfig nc;
    nc.kind = cfg.noise;
    nc.q = cfg.q;
    if (cfg.noise == sim::NoiseKind::lognormal_pcr) {
      nc.sigma_tilde = cfg.setting == Setting::LOG_SIGMA ? sweep_value : cfg.f_sigma;
    } else {
      nc.f_sigma = cfg.setting == Setting::EC ? sweep_value : cfg.f_sigma;
    }
    const std::uint64_t noise_seed = derive(cfg.master_seed, 404, si + 1, trial + 1);
    const sim::MeasurementSet ms = sim::forward(inst.B_tilde, inst.signal, nc, noise_seed);

    PipelineConfig pc;
    pc.theta = cfg.theta;
    pc.alpha = cfg.alpha;
    pc.zeta = cfg.zeta;
    pc.max_stages = cfg.max_stages;
    pc.epsilon_rel = cfg.epsilon_rel;
    pc.seed = derive(cfg.master_seed, 505, si + 1, trial + 1);
    pc.model = cfg.setting == Setting::MULTISTAGE
                   ? static_cast<sim::MmeModel>(static_cast<int>(sweep_value))
                   : cfg.model;
    pc.sigma_tilde = cfg.noise == sim::NoiseKind::lognormal_pcr
                         ? lognormal_sigma_equiv(ms.z, nc.sigma_tilde, cfg.q)
                         : ms.sigma_tilde;
    if (cfg.r_u_matched) pc.r_U = inst.r;

    TrialOut& tout = results[tidx];

    if (cfg.setting == Setting::MULTISTAGE || cfg.setting == Setting::CONVERGENCE) {
      correct::CapeConfig cc;
      cc.zeta = cfg.zeta;
      cc.r_U = cfg.r_u_matched ? inst.r : -1;
      cc.alpha = cfg.alpha;
      cc.epsilon_rel = std::max(cfg.epsilon_rel, 0.0);
      cc.epsilon = cfg.epsilon_rel < 0 ? -1.0 : 0.0;
      cc.max_stages = cfg.max_stages;
      cc.seed = pc.seed;

      if (cfg.setting == Setting::MULTISTAGE) {
        // per-stage counts against the executed matrix
        BinMat before = inst.B;
        std::vector<StageRow> local;
        auto observer = [&](int stage, const std::vector<int>& rowsB, const BinMat& after) {
          std::vector<char> corrupted(before.rows(), 0);
          int remaining = 0;
          for (int i = 0; i < before.rows(); ++i) {
            bool bad = false;
            for (int j = 0; j < before.cols(); ++j)
              if (before(i, j) != inst.B_tilde(i, j)) { bad = true; break; }
            corrupted[i] = bad;
          }
          int net = 0, nef = 0;
          std::vector<char> seen(before.rows(), 0);
          for (int rb : rowsB) {
            if (seen[rb]) continue;
            seen[rb] = 1;
            corrupted[rb] ? ++net : ++nef;
          }
          for (int i = 0; i < after.rows(); ++i) {
            for (int j = 0; j < after.cols(); ++j)
              if (after(i, j) != inst.B_tilde(i, j)) { ++remaining; break; }
          }
          local.push_back({to_string(pc.model), trial, stage, static_cast<double>(remaining),
                           static_cast<double>(nef), static_cast<double>(net)});
          before = after;
        };
        const correct::CorrectionResult cr =
            correct::cape(ms.z, inst.B, cfg.theta, pc.model, cc, pc.sigma_tilde, observer);
        // carry the final state through unrun stages
        double last_ne = inst.r;
        int last_stage = 0;
        for (const auto& row : local) {
          last_ne = row.n_e;
          last_stage = row.stage;
        }
        for (int k = last_stage + 1; k <= cfg.max_stages; ++k)
          local.push_back({to_string(pc.model), trial, k, last_ne, 0.0, 0.0});
        tout.stage_rows = std::move(local);
        (void)cr;
      } else {
        const correct::CorrectionResult cr =
            correct::cape(ms.z, inst.B, cfg.theta, pc.model, cc, pc.sigma_tilde);
        for (int k = 0; k < static_cast<int>(cr.f_ape_trace.size()); ++k)
          tout.trace_rows.push_back(
              {static_cast<int>(sweep_value), k + 1, cr.f_ape_trace[k]});
      }
      return;
    }

    for (Estimator est : cfg.estimators) {
      const auto t0 = std::chrono::steady_clock::now();
      PipelineResult pr;
      bool failed = false;
      try {
        switch (est) {
          case Estimator::RL: pr = pipeline_rl(ms.z, inst.B, pc); break;
          case Estimator::MMER: pr = pipeline_mmer(ms.z, inst.B, pc); break;
          case Estimator::CAPE: pr = pipeline_cape(ms.z, inst.B, pc); break;
          case Estimator::ODRLT: pr = pipeline_odrlt(ms.z, inst.B, pc); break;
        }
      } catch (const std::exception&) {
        failed = true;  // a failed trial is recorded, not fatal
      }
      const auto t1 = std::chrono::steady_clock::now();
      TrialRow row;
      row.setting = to_string(cfg.setting);
      row.sweep_name = cfg.sweep_name;
      row.sweep_value = sweep_value;
      row.estimator = to_string(est);
      row.trial = trial;
      row.seed = noise_seed;
      row.runtime_ms =
          cfg.record_timing
              ? std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0
              : 0.0;
      if (failed) {
        row.sensitivity = row.specificity = row.rrmse = std::nan("");
      } else {
        auto [sens, spec] = sens_spec(inst.signal.support, pr.declared_support, cfg.p);
        row.sensitivity = sens;
        row.specificity = spec;
        row.rrmse = rrmse(inst.signal.beta, pr.beta_hat);
      }
      tout.rows.push_back(std::move(row));
    }
  };

  int workers = cfg.workers > 0 ? cfg.workers
                                : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= tasks.size()) return;
          run_task(i);
        }
      });
    for (auto& th : pool) th.join();
  }

  for (auto& r : results) {
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.stage_rows.insert(out.stage_rows.end(), r.stage_rows.begin(), r.stage_rows.end());
    out.trace_rows.insert(out.trace_rows.end(), r.trace_rows.begin(), r.trace_rows.end());
  }
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string trials_to_csv(std::span<const TrialRow> rows) {
  std::string out =
      "setting,sweep_name,sweep_value,estimator,trial,sensitivity,specificity,rrmse,runtime_ms,"
      "seed\n";
  for (const auto& r : rows) {
    out += r.setting + ',' + r.sweep_name + ',' + fmt_double(r.sweep_value) + ',' + r.estimator +
           ',' + std::to_string(r.trial) + ',' + fmt_double(r.sensitivity) + ',' +
           fmt_double(r.specificity) + ',' + fmt_double(r.rrmse) + ',' + fmt_double(r.runtime_ms) +
           ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

std::string aggregate_to_csv(std::span<const TrialRow> rows) {
  struct Key {
    std::string setting, sweep_name, estimator;
    double sweep_value;
    bool operator<(const Key& o) const {
      return std::tie(setting, sweep_name, sweep_value, estimator) <
             std::tie(o.setting, o.sweep_name, o.sweep_value, o.estimator);
    }
  };
  std::map<Key, std::vector<const TrialRow*>> groups;
  for (const auto& r : rows)
    groups[{r.setting, r.sweep_name, r.estimator, r.sweep_value}].push_back(&r);

  std::string out =
      "setting,sweep_name,sweep_value,estimator,trials,sensitivity_mean,sensitivity_std,"
      "specificity_mean,specificity_std,rrmse_mean,rrmse_std,runtime_ms_mean\n";
  for (const auto& [key, members] : groups) {
    std::vector<double> sens, spec, rr, rt;
    for (const TrialRow* r : members) {
      if (!std::isnan(r->sensitivity)) {
        sens.push_back(r->sensitivity);
        spec.push_back(r->specificity);
        rr.push_back(r->rrmse);
      }
      rt.push_back(r->runtime_ms);
    }
    out += key.setting + ',' + key.sweep_name + ',' + fmt_double(key.sweep_value) + ',' +
           key.estimator + ',' + std::to_string(members.size()) + ',' + fmt_double(mean(sens)) +
           ',' + fmt_double(stddev(sens)) + ',' + fmt_double(mean(spec)) + ',' +
           fmt_double(stddev(spec)) + ',' + fmt_double(mean(rr)) + ',' + fmt_double(stddev(rr)) +
           ',' + fmt_double(mean(rt)) + '\n';
  }
  return out;
}

std::string stages_to_csv(std::span<const StageRow> rows) {
  struct Key {
    std::string model;
    int stage;
    bool operator<(const Key& o) const {
      return std::tie(model, stage) < std::tie(o.model, o.stage);
    }
  };
  std::map<Key, std::vector<const StageRow*>> groups;
  for (const auto& r : rows) groups[{r.model, r.stage}].push_back(&r);
  std::string out = "model,stage,n_e,n_ef,n_et,trials\n";
  for (const auto& [key, members] : groups) {
    double ne = 0, nef = 0, net = 0;
    for (const StageRow* r : members) {
      ne += r->n_e;
      nef += r->n_ef;
      net += r->n_et;
    }
    const double cnt = static_cast<double>(members.size());
    out += key.model + ',' + std::to_string(key.stage) + ',' + fmt_double(ne / cnt) + ',' +
           fmt_double(nef / cnt) + ',' + fmt_double(net / cnt) + ',' +
           std::to_string(members.size()) + '\n';
  }
  return out;
}

std::string trace_to_csv(std::span<const TraceRow> rows) {
  std::string out = "r,stage,f_ape\n";
  std::vector<const TraceRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const TraceRow* a, const TraceRow* b) {
    return std::tie(a->r, a->stage) < std::tie(b->r, b->stage);
  });
  for (const TraceRow* r : sorted)
    out += std::to_string(r->r) + ',' + std::to_string(r->stage) + ',' + fmt_double(r->f_ape) +
           '\n';
  return out;
}

std::map<std::string, std::string> plot_data(std::span<const TrialRow> rows) {
  struct Key {
    std::string setting, estimator, metric;
    bool operator<(const Key& o) const {
      return std::tie(setting, estimator, metric) < std::tie(o.setting, o.estimator, o.metric);
    }
  };
  std::map<Key, std::map<double, std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    if (std::isnan(r.sensitivity)) continue;
    auto add = [&](const char* metric, double v) {
      auto& slot = acc[{r.setting, r.estimator, metric}][r.sweep_value];
      slot.first += v;
      slot.second += 1;
    };
    add("sensitivity", r.sensitivity);
    add("specificity", r.specificity);
    add("rrmse", r.rrmse);
  }
  std::map<std::string, std::string> out;
  for (const auto& [key, series] : acc) {
    std::string body = "# " + key.setting + " " + key.estimator + " " + key.metric + "\n";
    for (const auto& [x, sv] : series)
      body += fmt_double(x) + ' ' + fmt_double(sv.first / sv.second) + '\n';
    out[key.setting + "_" + key.estimator + "_" + key.metric + ".dat"] = std::move(body);
  }
  return out;
}

}  // namespace gtcs::bench
