// Command-line front end: single-trial simulation with full trace output,
// experiment sweeps with CSV/plot-data artifacts, and debiasing-constraint
// verification reports.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "gtcs/debias.hpp"
#include "gtcs/errors.hpp"
#include "gtcs/evalbench.hpp"
#include "gtcs/lambda_select.hpp"
#include "gtcs/rng.hpp"
#include "gtcs/stats.hpp"

namespace fs = std::filesystem;
using namespace gtcs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;

std::map<std::string, std::string> parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("config file not found: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r[");
      const auto e = s.find_last_not_of(" \t\r]");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
                 const std::string& out_dir) {
  auto kv = parse_config(config_path);
  auto get_d = [&](const char* k, double dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stod(it->second);
  };
  auto get_i = [&](const char* k, int dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : std::stoi(it->second);
  };
  auto get_s = [&](const char* k, std::string dflt) {
    auto it = kv.find(k);
    return it == kv.end() ? dflt : it->second;
  };

  const int p = get_i("p", 200);
  const int n = get_i("n", 80);  // centered system size; the pooling matrix has 2n rows
  const int s = get_i("s", std::max(1, static_cast<int>(std::lround(get_d("f_sp", 0.05) * p))));
  int r = get_i("r", static_cast<int>(std::lround(get_d("f_adv", 0.02) * n)));
  const double theta = get_d("theta", 0.5);
  const double f_sigma = get_d("f_sigma", 0.01);
  const double q = get_d("q", 0.95);
  const std::uint64_t seed = has_seed ? seed_override : static_cast<std::uint64_t>(get_i("seed", 1));
  const sim::MmeModel model = sim::mme_model_from_string(get_s("model", "SSM"));
  const std::string noise_s = get_s("noise", "gaussian");
  const double zeta = get_d("zeta", 0.2);
  const double alpha = get_d("alpha", 0.05);
  const int max_stages = get_i("stages", 10);
  const double epsilon_rel = get_d("epsilon_rel", 0.05);
  const std::string margin_s = get_s("margin", "a1");
  const std::string lambda_rule = get_s("lambda_rule", "theory");
  if (model == sim::MmeModel::PERM && r % 2 != 0) ++r;

  fs::create_directories(out_dir);

  // generation
  sim::PoolingSystem sys;
  sys.n = 2 * n;
  sys.p = p;
  sys.theta = theta;
  sys.seed = derive(seed, 101, 0);
  sys.B = sim::bernoulli_matrix(sys.n, p, theta, sys.seed);
  const sim::SignalVector signal = sim::gen_signal(p, s, get_d("low", 100.0), get_d("high", 1000.0),
                                                   derive(seed, 202, 0));

  sim::NoiseConfig nc;
  if (noise_s == "gaussian") {
    nc.kind = sim::NoiseKind::gaussian;
    nc.f_sigma = f_sigma;
  } else if (noise_s == "lognormal" || noise_s == "lognormal_pcr") {
    nc.kind = sim::NoiseKind::lognormal_pcr;
    nc.sigma_tilde = f_sigma;
    nc.q = q;
  } else if (noise_s == "none") {
    nc.kind = sim::NoiseKind::none;
  } else {
    std::cerr << "unknown noise kind: " << noise_s << "\n";
    return kExitUsage;
  }

  const std::vector<double> clean = matvec(sys.B, signal.beta);
  double sigma_target = nc.kind == sim::NoiseKind::lognormal_pcr
                            ? bench::lognormal_sigma_equiv(clean, f_sigma, q)
                            : f_sigma * kern::asum(clean.data(), clean.size()) / clean.size();

  BinMat B_tilde = sys.B;
  std::vector<sim::MmeRecord> records;
  if (r > 0) {
    sim::InjectOptions io;
    io.adversarial = get_i("adversarial", 1) != 0;
    io.margin = margin_s == "none"      ? sim::MarginMode::none
                : margin_s == "full_a2" ? sim::MarginMode::full_a2
                                        : sim::MarginMode::a1;
    io.sigma_tilde = sigma_target;
    io.row_limit = n;
    auto [bt, recs] = sim::inject_mmes(sys, signal, model, r, derive(seed, 303, 0), io);
    B_tilde = std::move(bt);
    records = std::move(recs);
  }

  const sim::MeasurementSet ms = sim::forward(B_tilde, signal, nc, derive(seed, 404, 0));
  const double sigma_eq = nc.kind == sim::NoiseKind::lognormal_pcr
                              ? bench::lognormal_sigma_equiv(ms.z, f_sigma, q)
                              : ms.sigma_tilde;

  // optional grid selection on the centered system (slow; default is theory)
  if (lambda_rule == "grid") {
    const sim::CenteredSystem cs = sim::center(ms.z, sys.B, theta, {}, sigma_eq);
    const auto [l1, l2] = select::select_lambdas(cs.y, cs.A, {}, cs.sigma_centered);
    write_file(fs::path(out_dir) / "lambdas.txt",
               "lambda1=" + fmt6(l1) + "\nlambda2=" + fmt6(l2) + "\n");
  }

  // multi-stage correction with full trace
  correct::CapeConfig cc;
  cc.zeta = zeta;
  cc.alpha = alpha;
  cc.max_stages = max_stages;
  cc.epsilon_rel = epsilon_rel;
  cc.seed = derive(seed, 505, 0);
  const correct::CorrectionResult cr = correct::cape(ms.z, sys.B, theta, model, cc, sigma_eq);

  // metrics on the corrected system
  bench::PipelineConfig pc;
  pc.theta = theta;
  pc.sigma_tilde = sigma_eq;
  pc.zeta = zeta;
  pc.alpha = alpha;
  pc.model = model;
  pc.seed = cc.seed;
  pc.max_stages = max_stages;
  pc.epsilon_rel = epsilon_rel;
  const bench::PipelineResult pr = bench::pipeline_cape(ms.z, sys.B, pc);
  const auto [sens, spec] = bench::sens_spec(signal.support, pr.declared_support, p);

  write_file(fs::path(out_dir) / "B.txt", sim::pooling_to_text(sys.B));
  write_file(fs::path(out_dir) / "B_tilde.txt", sim::pooling_to_text(B_tilde));
  write_file(fs::path(out_dir) / "B_hat.txt", sim::pooling_to_text(cr.B_hat));
  write_file(fs::path(out_dir) / "records.csv", sim::records_to_csv(records));
  {
    std::string zcsv = "i,z\n";
    for (std::size_t i = 0; i < ms.z.size(); ++i) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ms.z[i]);
      zcsv += buf;
    }
    write_file(fs::path(out_dir) / "z.csv", zcsv);
  }
  {
    std::string stages = "stage,flagged_rows,f_ape\n";
    std::string decs = "stage,row,model,chosen_index,ape_original,ape_chosen,ape_runner_up\n";
    for (const auto& st : cr.stages) {
      std::string rows;
      for (std::size_t k = 0; k < st.flagged_rows.size(); ++k) {
        if (k) rows += ';';
        rows += std::to_string(st.flagged_rows[k]);
      }
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.17g", st.f_ape_value);
      stages += std::to_string(st.stage) + ",\"" + rows + "\"," + buf + '\n';
      for (const auto& d : st.decisions) {
        char line[160];
        std::snprintf(line, sizeof line, "%d,%d,%s,%d,%.17g,%.17g,%.17g\n", st.stage, d.row,
                      sim::to_string(model), d.chosen_index, d.ape_original, d.ape_chosen,
                      d.ape_runner_up);
        decs += line;
      }
    }
    write_file(fs::path(out_dir) / "stages.csv", stages);
    write_file(fs::path(out_dir) / "decisions.csv", decs);
  }
  {
    const double rr = bench::rrmse(signal.beta, pr.beta_hat);
    std::ostringstream m;
    m << "estimator,sensitivity,specificity,rrmse,stages_run\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "CAPE,%.17g,%.17g,%.17g,%d\n", sens, spec, rr, cr.stages_run);
    m << buf;
    write_file(fs::path(out_dir) / "metrics.csv", m.str());
    std::cout << "CAPE sensitivity=" << fmt6(sens) << " specificity=" << fmt6(spec)
              << " rrmse=" << fmt6(rr) << " stages=" << cr.stages_run << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const std::string& setting_s, int trials, double theta, const std::string& model_s,
              std::uint64_t seed, const std::string& out_dir, int workers,
              const std::string& timing) {
  bench::ExperimentConfig cfg = bench::make_config(bench::setting_from_string(setting_s));
  if (trials > 0) cfg.trials = trials;
  if (theta > 0) cfg.theta = theta;
  if (!model_s.empty()) cfg.model = sim::mme_model_from_string(model_s);
  cfg.master_seed = seed;
  cfg.workers = workers;
  cfg.record_timing = timing != "none";

  const bench::ExperimentOutput out = bench::run_experiment(cfg);
  fs::create_directories(out_dir);
  const std::string base = std::string(bench::to_string(cfg.setting));
  if (!out.rows.empty()) {
    write_file(fs::path(out_dir) / (base + "_trials.csv"), bench::trials_to_csv(out.rows));
    write_file(fs::path(out_dir) / (base + "_aggregate.csv"), bench::aggregate_to_csv(out.rows));
    for (const auto& [name, body] : bench::plot_data(out.rows))
      write_file(fs::path(out_dir) / name, body);
  }
  if (!out.stage_rows.empty())
    write_file(fs::path(out_dir) / (base + "_stages.csv"), bench::stages_to_csv(out.stage_rows));
  if (!out.trace_rows.empty())
    write_file(fs::path(out_dir) / (base + "_fape.csv"), bench::trace_to_csv(out.trace_rows));
  std::cout << "wrote " << out_dir << "/" << base << "_* (" << out.rows.size() << " trial rows)\n";
  return kExitOk;
}

int cmd_verify_w(int n, int p, double theta, int seeds, const std::string& radii_s,
                 std::uint64_t seed) {
  const debias::Radii radii =
      radii_s == "supp" ? debias::Radii::h_scaled : debias::Radii::main_text;
  int pass0 = 0, pass1 = 0, pass2 = 0, pass3 = 0, feasible = 0, infeasible_mu = 0;
  double mu3 = 0.0, tau_acc = 0.0;
  debias::ConstraintReport last{};
  for (int sd = 0; sd < seeds; ++sd) {
    const BinMat B = sim::bernoulli_matrix(2 * n, p, theta, derive(seed, 31, sd));
    const std::vector<double> z(2 * n, 0.0);
    const sim::CenteredSystem cs = sim::center(z, B, theta);
    debias::DebiasOperator op;
    try {
      op = debias::closed_form_W(cs.A, theta);
    } catch (const InfeasibleError& e) {
      if (infeasible_mu == 0) std::printf("seed %d: %s\n", sd, e.what());
      ++infeasible_mu;
      continue;
    }
    mu3 = op.mu3;
    tau_acc += op.tau;
    feasible += op.feasible ? 1 : 0;
    const debias::ConstraintReport rep = debias::verify_constraints(op.W, cs.A, theta, radii);
    pass0 += rep.c0.pass;
    pass1 += rep.c1.pass;
    pass2 += rep.c2.pass;
    pass3 += rep.c3.pass;
    last = rep;
  }
  const int ran = seeds - infeasible_mu;
  std::printf("n'=%d p=%d theta=%g seeds=%d radii=%s\n", n, p, theta, seeds,
              radii_s == "supp" ? "supplementary(h-scaled)" : "main-text");
  if (infeasible_mu > 0)
    std::printf("infeasible (mu3 >= 1): %d/%d seeds\n", infeasible_mu, seeds);
  if (ran > 0) {
    std::printf("mu3 = %.6g, mean tau = %.6g, tau/(1+tau) <= mu3 in %d/%d\n", mu3, tau_acc / ran,
                feasible, ran);
    std::printf("radii: C0 %.6g  C1(mu1) %.6g  C2(mu2) %.6g  C3(mu3) %.6g\n", last.c0.radius,
                last.c1.radius, last.c2.radius, last.c3.radius);
    std::printf("pass rates: C0 %.3f  C1 %.3f  C2 %.3f  C3 %.3f\n",
                static_cast<double>(pass0) / ran, static_cast<double>(pass1) / ran,
                static_cast<double>(pass2) / ran, static_cast<double>(pass3) / ran);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressed-sensing group testing with pooling-matrix error correction"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 1;
  bool seed_given = false;

  auto* sim_cmd = app.add_subcommand("simulate", "run one end-to-end trial with full trace");
  sim_cmd->add_option("--config", config_path, "key=value config file")->required();
  sim_cmd->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  sim_cmd->add_option("--out", out_dir, "output directory");

  std::string setting, model_s, timing = "wall";
  int trials = 0, workers = 0;
  double theta_opt = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment suite");
  sweep_cmd
      ->add_option("--setting", setting,
                   "EA|EB|EC|ED|ZETA|LOG_SIGMA|LOG_N|MULTISTAGE|CONVERGENCE")
      ->required();
  sweep_cmd->add_option("--trials", trials, "trials per sweep value");
  sweep_cmd->add_option("--theta", theta_opt, "Bernoulli parameter");
  sweep_cmd->add_option("--model", model_s, "SSM|ASM|PERM");
  sweep_cmd->add_option("--seed", seed, "master seed");
  sweep_cmd->add_option("--out", out_dir, "output directory");
  sweep_cmd->add_option("--workers", workers, "worker threads (default: hardware)");
  sweep_cmd->add_option("--timing", timing, "wall|none (none makes reruns byte-identical)");

  int vw_n = 40, vw_p = 400, vw_seeds = 50;
  double vw_theta = 0.5;
  std::string radii = "main";
  auto* vw_cmd = app.add_subcommand("verify-w", "debiasing-constraint report across random designs");
  vw_cmd->add_option("--n", vw_n, "centered rows n'");
  vw_cmd->add_option("--p", vw_p, "columns");
  vw_cmd->add_option("--theta", vw_theta, "Bernoulli parameter");
  vw_cmd->add_option("--seeds", vw_seeds, "number of random designs");
  vw_cmd->add_option("--radii", radii, "main|supp");
  vw_cmd->add_option("--seed", seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  // environment overrides
  if (const char* env_out = std::getenv("GTCS_OUT"); env_out && *env_out) out_dir = env_out;
  if (const char* env_w = std::getenv("GTCS_WORKERS"); env_w && *env_w) workers = std::atoi(env_w);

  try {
    if (sim_cmd->parsed()) return cmd_simulate(config_path, seed, seed_given, out_dir);
    if (sweep_cmd->parsed())
      return cmd_sweep(setting, trials, theta_opt, model_s, seed, out_dir, workers, timing);
    if (vw_cmd->parsed()) return cmd_verify_w(vw_n, vw_p, vw_theta, vw_seeds, radii, seed);
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
