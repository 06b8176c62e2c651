#include "gtcs/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gtcs/errors.hpp"
#include "gtcs/rng.hpp"

namespace gtcs::sim {

const char* to_string(MmeModel m) {
  switch (m) {
    case MmeModel::SSM: return "SSM";
    case MmeModel::ASM: return "ASM";
    case MmeModel::PERM: return "PERM";
  }
  return "?";
}

MmeModel mme_model_from_string(const std::string& s) {
  if (s == "SSM" || s == "ssm") return MmeModel::SSM;
  if (s == "ASM" || s == "asm") return MmeModel::ASM;
  if (s == "PERM" || s == "perm") return MmeModel::PERM;
  throw ParameterError("unknown MME model: " + s);
}

BinMat bernoulli_matrix(int rows, int p, double theta, std::uint64_t seed) {
  if (rows < 1 || p < 1) throw ParameterError("bernoulli_matrix: empty shape");
  if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("bernoulli_matrix: theta outside (0,1)");
  BinMat B(rows, p);
  Rng rng(seed, Stream::matrix);
  for (int i = 0; i < rows; ++i) {
    std::uint8_t* row = B.row(i);
    for (int j = 0; j < p; ++j) row[j] = rng.next_double() < theta ? 1 : 0;
  }
  return B;
}

PoolingSystem gen_pooling(int n, int p, double theta, std::uint64_t seed) {
  if (n < 2 || p <= n) throw ParameterError("gen_pooling: need n >= 2 and p > n");
  PoolingSystem sys;
  sys.n = n;
  sys.p = p;
  sys.theta = theta;
  sys.seed = seed;
  sys.B = bernoulli_matrix(n, p, theta, seed);
  return sys;
}

SignalVector gen_signal(int p, int s, double low, double high, std::uint64_t seed) {
  if (s < 0 || s > p) throw ParameterError("gen_signal: need 0 <= s <= p");
  if (!(low > 0.0 && low < high)) throw ParameterError("gen_signal: need 0 < low < high");
  SignalVector sig;
  sig.beta.assign(p, 0.0);
  if (s == 0) return sig;
  Rng rng(seed, Stream::signal);
  sig.support = rng.sample_without_replacement(p, s);
  std::sort(sig.support.begin(), sig.support.end());
  for (int idx : sig.support) {
    double v;
    bool fresh;
    do {  // redraw on (measure-zero) collision so all nonzeros are distinct
      v = rng.uniform(low, high);
      fresh = true;
      for (int k : sig.support) {
        if (sig.beta[k] == v) { fresh = false; break; }
      }
    } while (!fresh);
    sig.beta[idx] = v;
  }
  return sig;
}

namespace {

double row_dot(const BinMat& B, int i, std::span<const double> beta) {
  return dot_row({B.row(i), static_cast<std::size_t>(B.cols())}, beta);
}

bool nearly_equal(double a, double b) {
  return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Flip sign convention: flipping column j of `row` shifts the prediction by
// +beta_j (0 -> 1) or -beta_j (1 -> 0).
double flip_shift(const std::uint8_t* row, int j, std::span<const double> beta) {
  return row[j] ? -beta[j] : beta[j];
}

// Swap shift for the circular pair (j, j') on `row`; requires a mismatch.
double swap_shift(const std::uint8_t* row, int j, int p, std::span<const double> beta) {
  const int j2 = (j + 1) % p;
  return row[j] == 0 ? beta[j] - beta[j2] : beta[j2] - beta[j];
}

bool ssm_margins_ok(const std::uint8_t* row, int j, const SignalVector& sig, double margin,
                    MarginMode mode) {
  const double dj = flip_shift(row, j, sig.beta);
  if (std::fabs(dj) < margin || dj == 0.0) return false;
  if (mode != MarginMode::full_a2) return true;
  for (int k : sig.support) {
    if (k == j) continue;
    if (std::fabs(flip_shift(row, k, sig.beta) - dj) < margin) return false;
  }
  return true;
}

// Mismatched circular pairs of `row` touching the support, with their shifts.
std::vector<std::pair<int, double>> asm_candidates(const std::uint8_t* row, int p,
                                                   const SignalVector& sig) {
  std::vector<std::pair<int, double>> out;
  for (int j = 0; j < p; ++j) {
    const int j2 = (j + 1) % p;
    if (row[j] == row[j2]) continue;
    if (sig.beta[j] == 0.0 && sig.beta[j2] == 0.0) continue;
    out.emplace_back(j, swap_shift(row, j, p, sig.beta));
  }
  return out;
}

}  // namespace

std::pair<BinMat, std::vector<MmeRecord>> inject_mmes(const PoolingSystem& sys,
                                                      const SignalVector& signal, MmeModel model,
                                                      int r, std::uint64_t seed,
                                                      const InjectOptions& opts) {
  const int n = sys.n, p = sys.p;
  if (r < 0 || r >= n) throw ParameterError("inject_mmes: need 0 <= r < n");
  if (model == MmeModel::PERM && r % 2 != 0)
    throw ParameterError("inject_mmes: PERM affects rows in exchanged pairs; r must be even");
  if (r == 0) return {sys.B, {}};

  const int pool_rows = opts.row_limit > 0 ? std::min(opts.row_limit, n) : n;
  if (r > pool_rows) throw ParameterError("inject_mmes: r exceeds eligible rows");
  const double margin =
      opts.margin == MarginMode::none ? 0.0 : 2.0 * (opts.k_margin + 1.0) * opts.sigma_tilde;

  Rng rng(seed, Stream::mme);
  for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
    BinMat Bt = sys.B;
    std::vector<MmeRecord> recs;
    std::vector<int> rows = rng.sample_without_replacement(pool_rows, r);
    bool ok = true;

    if (model == MmeModel::PERM) {
      for (int a = 0; a + 1 < r && ok; a += 2) {
        const int i1 = rows[a], i2 = rows[a + 1];
        const double d1 = row_dot(sys.B, i2, signal.beta) - row_dot(sys.B, i1, signal.beta);
        if (opts.adversarial && (d1 == 0.0 || std::fabs(d1) < margin)) { ok = false; break; }
        bool same = true;
        for (int j = 0; j < p; ++j)
          if (sys.B(i1, j) != sys.B(i2, j)) { same = false; break; }
        if (same) { ok = false; break; }
        for (int j = 0; j < p; ++j) std::swap(Bt(i1, j), Bt(i2, j));
        recs.push_back({model, i1, i2, d1});
        recs.push_back({model, i2, i1, -d1});
      }
      if (ok && opts.adversarial && opts.margin == MarginMode::full_a2) {
        // any affected row must be tellable apart from any other by its pool sum
        std::vector<double> sums;
        for (int i : rows) sums.push_back(row_dot(sys.B, i, signal.beta));
        for (std::size_t a = 0; a < sums.size() && ok; ++a)
          for (std::size_t b = a + 1; b < sums.size(); ++b)
            if (std::fabs(sums[a] - sums[b]) < std::max(margin, 1e-12)) { ok = false; break; }
      }
    } else {
      for (int i : rows) {
        const std::uint8_t* row = sys.B.row(i);
        int detail = -1;
        if (model == MmeModel::SSM) {
          if (opts.adversarial) {
            std::vector<int> good;
            for (int j : signal.support)
              if (ssm_margins_ok(row, j, signal, margin, opts.margin)) good.push_back(j);
            if (!good.empty()) detail = good[rng.below(good.size())];
          } else {
            detail = static_cast<int>(rng.below(p));
          }
          if (detail >= 0) Bt(i, detail) = 1 - Bt(i, detail);
        } else {  // ASM
          if (opts.adversarial) {
            auto cands = asm_candidates(row, p, signal);
            std::vector<int> good;
            for (std::size_t a = 0; a < cands.size(); ++a) {
              const double d = cands[a].second;
              if (d == 0.0 || std::fabs(d) < margin) continue;
              if (opts.margin == MarginMode::full_a2) {
                bool sep = true;
                for (std::size_t b = 0; b < cands.size(); ++b)
                  if (b != a && std::fabs(cands[b].second - d) < margin) { sep = false; break; }
                if (!sep) continue;
              }
              good.push_back(static_cast<int>(a));
            }
            if (!good.empty()) detail = cands[good[rng.below(good.size())]].first;
          } else {
            std::vector<int> mism;
            for (int j = 0; j < p; ++j)
              if (row[j] != row[(j + 1) % p]) mism.push_back(j);
            if (!mism.empty()) detail = mism[rng.below(mism.size())];
          }
          if (detail >= 0) {
            const int j2 = (detail + 1) % p;
            std::swap(Bt(i, detail), Bt(i, j2));
          }
        }
        if (detail < 0) { ok = false; break; }
        const double dt = row_dot(Bt, i, signal.beta) - row_dot(sys.B, i, signal.beta);
        recs.push_back({model, i, detail, dt});
      }
    }

    if (ok && opts.adversarial) {
      for (std::size_t a = 0; a < recs.size() && ok; ++a) {
        if (recs[a].delta_tilde == 0.0) ok = false;
        for (std::size_t b = a + 1; b < recs.size() && ok; ++b)
          if (nearly_equal(recs[a].delta_tilde, recs[b].delta_tilde)) ok = false;
      }
    }
    if (ok) {
      std::sort(recs.begin(), recs.end(),
                [](const MmeRecord& x, const MmeRecord& y) { return x.row < y.row; });
      return {std::move(Bt), std::move(recs)};
    }
  }
  throw InfeasibleError("inject_mmes: retry budget exhausted (constraints unsatisfiable?)");
}

MeasurementSet forward(const BinMat& B_tilde, const SignalVector& signal, const NoiseConfig& cfg,
                       std::uint64_t seed) {
  MeasurementSet out;
  out.noise_kind = cfg.kind;
  out.q = cfg.q;
  out.f_sigma = cfg.f_sigma;
  out.z = matvec(B_tilde, signal.beta);
  const int n = B_tilde.rows();
  Rng rng(seed, Stream::noise);
  switch (cfg.kind) {
    case NoiseKind::none:
      out.sigma_tilde = 0.0;
      break;
    case NoiseKind::gaussian: {
      if (cfg.f_sigma < 0.0) throw ParameterError("forward: f_sigma < 0");
      double acc = 0.0;
      for (double v : out.z) acc += std::fabs(v);
      out.sigma_tilde = cfg.f_sigma * acc / static_cast<double>(n);
      for (int i = 0; i < n; ++i) out.z[i] += out.sigma_tilde * rng.normal();
      break;
    }
    case NoiseKind::lognormal_pcr: {
      if (!(cfg.q > 0.0 && cfg.q < 1.0)) throw ParameterError("forward: q outside (0,1)");
      if (cfg.sigma_tilde < 0.0) throw ParameterError("forward: sigma_tilde < 0");
      out.sigma_tilde = cfg.sigma_tilde;
      const double base = 1.0 + cfg.q;
      for (int i = 0; i < n; ++i) out.z[i] *= std::pow(base, out.sigma_tilde * rng.normal());
      break;
    }
  }
  return out;
}

CenteredSystem center(std::span<const double> z, const BinMat& B, double theta,
                      std::span<const int> row_order, double sigma_tilde) {
  const int n = B.rows(), p = B.cols();
  if (static_cast<int>(z.size()) != n) throw ParameterError("center: z size mismatch");
  if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("center: theta outside (0,1)");
  std::vector<int> order;
  if (row_order.empty()) {
    order.resize(n);
    for (int i = 0; i < n; ++i) order[i] = i;
  } else {
    if (static_cast<int>(row_order.size()) != n) throw ParameterError("center: row_order size mismatch");
    std::vector<char> seen(n, 0);
    for (int v : row_order) {
      if (v < 0 || v >= n || seen[v]) throw ParameterError("center: row_order is not a permutation");
      seen[v] = 1;
    }
    order.assign(row_order.begin(), row_order.end());
  }

  CenteredSystem out;
  const int np = n / 2;
  out.theta = theta;
  out.h = 1.0 / (2.0 * theta * (1.0 - theta));
  out.sigma_centered = sigma_tilde * std::sqrt(2.0) * out.h;
  out.y.resize(np);
  out.A = Mat(np, p);
  out.pairing.resize(np);
  for (int i = 0; i < np; ++i) {
    const int r1 = order[i], r2 = order[np + i];
    out.pairing[i] = {r1, r2};
    out.y[i] = (z[r1] - z[r2]) * out.h;
    const std::uint8_t* b1 = B.row(r1);
    const std::uint8_t* b2 = B.row(r2);
    double* a = out.A.row(i);
    for (int j = 0; j < p; ++j)
      a[j] = (static_cast<double>(b1[j]) - static_cast<double>(b2[j])) * out.h;
  }
  return out;
}

std::string pooling_to_text(const BinMat& B) {
  std::string out;
  out.reserve(static_cast<std::size_t>(B.rows()) * (B.cols() + 1));
  for (int i = 0; i < B.rows(); ++i) {
    for (int j = 0; j < B.cols(); ++j) out.push_back(B(i, j) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

BinMat pooling_from_text(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  if (lines.empty()) throw ParameterError("pooling_from_text: empty input");
  BinMat B(static_cast<int>(lines.size()), static_cast<int>(lines[0].size()));
  for (int i = 0; i < B.rows(); ++i) {
    if (static_cast<int>(lines[i].size()) != B.cols())
      throw ParameterError("pooling_from_text: ragged rows");
    for (int j = 0; j < B.cols(); ++j) {
      const char c = lines[i][j];
      if (c != '0' && c != '1') throw ParameterError("pooling_from_text: non-binary character");
      B(i, j) = c == '1' ? 1 : 0;
    }
  }
  return B;
}

std::vector<int> margin_violations(std::span<const MmeRecord> records, double sigma_tilde,
                                   double k) {
  const double margin = 2.0 * (k + 1.0) * sigma_tilde;
  std::vector<int> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (std::fabs(records[i].delta_tilde) < margin) out.push_back(static_cast<int>(i));
  return out;
}

std::string records_to_csv(std::span<const MmeRecord> records) {
  std::string out = "model,row,detail\n";
  for (const auto& r : records) {
    out += to_string(r.model);
    out += ',';
    out += std::to_string(r.row);
    out += ',';
    out += std::to_string(r.detail);
    out += '\n';
  }
  return out;
}

}  // namespace gtcs::sim
