#include "sandlab/pinning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sandlab/errors.hpp"
#include "sandlab/io.hpp"
#include "sandlab/parallel.hpp"
#include "sandlab/rng.hpp"

namespace sandlab::pinning {

namespace {

constexpr std::uint64_t kPinTag = 0x70696e6e696e6731ull;  // "pinning1"

// occupation time of the origin for the rate-2d walk, recorded at a sorted
// list of horizons; holding times are exact exponentials
void origin_occupation(int d, std::span<const double> horizons, std::uint64_t seed,
                       std::span<double> out) {
  Rng rng(seed);
  std::array<int, topology::kMaxDim> x{};
  const double rate = 2.0 * d;
  const double t_max = horizons.back();
  double tau = 0.0, occ = 0.0;
  std::size_t g = 0;
  for (;;) {
    bool at_origin = true;
    for (int k = 0; k < d; ++k)
      if (x[k] != 0) {
        at_origin = false;
        break;
      }
    const double h = rng.exponential(rate);
    while (g < horizons.size() && horizons[g] <= tau + h) {
      out[g] = occ + (at_origin ? horizons[g] - tau : 0.0);
      ++g;
    }
    if (g == horizons.size() || tau + h >= t_max) {
      for (; g < horizons.size(); ++g) out[g] = occ + (at_origin ? horizons[g] - tau : 0.0);
      return;
    }
    if (at_origin) occ += h;
    tau += h;
    const int r = rng.uniform_int(2 * d);
    x[r / 2] += (r % 2) ? 1 : -1;
  }
}

struct TiltSummary {
  double f_hat = 0.0;
  double se = 0.0;
};

// (1/t) log mean(exp(m l)) with a batch-means standard error
TiltSummary tilt_summary(double t, const std::vector<double>& batch_sum,
                         const std::vector<double>& batch_cnt) {
  TiltSummary out;
  double total = 0.0, count = 0.0;
  std::vector<double> f_b;
  f_b.reserve(batch_sum.size());
  for (std::size_t b = 0; b < batch_sum.size(); ++b) {
    total += batch_sum[b];
    count += batch_cnt[b];
    f_b.push_back(std::log(batch_sum[b] / batch_cnt[b]) / t);
  }
  out.f_hat = std::log(total / count) / t;
  out.se = stats::mean_se(f_b).se;
  return out;
}

}  // namespace

double FreeEnergyEstimate::largest_reliable_m() const {
  double best = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < m_grid.size(); ++i)
    if (!flagged[i] && (std::isnan(best) || m_grid[i] > best)) best = m_grid[i];
  return best;
}

FreeEnergyEstimate free_energy(int d, std::span<const double> m_grid, double t, std::int64_t n_walks,
                               std::uint64_t seed, int n_batches, int width) {
  if (d < 1 || d > topology::kMaxDim) throw ValidationError("free_energy: bad dimension");
  if (!(t > 0.0)) throw ValidationError("free_energy: t must be > 0");
  if (n_walks < n_batches) throw ValidationError("free_energy: need at least one walk per batch");
  for (double m : m_grid)
    if (m < 0.0) throw ValidationError("free_energy: m must be >= 0");
  n_batches = std::max(2, n_batches);

  // one shared ensemble of (l_t, l_2t) pairs
  const std::array<double, 2> horizons{t, 2.0 * t};
  std::vector<double> occ_t(n_walks), occ_2t(n_walks);
  par::for_blocks(n_walks, width, [&](int, std::int64_t lo, std::int64_t hi) {
    std::array<double, 2> rec{};
    for (std::int64_t w = lo; w < hi; ++w) {
      origin_occupation(d, horizons, mix64(mix64(seed, kPinTag), static_cast<std::uint64_t>(w)), rec);
      occ_t[w] = rec[0];
      occ_2t[w] = rec[1];
    }
  });

  FreeEnergyEstimate fe;
  fe.m_grid.assign(m_grid.begin(), m_grid.end());
  fe.t = t;
  fe.n_walks = n_walks;
  fe.n_batches = n_batches;

  // deterministic batch assignment by walk index
  auto batch_of = [&](std::int64_t w) { return static_cast<int>(w * n_batches / n_walks); };

  for (double m : m_grid) {
    std::vector<double> bsum(n_batches, 0.0), bcnt(n_batches, 0.0);
    std::vector<double> bsum2(n_batches, 0.0), bcnt2(n_batches, 0.0);
    double s1 = 0.0, s2 = 0.0;
    for (std::int64_t w = 0; w < n_walks; ++w) {
      const int b = batch_of(w);
      const double wt = std::exp(m * occ_t[w]);
      const double w2 = std::exp(m * occ_2t[w]);
      bsum[b] += wt;
      bcnt[b] += 1.0;
      bsum2[b] += w2;
      bcnt2[b] += 1.0;
      s1 += wt;
      s2 += wt * wt;
    }
    const auto at_t = tilt_summary(t, bsum, bcnt);
    const auto at_2t = tilt_summary(2.0 * t, bsum2, bcnt2);
    fe.f_hat.push_back(at_t.f_hat);
    fe.se.push_back(at_t.se);
    fe.f_hat_2t.push_back(at_2t.f_hat);
    fe.se_2t.push_back(at_2t.se);

    const double nw = static_cast<double>(n_walks);
    const double mean = s1 / nw;
    const double se_mean = std::sqrt(std::max(s2 / nw - mean * mean, 0.0) / nw);
    fe.flagged.push_back(mean > 0.0 && se_mean / mean > 0.5);
    const double comb = std::sqrt(at_t.se * at_t.se + at_2t.se * at_2t.se);
    fe.t_stable.push_back(std::abs(at_2t.f_hat - at_t.f_hat) <= 3.0 * comb);
  }
  return fe;
}

double source_inflation(int n_sources) {
  if (n_sources < 1) throw ValidationError("source_inflation: need at least one source");
  return std::ldexp(1.0, n_sources - 1);
}

GammaScan gamma_scan(int d, double alpha, double beta, std::span<const double> gamma_grid, double t,
                     std::int64_t n_walks, std::uint64_t seed, int n_sources, int n_batches,
                     int width) {
  if (!(alpha > 0.0)) throw ValidationError("gamma_scan: alpha must be > 0");
  if (beta < 0.0) throw ValidationError("gamma_scan: beta must be >= 0");
  if (gamma_grid.empty()) throw ValidationError("gamma_scan: empty gamma grid");
  for (std::size_t i = 1; i < gamma_grid.size(); ++i)
    if (gamma_grid[i] <= gamma_grid[i - 1]) throw ValidationError("gamma_scan: gamma grid must increase");

  const double inflation = source_inflation(n_sources);
  std::vector<double> m_grid;
  for (double g : gamma_grid) m_grid.push_back(inflation * (alpha + beta) / g);

  // the same occupation ensemble serves every gamma (common horizon t)
  std::vector<double> sorted_m(m_grid.rbegin(), m_grid.rend());
  const auto fe = free_energy(d, sorted_m, t, n_walks, seed, n_batches, width);

  GammaScan out;
  out.gamma_grid.assign(gamma_grid.begin(), gamma_grid.end());
  out.alpha = alpha;
  out.beta = beta;
  out.t = t;
  out.n_sources = n_sources;
  for (std::size_t i = 0; i < gamma_grid.size(); ++i) {
    const std::size_t j = gamma_grid.size() - 1 - i;  // m decreasing as gamma grows
    out.m_used.push_back(fe.m_grid[j]);
    out.value.push_back(gamma_grid[i] * fe.f_hat[j]);
    out.se.push_back(gamma_grid[i] * fe.se[j]);
    out.value_2t.push_back(gamma_grid[i] * fe.f_hat_2t[j]);
    out.se_2t.push_back(gamma_grid[i] * fe.se_2t[j]);
    out.flagged.push_back(fe.flagged[j]);
    out.t_stable.push_back(fe.t_stable[j]);
    if (out.gamma_integrable == 0.0 && !fe.flagged[j] && out.value.back() < alpha)
      out.gamma_integrable = gamma_grid[i];
  }
  return out;
}

randomwalk::MassCurve factorized_source_mass(int d, double alpha, double beta, double gamma,
                                             std::span<const double> t_grid, std::int64_t n_walks,
                                             std::uint64_t seed, int width) {
  if (t_grid.empty()) throw ValidationError("factorized_source_mass: empty grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (t_grid[i] <= t_grid[i - 1])
      throw ValidationError("factorized_source_mass: grid must increase");
  if (!(gamma > 0.0)) throw ValidationError("factorized_source_mass: gamma must be > 0");

  const double m = (alpha + beta) / gamma;
  std::vector<double> horizons(t_grid.begin(), t_grid.end());
  for (double& h : horizons) h *= gamma;

  const std::size_t g_count = horizons.size();
  const int n_blocks = par::block_count(n_walks);
  struct Acc {
    std::vector<double> sum, sum2;
  };
  std::vector<Acc> acc(n_blocks);
  for (auto& a : acc) {
    a.sum.assign(g_count, 0.0);
    a.sum2.assign(g_count, 0.0);
  }
  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    std::vector<double> rec(g_count);
    for (std::int64_t w = lo; w < hi; ++w) {
      origin_occupation(d, horizons, mix64(mix64(seed, fnv1a64("pinning/factorized")), static_cast<std::uint64_t>(w)),
                        rec);
      for (std::size_t g = 0; g < g_count; ++g) {
        const double wt = std::exp(m * rec[g]);
        a.sum[g] += wt;
        a.sum2[g] += wt * wt;
      }
    }
  });

  randomwalk::MassCurve mc;
  mc.n_walks = n_walks;
  mc.t_grid.assign(t_grid.begin(), t_grid.end());
  mc.mass.assign(g_count, 0.0);
  mc.se.assign(g_count, 0.0);
  mc.var_flag.assign(g_count, false);
  const double nw = static_cast<double>(n_walks);
  for (std::size_t g = 0; g < g_count; ++g) {
    const double damp = std::exp(-alpha * t_grid[g]);
    double s = 0.0, s2 = 0.0;
    for (const auto& a : acc) {
      s += a.sum[g];
      s2 += a.sum2[g];
    }
    const double mean = s / nw;
    mc.mass[g] = damp * mean;
    mc.se[g] = damp * std::sqrt(std::max(s2 / nw - mean * mean, 0.0) / nw);
    mc.var_flag[g] = mc.mass[g] > 0.0 && mc.se[g] / mc.mass[g] > 0.5;
  }
  mc.integral_trapz = 0.5 * (1.0 + mc.mass.front()) * mc.t_grid.front();
  for (std::size_t g = 1; g < g_count; ++g)
    mc.integral_trapz += 0.5 * (mc.mass[g] + mc.mass[g - 1]) * (mc.t_grid[g] - mc.t_grid[g - 1]);
  const std::size_t win = std::min<std::size_t>(4, g_count);
  std::vector<double> xt(mc.t_grid.end() - win, mc.t_grid.end());
  std::vector<double> ym(mc.mass.end() - win, mc.mass.end());
  const auto fit = stats::log_linear_fit(xt, ym);
  mc.tail_rate = fit.ok ? fit.slope : 0.0;
  if (fit.ok && fit.slope < -1e-12) {
    mc.integral_total = mc.integral_trapz + mc.mass.back() / (-fit.slope);
  } else {
    mc.integral_total = mc.integral_trapz;
    mc.integral_flagged = true;
  }
  return mc;
}

std::string free_energy_csv(const FreeEnergyEstimate& fe) {
  std::string out = "m,F_hat,stderr,t,n_walks\n";
  for (std::size_t i = 0; i < fe.m_grid.size(); ++i)
    out += io::csv_row({io::fmt(fe.m_grid[i]), io::fmt(fe.f_hat[i]), io::fmt(fe.se[i]),
                        io::fmt(fe.t), std::to_string(fe.n_walks)});
  return out;
}

std::string gamma_scan_csv(const GammaScan& gs) {
  std::string out = "gamma,value,stderr,flag\n";
  for (std::size_t i = 0; i < gs.gamma_grid.size(); ++i)
    out += io::csv_row({io::fmt(gs.gamma_grid[i]), io::fmt(gs.value[i]), io::fmt(gs.se[i]),
                        gs.flagged[i] ? "1" : "0"});
  return out;
}

}  // namespace sandlab::pinning
