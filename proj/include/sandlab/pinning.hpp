#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sandlab/randomwalk.hpp"

namespace sandlab::pinning {

/// Finite-horizon estimate of the tilted occupation-time growth rate
/// F(m) = (1/t) log E[exp(m * l_t({o}))] for the rate-2d walk on Z^d.
///
/// One ensemble of occupation samples serves the whole m grid, so the
/// estimated curve inherits the exact convexity of the log moment generating
/// function: F_hat(0) = 0 exactly and F_hat(m)/m is non-decreasing sample by
/// sample. Each walk also records its occupation at 2t for the doubling
/// stability check.
struct FreeEnergyEstimate {
  std::vector<double> m_grid;
  std::vector<double> f_hat;
  std::vector<double> se;          // batch-means standard error of f_hat
  std::vector<bool> flagged;       // exponential-moment variance blow-up
  std::vector<double> f_hat_2t;
  std::vector<double> se_2t;
  std::vector<bool> t_stable;      // |f_hat(2t) - f_hat(t)| < 3 combined se
  double t = 0.0;
  std::int64_t n_walks = 0;
  int n_batches = 0;

  /// Largest m whose estimate is not variance-flagged (NaN when none).
  double largest_reliable_m() const;
};

FreeEnergyEstimate free_energy(int d, std::span<const double> m_grid, double t, std::int64_t n_walks,
                               std::uint64_t seed, int n_batches = 32, int width = 1);

/// gamma * F_hat(2^{n_sources-1} (alpha+beta)/gamma) along an increasing
/// gamma grid, evaluated at one common horizon so values stay comparable.
/// The flag records the first gamma where the estimate drops below alpha,
/// i.e. where the single-source mass curve acquires an integrable exponent.
struct GammaScan {
  std::vector<double> gamma_grid;
  std::vector<double> m_used;
  std::vector<double> value;       // gamma * F_hat(m) at horizon t
  std::vector<double> se;
  std::vector<double> value_2t;    // same scan at the doubled horizon
  std::vector<double> se_2t;
  std::vector<bool> flagged;
  std::vector<bool> t_stable;      // per-point doubling drift within 3 sigma
  double alpha = 0.0, beta = 0.0;
  double t = 0.0;
  int n_sources = 1;
  double gamma_integrable = 0.0;   // 0 when never reached on the grid
};

GammaScan gamma_scan(int d, double alpha, double beta, std::span<const double> gamma_grid, double t,
                     std::int64_t n_walks, std::uint64_t seed, int n_sources = 1, int n_batches = 32,
                     int width = 1);

/// Penalty inflation for n source sites from the iterated Cauchy-Schwarz
/// estimate: the single-site argument m is replaced by 2^{n-1} m.
double source_inflation(int n_sources);

/// Factorized single-source mass curve on the shared time grid:
/// exp(-alpha t) * E[exp(((alpha+beta)/gamma) l_{t*gamma}({o}))] with the
/// occupation sampled from the rate-2d walk. Cross-checks feynman_kac_mass.
randomwalk::MassCurve factorized_source_mass(int d, double alpha, double beta, double gamma,
                                             std::span<const double> t_grid, std::int64_t n_walks,
                                             std::uint64_t seed, int width = 1);

std::string free_energy_csv(const FreeEnergyEstimate& fe);
std::string gamma_scan_csv(const GammaScan& gs);

}  // namespace sandlab::pinning
