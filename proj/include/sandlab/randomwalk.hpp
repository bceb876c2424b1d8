#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sandlab/stats.hpp"
#include "sandlab/topology.hpp"

namespace sandlab::randomwalk {

// ---------------------------------------------------------------------------
// Tree walks
// ---------------------------------------------------------------------------

/// Law of the trapped walk on the rooted tree with branching number q: each
/// non-root vertex is a trap with probability trap_prob, a visit to a trap
/// kills with probability kill_prob, and the walker steps uniformly over the
/// q+1 neighbours (q children at the root).
struct TreeWalkParams {
  int q = 2;
  double trap_prob = 0.5;
  double kill_prob = 1.0;
};

struct TreeWalkTrace {
  std::vector<int> nodes;          // visited vertex ids, S_0 .. S_end
  std::vector<int> depths;         // distance to the root per step
  std::vector<std::int64_t> range; // distinct vertices seen up to each step
  std::int64_t survival_time = 0;  // first fatal index when killed, else the horizon
  bool killed = false;
  bool hit_depth_cap = false;
  std::uint64_t seed = 0;
};

/// Walk on the conceptually infinite tree; vertices and their trap marks are
/// materialized on first visit so deep excursions never need the full tree.
/// trap_prob == 0 runs the free (trapless) walk.
TreeWalkTrace run_annealed_tree_walk(const TreeWalkParams& params, std::int64_t horizon,
                                     std::uint64_t seed);

/// Quenched walk on a materialized tree with a fixed trap field. Reaching a
/// leaf at the depth cap censors the trace and flags hit_depth_cap.
TreeWalkTrace run_trapped_tree_walk(const topology::QaryTree& tree, const topology::TrapField& field,
                                    std::int64_t horizon, std::uint64_t seed);

struct RangeDepth {
  std::vector<std::int64_t> range;
  std::vector<int> depth;
};

RangeDepth range_and_depth(const TreeWalkTrace& trace);

/// t and decay rate c for the depth-process lower-deviation bound
/// P(X_n < eps n) <= e^{-c n}; t = log(2q/(1+eps) - q)/2 and
/// c = -(eps t + log((q e^{-t} + e^t)/(q+1))). Rejects eps with c <= 0.
struct ChernoffRate {
  double t = 0.0;
  double c = 0.0;
};

ChernoffRate chernoff_rate(int q, double p, double eps);

/// Annealed survival tail: a fresh trap environment per walk.
struct TailEstimate {
  std::vector<double> grid;
  std::vector<double> survival;        // P(T > n) estimates
  std::vector<double> se;
  std::vector<std::int64_t> hits;
  std::vector<double> bound;           // (1-p)^{eps n} + e^{-c n}
  stats::LinFit fit;                   // on log survival
  double eps = 0.0;
  ChernoffRate rate;
  double mean_T = 0.0;                 // censored at the horizon
  double mean_T_se = 0.0;
  double horizon_shift = 0.0;          // E(T ^ H) - E(T ^ H/2), paired
  double horizon_shift_se = 0.0;
  double censored_fraction = 0.0;
  bool deepest_bucket_empty = false;
  std::int64_t n_walks = 0;
  std::int64_t horizon = 0;
};

TailEstimate survival_tail(const TreeWalkParams& params, std::span<const std::int64_t> n_grid,
                           std::int64_t n_walks, std::int64_t horizon, std::uint64_t seed,
                           double eps = 0.2, int width = 1);

// ---------------------------------------------------------------------------
// Lattice walks
// ---------------------------------------------------------------------------

/// Site classes on Z^d evaluated lazily through a pattern; walks are not
/// confined to any finite box.
struct LatticeField {
  int dim = 1;
  topology::ClassPattern pattern;

  bool dissipative(std::span<const int> x) const { return pattern.dissipative_at(x); }
  bool source(std::span<const int> x) const { return pattern.source_at(x); }
};

struct LatticeWalkTrace {
  int dim = 1;
  std::vector<int> positions;      // flattened, stride dim
  std::int64_t survival_time = 0;
  bool killed = false;
  std::uint64_t seed = 0;
};

/// Killed walk: from a dissipative site the walker dies with probability
/// 1/(2d+1) and otherwise moves to a uniform neighbour; elsewhere it moves
/// with probability 1/(2d) each. The kill attempt happens on departure, so
/// the survival time is always >= 1.
LatticeWalkTrace run_killed_lattice_walk(const LatticeField& field, std::span<const int> x0,
                                         std::int64_t horizon, std::uint64_t seed);

struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
  std::int64_t n = 0;
  double censored_fraction = 0.0;
  bool flagged = false;
};

/// Monte Carlo mean survival time of the killed walk, censored at `horizon`.
MeanEstimate killed_walk_survival(const LatticeField& field, std::span<const int> x0,
                                  std::int64_t horizon, std::int64_t n_walks, std::uint64_t seed,
                                  int width = 1);

/// Truncated sum over k < k_max of E[ prod_{z in D} (2d/(2d+1))^{l_k(z)} ],
/// with l_k counting visits at times 0..k-1. Equals the killed-walk expected
/// survival time in the k_max -> infinity limit.
struct FunctionalEstimate {
  std::vector<double> mean_by_k;   // E of the k-th summand
  std::vector<double> se_by_k;
  double value = 0.0;              // truncated sum
  double se = 0.0;                 // from per-walk truncated totals
  bool converged = false;          // tail summand fell below tolerance
  std::int64_t k_max = 0;
};

FunctionalEstimate local_time_functional(const LatticeField& field, std::span<const int> x0,
                                         std::int64_t k_max, std::int64_t n_walks, std::uint64_t seed,
                                         double tail_tol = 1e-6, int width = 1);

/// Return time tau = inf{k >= 1 : X_k in D} of the simple walk.
struct HittingEstimate {
  double mean = 0.0;
  double se = 0.0;
  double censored_fraction = 0.0;
  bool flagged = false;            // censoring above 1%
  double analytic_bound = 0.0;     // optional caller-supplied comparison value
};

HittingEstimate hitting_time(const LatticeField& field, std::span<const int> x0, std::int64_t n_walks,
                             std::int64_t horizon, std::uint64_t seed, double analytic_bound = 0.0,
                             int width = 1);

// ---------------------------------------------------------------------------
// Local-time ledgers
// ---------------------------------------------------------------------------

struct PointKey {
  std::vector<int> x;
  bool operator==(const PointKey& o) const { return x == o.x; }
};

struct PointKeyHash {
  std::size_t operator()(const PointKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int c : k.x) {
      h ^= static_cast<std::uint32_t>(c);
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Visit counts (discrete) or occupation times (continuous) per site.
/// The discrete ledger over horizon k sums exactly to k; the continuous
/// ledger over horizon t sums to t up to rounding.
struct LocalTimeLedger {
  std::unordered_map<PointKey, double, PointKeyHash> l;
  double horizon = 0.0;

  double total() const {
    double s = 0.0;
    for (const auto& [k, v] : l) s += v;
    return s;
  }
  double sup() const {
    double m = 0.0;
    for (const auto& [k, v] : l) m = std::max(m, v);
    return m;
  }
};

LocalTimeLedger discrete_local_times(int d, std::span<const int> x0, std::int64_t k,
                                     std::uint64_t seed);
LocalTimeLedger continuous_local_times(int d, std::span<const int> x0, double t, double jump_rate,
                                       std::uint64_t seed);

/// P(sup_x l_k(x) > k^{1/2+delta}) along a grid of k values (monitor only).
std::vector<double> sup_local_time_tail(int d, std::span<const std::int64_t> k_grid,
                                        std::int64_t n_walks, double delta, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Continuous-time mass functional
// ---------------------------------------------------------------------------

/// Total-mass curve mass(t) = E[exp(-int_0^t V(X_s) ds)] for the rate
/// 2*d*gamma walk, with V = +alpha on D, -beta on S, 0 elsewhere. The
/// integral of V along a trajectory is exact (piecewise constant between
/// exponential jump times).
struct MassCurve {
  std::vector<double> t_grid;
  std::vector<double> mass;
  std::vector<double> se;
  std::vector<bool> var_flag;      // relative error above 50% at this t
  double integral_trapz = 0.0;
  double tail_rate = 0.0;          // fitted log-slope over the trailing window
  double integral_total = 0.0;     // trapezoid + exponential tail extrapolation
  bool integral_flagged = false;   // no decaying tail; integral not certified
  std::int64_t n_walks = 0;
};

MassCurve feynman_kac_mass(const LatticeField& field, std::span<const int> x0, double alpha,
                           double beta, double gamma, std::span<const double> t_grid,
                           std::int64_t n_walks, std::uint64_t seed, int width = 1);

/// Same functional through the rate-identity route: a rate-2d walk run to
/// t*gamma with the potential integral scaled by 1/gamma.
MassCurve feynman_kac_mass_rescaled(const LatticeField& field, std::span<const int> x0, double alpha,
                                    double beta, double gamma, std::span<const double> t_grid,
                                    std::int64_t n_walks, std::uint64_t seed, int width = 1);

// CSV: "n_or_t,estimate,stderr,n_samples" rows.
std::string tail_estimate_csv(const TailEstimate& te);
std::string mass_curve_csv(const MassCurve& mc);
std::string fit_summary_json(const std::string& name, const stats::LinFit& fit);

}  // namespace sandlab::randomwalk
