#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sandlab/sandpile.hpp"
#include "sandlab/topology.hpp"

namespace sandlab::green {

enum class SolverStatus { Ok, NotPositiveDefinite };

/// Symmetric solver for G = inverse of a toppling matrix: sparse LDLT up to
/// `direct_limit` sites, conjugate gradients above, both behind the same
/// residual contract ||A g - b||_inf <= 1e-10 * ||g||_inf.
class GreenSolver {
 public:
  explicit GreenSolver(const sandpile::TopplingMatrix& m, int direct_limit = 100'000);
  ~GreenSolver();
  GreenSolver(GreenSolver&&) noexcept;
  GreenSolver& operator=(GreenSolver&&) noexcept;

  SolverStatus status() const;

  /// Smallest-eigenvalue estimate from a few inverse-power iterations
  /// (only meaningful when status() == Ok).
  double min_eigenvalue_estimate() const;

  /// Row x of G, i.e. the solution of A g = e_x.
  std::vector<double> solve_unit(int x) const;
  std::vector<double> solve(const std::vector<double>& rhs) const;

  /// All row sums of G at once (solution of A u = 1).
  std::vector<double> row_sums() const;

  static constexpr double residual_bound() { return 1e-10; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class Verdict { BoundedEvidence, GrowingEvidence, Inconclusive };

const char* to_string(Verdict v);

struct VerdictConfig {
  double ratio_threshold = 0.9;  // geometric-decay certificate on increments
  int window = 3;                // volumes the certificate must hold over
  double plateau_rel_tol = 1e-9;
};

/// Row sums of G_n for a probe site across an increasing volume sequence,
/// with a growth diagnosis. Finite volumes cannot certify a limit, hence the
/// "Evidence" labels; thresholds are configurable and echoed in the report.
struct GreenReport {
  int dim = 0;
  std::string pattern;
  std::vector<int> volumes;
  std::vector<std::vector<int>> probes;         // coordinates
  std::vector<std::vector<double>> row_sums;    // [volume][probe]
  std::vector<Verdict> probe_verdicts;
  Verdict verdict = Verdict::Inconclusive;
  VerdictConfig config;
  std::vector<std::string> solver_failures;     // per-volume failure notes

  std::vector<double> increments(std::size_t probe) const;
};

GreenReport row_sum_sequence(int d, const topology::ClassPattern& pattern,
                             const std::vector<std::vector<int>>& probes, std::span<const int> volumes,
                             const sandpile::LatticeParams& params,
                             sandpile::PileMode mode = sandpile::PileMode::IntegerSandpile,
                             const VerdictConfig& cfg = {});

Verdict diagnose_growth(std::span<const double> sums, const VerdictConfig& cfg);

/// sup over the probe box of the L1 distance to the nearest dissipative site.
/// Bounded only if the sup is unchanged on a doubled probe box; a sup that
/// keeps growing with the probe (axis patterns, diverging line gaps) reports
/// Unbounded-within-probe.
struct CoveringRadius {
  bool bounded = false;
  int radius_plus_one = 0;      // sup at the base probe
  int radius_plus_one_2x = 0;   // sup at the doubled probe
  bool search_capped = false;
};

CoveringRadius covering_radius(int d, const topology::ClassPattern& pattern, int probe_radius);

/// Counts non-dissipative sites in the probe box; satisfied when the count
/// is stable across two probe doublings.
struct FiniteComplement {
  bool satisfied = false;
  std::int64_t count_probe = 0;
  std::int64_t count_2x = 0;
  std::int64_t count_4x = 0;
};

FiniteComplement finite_complement_check(int d, const topology::ClassPattern& pattern, int probe_radius);

enum class SeriesVerdict { ConvergesCertified, DivergesCertified, Inconclusive };

const char* to_string(SeriesVerdict v);

/// Behaviour of sum_k (d/(d+1))^k (r_{k+1}-r_k)^2 for an increasing line
/// sequence r_k, via a ratio test over a tail window of evaluated terms.
struct GapSeriesReport {
  SeriesVerdict verdict = SeriesVerdict::Inconclusive;
  double partial_sum = 0.0;
  double tail_bound = 0.0;  // valid when converging
  int terms = 0;
};

GapSeriesReport lines_gap_bound(const std::function<double(int)>& r, int d, int k_terms = 120,
                                int window = 8);
GapSeriesReport lines_gap_bound(std::span<const double> r_values, int d, int window = 8);

/// Determinant of the toppling matrix. Integer volumes under `exact_site_cap`
/// take a fraction-free elimination path in 128-bit arithmetic (exact);
/// anything else falls back to a floating LDLT product.
struct Determinant {
  bool exact = false;
  double value = 0.0;
  __int128 exact_value = 0;
};

Determinant determinant(const sandpile::TopplingMatrix& m, int exact_site_cap = 600);

/// Sums of row entries over sites at graph distance > n from the row site.
std::vector<double> row_tail_sums(std::span<const double> row, std::span<const int> dist,
                                  std::span<const int> n_grid);

/// Coordinate text export, one "i j value" triple per line (both triangles).
void write_matrix_coord(std::ostream& os, const sandpile::TopplingMatrix& m);

}  // namespace sandlab::green
