#include "sandlab/green.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <deque>

#include "sandlab/errors.hpp"
#include "sandlab/io.hpp"
#include "sandlab/rng.hpp"

namespace sandlab::green {

namespace {

Eigen::SparseMatrix<double> to_eigen(const sandpile::TopplingMatrix& m) {
  using T = Eigen::Triplet<double>;
  std::vector<T> trip;
  trip.reserve(m.adj.size() + m.diag.size());
  for (int x = 0; x < m.size(); ++x) {
    trip.emplace_back(x, x, m.diag[x]);
    for (int y : m.neighbors(x)) trip.emplace_back(x, y, -m.edge_weight);
  }
  Eigen::SparseMatrix<double> a(m.size(), m.size());
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// GreenSolver
// ---------------------------------------------------------------------------

struct GreenSolver::Impl {
  Eigen::SparseMatrix<double> a;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  bool direct = true;
  SolverStatus status = SolverStatus::Ok;
  double min_eig = 0.0;

  Eigen::VectorXd raw_solve(const Eigen::VectorXd& b) const {
    return direct ? Eigen::VectorXd(ldlt.solve(b)) : Eigen::VectorXd(cg.solve(b));
  }

  Eigen::VectorXd checked_solve(const Eigen::VectorXd& b) const {
    if (status != SolverStatus::Ok)
      throw SolverError("GreenSolver: solve requested on a non-positive-definite matrix");
    Eigen::VectorXd g = raw_solve(b);
    // one refinement pass before giving up on the residual contract
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd res = b - a * g;
      const double rinf = res.lpNorm<Eigen::Infinity>();
      const double ginf = std::max(g.lpNorm<Eigen::Infinity>(), 1e-300);
      if (rinf <= residual_bound() * ginf) return g;
      g += raw_solve(res);
    }
    const double rinf = (b - a * g).lpNorm<Eigen::Infinity>();
    throw SolverError("GreenSolver: residual contract violated, |r|_inf = " + io::fmt(rinf));
  }
};

GreenSolver::GreenSolver(const sandpile::TopplingMatrix& m, int direct_limit)
    : impl_(std::make_unique<Impl>()) {
  impl_->a = to_eigen(m);
  impl_->direct = m.size() <= direct_limit;
  if (impl_->direct) {
    impl_->ldlt.compute(impl_->a);
    if (impl_->ldlt.info() != Eigen::Success) {
      impl_->status = SolverStatus::NotPositiveDefinite;
      return;
    }
    const auto& d = impl_->ldlt.vectorD();
    for (int i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0)) {
        impl_->status = SolverStatus::NotPositiveDefinite;
        return;
      }
    }
  } else {
    impl_->cg.setTolerance(1e-13);
    impl_->cg.setMaxIterations(20 * m.size());
    impl_->cg.compute(impl_->a);
    if (impl_->cg.info() != Eigen::Success) {
      impl_->status = SolverStatus::NotPositiveDefinite;
      return;
    }
  }

  // inverse-power probe for the smallest eigenvalue
  Rng rng(fnv1a64("green/eig_probe"));
  Eigen::VectorXd v(m.size());
  for (int i = 0; i < m.size(); ++i) v[i] = rng.uniform() - 0.5;
  v.normalize();
  for (int it = 0; it < 8; ++it) {
    v = impl_->raw_solve(v);
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      impl_->status = SolverStatus::NotPositiveDefinite;
      return;
    }
    v /= norm;
  }
  impl_->min_eig = v.dot(impl_->a * v);
  if (!(impl_->min_eig > 0.0)) impl_->status = SolverStatus::NotPositiveDefinite;
}

GreenSolver::~GreenSolver() = default;
GreenSolver::GreenSolver(GreenSolver&&) noexcept = default;
GreenSolver& GreenSolver::operator=(GreenSolver&&) noexcept = default;

SolverStatus GreenSolver::status() const { return impl_->status; }
double GreenSolver::min_eigenvalue_estimate() const { return impl_->min_eig; }

std::vector<double> GreenSolver::solve_unit(int x) const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(impl_->a.rows());
  b[x] = 1.0;
  const Eigen::VectorXd g = impl_->checked_solve(b);
  return {g.data(), g.data() + g.size()};
}

std::vector<double> GreenSolver::solve(const std::vector<double>& rhs) const {
  if (static_cast<int>(rhs.size()) != impl_->a.rows())
    throw ValidationError("GreenSolver: rhs size mismatch");
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), rhs.size());
  const Eigen::VectorXd g = impl_->checked_solve(b);
  return {g.data(), g.data() + g.size()};
}

std::vector<double> GreenSolver::row_sums() const {
  Eigen::VectorXd b = Eigen::VectorXd::Ones(impl_->a.rows());
  const Eigen::VectorXd g = impl_->checked_solve(b);
  return {g.data(), g.data() + g.size()};
}

// ---------------------------------------------------------------------------
// Volume sequences and verdicts
// ---------------------------------------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::BoundedEvidence: return "BoundedEvidence";
    case Verdict::GrowingEvidence: return "GrowingEvidence";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

std::vector<double> GreenReport::increments(std::size_t probe) const {
  std::vector<double> inc;
  for (std::size_t v = 1; v < row_sums.size(); ++v)
    inc.push_back(row_sums[v][probe] - row_sums[v - 1][probe]);
  return inc;
}

Verdict diagnose_growth(std::span<const double> sums, const VerdictConfig& cfg) {
  if (sums.size() < 2) return Verdict::Inconclusive;
  std::vector<double> inc;
  for (std::size_t i = 1; i < sums.size(); ++i) inc.push_back(sums[i] - sums[i - 1]);

  const double scale = std::max(std::abs(sums.back()), 1e-300);
  const int window = std::min<int>(cfg.window, static_cast<int>(inc.size()));

  bool plateau = true;
  for (int i = 0; i < window; ++i)
    plateau = plateau && std::abs(inc[inc.size() - 1 - i]) <= cfg.plateau_rel_tol * scale;
  if (plateau) return Verdict::BoundedEvidence;

  // geometric decay of increments across the trailing window
  bool decaying = inc.size() >= 2;
  bool growing = inc.size() >= 2;
  const int pairs = std::min<int>(window - 1, static_cast<int>(inc.size()) - 1);
  for (int i = 0; i < pairs; ++i) {
    const double prev = inc[inc.size() - 2 - i];
    const double cur = inc[inc.size() - 1 - i];
    if (!(prev > 0.0) || cur >= cfg.ratio_threshold * prev) decaying = false;
    if (cur < prev * (1.0 - 1e-9)) growing = false;
  }
  if (decaying) return Verdict::BoundedEvidence;
  if (growing) return Verdict::GrowingEvidence;
  return Verdict::Inconclusive;
}

GreenReport row_sum_sequence(int d, const topology::ClassPattern& pattern,
                             const std::vector<std::vector<int>>& probes, std::span<const int> volumes,
                             const sandpile::LatticeParams& params, sandpile::PileMode mode,
                             const VerdictConfig& cfg) {
  if (volumes.empty()) throw ValidationError("row_sum_sequence: volumes must be non-empty");
  for (std::size_t i = 1; i < volumes.size(); ++i)
    if (volumes[i] <= volumes[i - 1]) throw ValidationError("row_sum_sequence: volumes must increase");
  if (probes.empty()) throw ValidationError("row_sum_sequence: probes must be non-empty");

  GreenReport rep;
  rep.dim = d;
  rep.pattern = pattern.name();
  rep.volumes.assign(volumes.begin(), volumes.end());
  rep.probes = probes;
  rep.config = cfg;

  for (int n : volumes) {
    const auto box = topology::BoxLattice::cube(d, n);
    std::vector<int> probe_idx;
    for (const auto& p : probes) {
      const int idx = box.index_of(p);
      if (idx < 0) throw ValidationError("row_sum_sequence: probe site outside smallest volume");
      probe_idx.push_back(idx);
    }
    const auto classes = topology::build_site_classes(box, pattern);
    const auto matrix = assemble_toppling_matrix(box, classes, params, mode);
    GreenSolver solver(matrix);
    if (solver.status() != SolverStatus::Ok) {
      rep.solver_failures.push_back("n=" + std::to_string(n) + ": not positive definite");
      rep.row_sums.emplace_back(probes.size(), std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const auto sums = solver.row_sums();
    std::vector<double> row;
    for (int idx : probe_idx) row.push_back(sums[idx]);
    rep.row_sums.push_back(std::move(row));
  }

  for (std::size_t p = 0; p < probes.size(); ++p) {
    std::vector<double> seq;
    for (const auto& row : rep.row_sums)
      if (!std::isnan(row[p])) seq.push_back(row[p]);
    rep.probe_verdicts.push_back(diagnose_growth(seq, cfg));
  }
  rep.verdict = rep.probe_verdicts.front();
  for (Verdict v : rep.probe_verdicts)
    if (v != rep.verdict) rep.verdict = Verdict::Inconclusive;
  return rep;
}

// ---------------------------------------------------------------------------
// Structure checks
// ---------------------------------------------------------------------------

namespace {

// distance to D by breadth-first rings; the pattern is evaluable outside any
// box, so rings are never clipped. Returns cap+1 when no D site is in reach.
int distance_to_d(int d, const topology::ClassPattern& pattern, std::span<const int> x0, int cap) {
  std::vector<int> x(x0.begin(), x0.end());
  if (pattern.dissipative_at(x)) return 0;
  std::vector<std::vector<int>> frontier{x}, next;
  for (int r = 1; r <= cap; ++r) {
    next.clear();
    for (const auto& p : frontier) {
      for (int k = 0; k < d; ++k) {
        for (int s : {-1, +1}) {
          std::vector<int> y(p);
          y[k] += s;
          // keep only points whose L1 distance to x0 equals r
          int l1 = 0;
          for (int j = 0; j < d; ++j) l1 += std::abs(y[j] - x0[j]);
          if (l1 != r) continue;
          if (pattern.dissipative_at(y)) return r;
          next.push_back(std::move(y));
        }
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier.swap(next);
    if (frontier.empty()) break;
  }
  return cap + 1;
}

// sup over the box of the distance to D, or cap+1 once any site exceeds it
int sup_distance_to_d(int d, const topology::ClassPattern& pattern, int radius, int cap) {
  const auto box = topology::BoxLattice::cube(d, radius);
  int best = 0;
  for (int i = 0; i < box.size(); ++i) {
    const int m = distance_to_d(d, pattern, box.coord(i), cap);
    if (m > cap) return cap + 1;
    best = std::max(best, m);
  }
  return best;
}

}  // namespace

CoveringRadius covering_radius(int d, const topology::ClassPattern& pattern, int probe_radius) {
  if (d < 1 || d > topology::kMaxDim) throw ValidationError("covering_radius: bad dimension");
  if (probe_radius < 0) throw ValidationError("covering_radius: probe radius must be >= 0");
  const int cap = 8 * probe_radius + 8;

  CoveringRadius out;
  out.radius_plus_one = sup_distance_to_d(d, pattern, probe_radius, cap);
  out.radius_plus_one_2x = sup_distance_to_d(d, pattern, 2 * probe_radius, cap);
  if (out.radius_plus_one > cap || out.radius_plus_one_2x > cap) {
    out.search_capped = true;
    out.bounded = false;
    return out;
  }
  out.bounded = out.radius_plus_one == out.radius_plus_one_2x;
  return out;
}

FiniteComplement finite_complement_check(int d, const topology::ClassPattern& pattern, int probe_radius) {
  auto count_holes = [&](int radius) {
    const auto box = topology::BoxLattice::cube(d, radius);
    std::int64_t holes = 0;
    for (int i = 0; i < box.size(); ++i)
      if (!pattern.dissipative_at(box.coord(i))) ++holes;
    return holes;
  };
  FiniteComplement out;
  out.count_probe = count_holes(probe_radius);
  out.count_2x = count_holes(2 * probe_radius);
  out.count_4x = count_holes(4 * probe_radius);
  out.satisfied = out.count_probe == out.count_2x && out.count_2x == out.count_4x;
  return out;
}

const char* to_string(SeriesVerdict v) {
  switch (v) {
    case SeriesVerdict::ConvergesCertified: return "ConvergesCertified";
    case SeriesVerdict::DivergesCertified: return "DivergesCertified";
    case SeriesVerdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

GapSeriesReport lines_gap_bound(const std::function<double(int)>& r, int d, int k_terms, int window) {
  if (d < 1) throw ValidationError("lines_gap_bound: bad dimension");
  if (k_terms < window + 2) throw ValidationError("lines_gap_bound: too few terms");
  const double log_q = std::log(static_cast<double>(d) / (d + 1));

  std::vector<double> log_terms;
  log_terms.reserve(k_terms);
  double prev_r = r(0);
  for (int k = 0; k < k_terms; ++k) {
    const double next_r = r(k + 1);
    const double gap = next_r - prev_r;
    if (!(gap > 0.0)) throw ValidationError("lines_gap_bound: r_k must be strictly increasing");
    log_terms.push_back(k * log_q + 2.0 * std::log(gap));
    prev_r = next_r;
  }

  GapSeriesReport out;
  out.terms = k_terms;
  for (double lt : log_terms)
    if (lt > -700.0) out.partial_sum += std::exp(lt);

  double max_ratio = -std::numeric_limits<double>::infinity();
  double min_ratio = std::numeric_limits<double>::infinity();
  for (int i = k_terms - window; i < k_terms; ++i) {
    const double ratio = log_terms[i] - log_terms[i - 1];
    max_ratio = std::max(max_ratio, ratio);
    min_ratio = std::min(min_ratio, ratio);
  }
  const double rho_hi = std::exp(max_ratio);
  if (rho_hi < 0.95) {
    out.verdict = SeriesVerdict::ConvergesCertified;
    const double last = std::exp(std::max(log_terms.back(), -700.0));
    out.tail_bound = last * rho_hi / (1.0 - rho_hi);
  } else if (std::exp(min_ratio) >= 1.0) {
    out.verdict = SeriesVerdict::DivergesCertified;
  } else {
    out.verdict = SeriesVerdict::Inconclusive;
  }
  return out;
}

GapSeriesReport lines_gap_bound(std::span<const double> r_values, int d, int window) {
  if (r_values.size() < 4) throw ValidationError("lines_gap_bound: need at least 4 values");
  std::vector<double> vals(r_values.begin(), r_values.end());
  const int terms = static_cast<int>(vals.size()) - 1;
  return lines_gap_bound([vals](int k) { return vals[k]; }, d, terms,
                         std::min(window, terms - 2));
}

// ---------------------------------------------------------------------------
// Determinants
// ---------------------------------------------------------------------------

namespace {

bool mul_overflow(__int128 a, __int128 b, __int128* out) {
  return __builtin_mul_overflow(a, b, out);
}

// Bareiss fraction-free elimination; exact over the integers.
bool bareiss_det(std::vector<__int128>& a, int n, __int128* det) {
  __int128 prev = 1;
  int sign = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (a[k * n + k] == 0) {
      int p = -1;
      for (int i = k + 1; i < n; ++i)
        if (a[i * n + k] != 0) {
          p = i;
          break;
        }
      if (p < 0) {
        *det = 0;
        return true;
      }
      for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i) {
      for (int j = k + 1; j < n; ++j) {
        __int128 t1, t2;
        if (mul_overflow(a[i * n + j], a[k * n + k], &t1)) return false;
        if (mul_overflow(a[i * n + k], a[k * n + j], &t2)) return false;
        a[i * n + j] = (t1 - t2) / prev;
      }
      a[i * n + k] = 0;
    }
    prev = a[k * n + k];
  }
  *det = sign > 0 ? a[(n - 1) * n + (n - 1)] : -a[(n - 1) * n + (n - 1)];
  return true;
}

}  // namespace

Determinant determinant(const sandpile::TopplingMatrix& m, int exact_site_cap) {
  Determinant out;
  const int n = m.size();
  if (m.mode == sandpile::PileMode::IntegerSandpile && n <= exact_site_cap) {
    std::vector<__int128> dense(static_cast<std::size_t>(n) * n, 0);
    for (int x = 0; x < n; ++x) {
      dense[static_cast<std::size_t>(x) * n + x] = static_cast<__int128>(m.diag_int(x));
      for (int y : m.neighbors(x)) dense[static_cast<std::size_t>(x) * n + y] = -1;
    }
    __int128 det = 0;
    if (bareiss_det(dense, n, &det)) {
      out.exact = true;
      out.exact_value = det;
      out.value = static_cast<double>(det);
      return out;
    }
    throw CapacityError("determinant: exact 128-bit elimination overflowed");
  }

  Eigen::SparseMatrix<double> a = to_eigen(m);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success)
    throw SolverError("determinant: LDLT factorization failed");
  double log_det = 0.0;
  int sign = 1;
  const auto& dvec = ldlt.vectorD();
  for (int i = 0; i < dvec.size(); ++i) {
    if (dvec[i] < 0) sign = -sign;
    log_det += std::log(std::abs(dvec[i]));
  }
  out.exact = false;
  out.value = sign * std::exp(log_det);
  return out;
}

std::vector<double> row_tail_sums(std::span<const double> row, std::span<const int> dist,
                                  std::span<const int> n_grid) {
  if (row.size() != dist.size()) throw ValidationError("row_tail_sums: size mismatch");
  std::vector<double> out;
  out.reserve(n_grid.size());
  for (int n : n_grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i)
      if (dist[i] > n) s += row[i];
    out.push_back(s);
  }
  return out;
}

void write_matrix_coord(std::ostream& os, const sandpile::TopplingMatrix& m) {
  for (int x = 0; x < m.size(); ++x) {
    os << x << ' ' << x << ' ' << io::fmt(m.diag[x]);
    os << '\n';
    for (int y : m.neighbors(x)) os << x << ' ' << y << ' ' << io::fmt(-m.edge_weight) << '\n';
  }
}

}  // namespace sandlab::green
