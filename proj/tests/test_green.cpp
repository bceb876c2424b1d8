#include <cmath>
#include <sstream>

#include "doctest.h"

#include "sandlab/errors.hpp"
#include "sandlab/green.hpp"
#include "sandlab/rng.hpp"
#include "sandlab/sandpile.hpp"
#include "sandlab/topology.hpp"

using namespace sandlab;
using namespace sandlab::green;
using sandpile::LatticeParams;
using sandpile::PileMode;
using sandpile::TopplingMatrix;
using topology::BoxLattice;
using topology::ClassPattern;

namespace {

// dense Gauss-Jordan inverse, the oracle route independent of the sparse solver
std::vector<std::vector<double>> dense_inverse(const TopplingMatrix& m) {
  const int n = m.size();
  std::vector<std::vector<double>> a(n, std::vector<double>(2 * n, 0.0));
  for (int i = 0; i < n; ++i) {
    a[i][i] = m.diag[i];
    for (int j : m.neighbors(i)) a[i][j] = -m.edge_weight;
    a[i][n + i] = 1.0;
  }
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    const double piv = a[col][col];
    REQUIRE(std::abs(piv) > 1e-14);
    for (int j = 0; j < 2 * n; ++j) a[col][j] /= piv;
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (int j = 0; j < 2 * n; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::vector<std::vector<double>> inv(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) inv[i][j] = a[i][n + j];
  return inv;
}

TopplingMatrix make_matrix(const BoxLattice& box, const ClassPattern& pattern,
                           LatticeParams lp = {}, PileMode mode = PileMode::IntegerSandpile) {
  return sandpile::assemble_toppling_matrix(box, build_site_classes(box, pattern), lp, mode);
}

}  // namespace

TEST_CASE("tiny inverses match hand values") {
  SUBCASE("single dissipative site") {
    const auto m = make_matrix(BoxLattice::cube(1, 0), ClassPattern::all_d());
    const GreenSolver solver(m);
    REQUIRE(solver.status() == SolverStatus::Ok);
    CHECK(solver.solve_unit(0)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("2-site path: inverse of [[2,-1],[-1,2]]") {
    const auto m = make_matrix(BoxLattice::grid({2}), ClassPattern::empty_d());
    const GreenSolver solver(m);
    const auto row0 = solver.solve_unit(0);
    CHECK(row0[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(row0[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("3-site path: center row of (1/4)[[3,2,1],[2,4,2],[1,2,3]]") {
    const auto m = make_matrix(BoxLattice::grid({3}), ClassPattern::empty_d());
    const GreenSolver solver(m);
    const auto row = solver.solve_unit(1);
    CHECK(row[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(row[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(row[0] + row[1] + row[2] == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("solver agrees with the dense oracle and meets its residual contract") {
  const auto box = BoxLattice::cube(2, 3);
  const auto m = make_matrix(box, ClassPattern::sublattice_d({2, 2}));
  const GreenSolver solver(m);
  REQUIRE(solver.status() == SolverStatus::Ok);
  const auto inv = dense_inverse(m);

  Rng rng(11);
  for (int probe = 0; probe < 6; ++probe) {
    const int x = rng.uniform_int(m.size());
    const auto row = solver.solve_unit(x);
    double rinf = 0.0, ginf = 0.0;
    for (int i = 0; i < m.size(); ++i) {
      CHECK(row[i] == doctest::Approx(inv[x][i]).epsilon(1e-9));
      double ax = m.diag[i] * row[i];
      for (int j : m.neighbors(i)) ax -= m.edge_weight * row[j];
      rinf = std::max(rinf, std::abs(ax - (i == x ? 1.0 : 0.0)));
      ginf = std::max(ginf, std::abs(row[i]));
    }
    CHECK(rinf <= GreenSolver::residual_bound() * ginf);
  }

  // row sums via the all-ones solve equal per-row summation
  const auto sums = solver.row_sums();
  const int x = 7;
  const auto row = solver.solve_unit(x);
  double s = 0.0;
  for (double v : row) s += v;
  CHECK(sums[x] == doctest::Approx(s).epsilon(1e-10));
}

TEST_CASE("row sums grow with the volume for fixed dissipation") {
  std::vector<double> sums;
  for (int n : {2, 4, 8, 16}) {
    const auto m = make_matrix(BoxLattice::cube(1, n), ClassPattern::all_d());
    const GreenSolver solver(m);
    const auto box = BoxLattice::cube(1, n);
    const std::vector<int> origin{0};
    sums.push_back(solver.row_sums()[box.index_of(origin)]);
  }
  for (std::size_t i = 1; i < sums.size(); ++i) CHECK(sums[i] >= sums[i - 1] - 1e-9);
  CHECK(sums.back() <= 1.0 + 1e-9);
  CHECK(sums.back() > 0.9);
}

TEST_CASE("verdicts across volume sequences") {
  const std::vector<int> volumes{4, 8, 16, 32};
  SUBCASE("all-D in d=1 is bounded with row sums near 1") {
    const auto rep = row_sum_sequence(1, ClassPattern::all_d(), {{0}}, volumes, {});
    CHECK(rep.verdict == Verdict::BoundedEvidence);
    CHECK(rep.row_sums.back()[0] > 0.9);
    CHECK(rep.row_sums.back()[0] <= 1.0 + 1e-9);
  }
  SUBCASE("even sublattice in d=1 is bounded") {
    const auto rep = row_sum_sequence(1, ClassPattern::sublattice_d({2}), {{0}}, volumes, {});
    CHECK(rep.verdict == Verdict::BoundedEvidence);
  }
  SUBCASE("no dissipation in d=2 grows") {
    const auto rep = row_sum_sequence(2, ClassPattern::empty_d(), {{0, 0}}, volumes, {});
    CHECK(rep.verdict == Verdict::GrowingEvidence);
    const auto inc = rep.increments(0);
    for (std::size_t i = 1; i < inc.size(); ++i) CHECK(inc[i] >= inc[i - 1]);
  }
  SUBCASE("axis dissipation in d=2 grows when probed off the axis") {
    const auto rep = row_sum_sequence(2, ClassPattern::axis_d(0), {{0, 1}}, volumes, {});
    CHECK(rep.verdict == Verdict::GrowingEvidence);
  }
  SUBCASE("probe outside the smallest volume is rejected") {
    CHECK_THROWS_AS(row_sum_sequence(1, ClassPattern::all_d(), {{9}}, volumes, {}), ValidationError);
  }
}

TEST_CASE("verdict heuristics on synthetic sequences") {
  VerdictConfig cfg;
  const std::vector<double> saturating{1.0, 1.5, 1.75, 1.875, 1.9375};
  CHECK(diagnose_growth(saturating, cfg) == Verdict::BoundedEvidence);
  const std::vector<double> quadratic{1.0, 4.0, 16.0, 64.0};
  CHECK(diagnose_growth(quadratic, cfg) == Verdict::GrowingEvidence);
  const std::vector<double> plateau{2.0, 2.0, 2.0, 2.0};
  CHECK(diagnose_growth(plateau, cfg) == Verdict::BoundedEvidence);
  const std::vector<double> wobble{1.0, 3.0, 3.5, 5.5};
  CHECK(diagnose_growth(wobble, cfg) == Verdict::Inconclusive);
}

TEST_CASE("covering radius") {
  const auto even1 = covering_radius(1, ClassPattern::sublattice_d({2}), 6);
  CHECK(even1.bounded);
  CHECK(even1.radius_plus_one == 1);

  const auto even2 = covering_radius(2, ClassPattern::sublattice_d({2, 2}), 5);
  CHECK(even2.bounded);
  CHECK(even2.radius_plus_one == 2);

  const auto axis = covering_radius(2, ClassPattern::axis_d(0), 5);
  CHECK_FALSE(axis.bounded);

  const auto gaps = covering_radius(2, ClassPattern::lines_d({1, 3, 6, 10, 15, 21}), 6);
  CHECK_FALSE(gaps.bounded);

  const auto nothing = covering_radius(1, ClassPattern::empty_d(), 3);
  CHECK_FALSE(nothing.bounded);
  CHECK(nothing.search_capped);
}

TEST_CASE("finite complement counts stabilize only for finite holes") {
  const auto one_hole = finite_complement_check(1, ClassPattern::finite_complement_d({{0}}), 4);
  CHECK(one_hole.satisfied);
  CHECK(one_hole.count_probe == 1);

  const auto even = finite_complement_check(1, ClassPattern::sublattice_d({2}), 4);
  CHECK_FALSE(even.satisfied);

  std::vector<std::vector<int>> patch;
  for (int x = -1; x <= 1; ++x)
    for (int y = -1; y <= 1; ++y) patch.push_back({x, y});
  const auto nine = finite_complement_check(2, ClassPattern::finite_complement_d(patch), 3);
  CHECK(nine.satisfied);
  CHECK(nine.count_probe == 9);
}

TEST_CASE("gap series certificates") {
  const auto unit = lines_gap_bound([](int k) { return static_cast<double>(k); }, 2);
  CHECK(unit.verdict == SeriesVerdict::ConvergesCertified);
  CHECK(unit.partial_sum == doctest::Approx(3.0).epsilon(1e-6));  // sum (2/3)^k

  const auto doubling = lines_gap_bound([](int k) { return std::pow(2.0, k); }, 2, 40);
  CHECK(doubling.verdict == SeriesVerdict::DivergesCertified);

  const auto squares = lines_gap_bound([](int k) { return static_cast<double>(k) * k + 1.0; }, 2);
  CHECK(squares.verdict == SeriesVerdict::ConvergesCertified);

  CHECK_THROWS_AS(lines_gap_bound([](int) { return 1.0; }, 2), ValidationError);
}

TEST_CASE("exact determinants") {
  const auto path2 = make_matrix(BoxLattice::grid({2}), ClassPattern::empty_d());
  const auto path3 = make_matrix(BoxLattice::grid({3}), ClassPattern::empty_d());
  const auto single = make_matrix(BoxLattice::cube(1, 0), ClassPattern::all_d());
  CHECK(determinant(path2).exact_value == 3);
  CHECK(determinant(path3).exact_value == 4);
  CHECK(determinant(single).exact_value == 3);

  // floating route agrees with the exact one
  const auto box = BoxLattice::grid({3, 3});
  const auto m = make_matrix(box, ClassPattern::empty_d());
  const auto exact = determinant(m);
  const auto approx = determinant(m, 0);
  REQUIRE(exact.exact);
  CHECK(approx.value == doctest::Approx(exact.value).epsilon(1e-9));
}

TEST_CASE("a strong source makes the matrix indefinite and is surfaced") {
  const auto box = BoxLattice::cube(1, 1);
  const auto classes = build_site_classes(box, ClassPattern::finite_sources({{0}}));
  const auto m = sandpile::assemble_toppling_matrix(box, classes, LatticeParams{1.0, 1.0, 1.9},
                                          PileMode::ContinuousAvalanche);
  const GreenSolver solver(m);
  CHECK(solver.status() == SolverStatus::NotPositiveDefinite);
  CHECK_THROWS_AS(solver.solve_unit(0), SolverError);

  // a weak source keeps the matrix positive definite
  const auto weak = sandpile::assemble_toppling_matrix(box, classes, LatticeParams{1.0, 1.0, 0.2},
                                             PileMode::ContinuousAvalanche);
  const GreenSolver ok(weak);
  CHECK(ok.status() == SolverStatus::Ok);
  CHECK(ok.min_eigenvalue_estimate() > 0.0);
}

TEST_CASE("tree row tails decrease in the cutoff") {
  const auto tree = topology::QaryTree::complete(2, 6);
  const auto field = topology::sample_trap_field(tree, 0.3, 1.0, 77);
  const auto pruned = topology::prune_to_galton_watson(tree, field);
  const auto m = sandpile::assemble_toppling_matrix(pruned);
  const GreenSolver solver(m);
  REQUIRE(solver.status() == SolverStatus::Ok);
  const auto row = solver.solve_unit(0);
  std::vector<int> dist(pruned.size());
  for (int v = 0; v < pruned.size(); ++v) dist[v] = pruned.depth(v);
  const std::vector<int> grid{0, 1, 2, 3, 4};
  const auto tails = row_tail_sums(row, dist, grid);
  for (std::size_t i = 1; i < tails.size(); ++i) CHECK(tails[i] <= tails[i - 1] + 1e-12);
}

TEST_CASE("coordinate export lists the diagonal and both triangles") {
  const auto m = make_matrix(BoxLattice::grid({2}), ClassPattern::empty_d());
  std::ostringstream os;
  write_matrix_coord(os, m);
  CHECK(os.str() == "0 0 2\n0 1 -1\n1 1 2\n1 0 -1\n");
}
