#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"

#include "sandlab/errors.hpp"
#include "sandlab/stats.hpp"
#include "sandlab/topology.hpp"

using namespace sandlab;
using namespace sandlab::topology;

namespace {

// independent O(V^2) edge count straight from the adjacency definition
std::int64_t brute_force_edges(const BoxLattice& box) {
  std::int64_t edges = 0;
  for (int a = 0; a < box.size(); ++a)
    for (int b = a + 1; b < box.size(); ++b)
      if (box.distance(a, b) == 1) ++edges;
  return edges;
}

}  // namespace

TEST_CASE("box construction matches closed-form counts") {
  const auto single = BoxLattice::cube(1, 0);
  CHECK(single.size() == 1);
  CHECK(single.edge_count() == 0);

  const auto path = BoxLattice::cube(1, 2);
  CHECK(path.size() == 5);
  CHECK(path.edge_count() == 4);

  const auto plane = BoxLattice::cube(2, 2);
  CHECK(plane.size() == 25);
  CHECK(plane.edge_count() == 40);  // 2 * 5 * 4 per axis
  CHECK(plane.edge_count() == brute_force_edges(plane));

  const auto cube3 = BoxLattice::cube(3, 1);
  CHECK(cube3.size() == 27);
  CHECK(cube3.edge_count() == brute_force_edges(cube3));
}

TEST_CASE("box interior degrees and boundary classification") {
  const auto box = BoxLattice::cube(2, 3);
  int interior = 0;
  for (int i = 0; i < box.size(); ++i) {
    if (!box.is_boundary(i)) {
      CHECK(box.degree(i) == 4);
      ++interior;
    } else {
      CHECK(box.degree(i) < 4);
    }
  }
  CHECK(interior == 25);
}

TEST_CASE("box adjacency is symmetric without self-loops") {
  const auto box = BoxLattice::grid({3, 4});
  for (int i = 0; i < box.size(); ++i) {
    for (int j : box.neighbors(i)) {
      CHECK(j != i);
      const auto back = box.neighbors(j);
      CHECK(std::count(back.begin(), back.end(), i) == 1);
    }
  }
  CHECK(box.edge_count() == brute_force_edges(box));
}

TEST_CASE("box site ordering is lexicographic and invertible") {
  const auto box = BoxLattice::cube(2, 1);
  const std::vector<int> first{-1, -1};
  CHECK(box.index_of(first) == 0);
  for (int i = 0; i + 1 < box.size(); ++i) {
    const auto a = box.coord(i);
    const auto b = box.coord(i + 1);
    CHECK(std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()));
    CHECK(box.index_of(a) == i);
  }
  const std::vector<int> outside{2, 0};
  CHECK(box.index_of(outside) == -1);
}

TEST_CASE("site budget is enforced") {
  CHECK_THROWS_AS(BoxLattice::cube(3, 100, 1000), CapacityError);
  CHECK_THROWS_AS(QaryTree::complete(2, 40, 100000), CapacityError);
  CHECK_THROWS_AS(BoxLattice::cube(0, 1), ValidationError);
}

TEST_CASE("complete tree counts and degrees") {
  CHECK(QaryTree::complete(2, 0).size() == 1);
  CHECK(QaryTree::complete(2, 3).size() == 15);
  CHECK(QaryTree::complete(3, 2).size() == 13);

  const auto t = QaryTree::complete(2, 4);
  CHECK(t.children(0).size() == 2);
  for (int v = 0; v < t.size(); ++v) {
    CHECK(t.depth(v) <= 4);
    if (v == 0) continue;
    if (t.depth(v) < 4)
      CHECK(t.degree(v) == 3);  // parent + q children
    else
      CHECK(t.degree(v) == 1);
  }
}

TEST_CASE("tree distance goes through the common ancestor") {
  const auto t = QaryTree::complete(2, 3);
  const int left = t.children(0)[0], right = t.children(0)[1];
  CHECK(t.distance(0, 0) == 0);
  CHECK(t.distance(left, right) == 2);
  const int ll = t.children(left)[0];
  const int rr = t.children(right)[1];
  CHECK(t.distance(ll, rr) == 4);
  CHECK(t.distance(ll, left) == 1);
}

TEST_CASE("trap fields respect the root and the probability domain") {
  const auto t = QaryTree::complete(2, 5);
  const auto all = sample_trap_field(t, 1.0, 1.0, 7);
  CHECK(all.omega[0] == 0);
  for (int v = 1; v < t.size(); ++v) CHECK(all.omega[v] == 1);

  CHECK_THROWS_AS(sample_trap_field(t, 0.0, 1.0, 7), ValidationError);
  CHECK_THROWS_AS(sample_trap_field(t, 0.5, 0.0, 7), ValidationError);
  CHECK_THROWS_AS(sample_trap_field(t, 1.5, 1.0, 7), ValidationError);
}

TEST_CASE("trap fields are reproducible bit for bit") {
  const auto t = QaryTree::complete(2, 8);
  const auto a = sample_trap_field(t, 0.37, 1.0, 123456);
  const auto b = sample_trap_field(t, 0.37, 1.0, 123456);
  const auto c = sample_trap_field(t, 0.37, 1.0, 123457);
  CHECK(a.omega == b.omega);
  CHECK(a.omega != c.omega);
}

TEST_CASE("trap marks are Bernoulli(p) and uncorrelated across sites") {
  const auto t = QaryTree::complete(2, 10);
  const int n_fields = 10000;
  std::int64_t traps = 0, tries = 0;
  // two fixed sites for the pairwise correlation estimate
  std::vector<double> s1, s2;
  s1.reserve(n_fields);
  s2.reserve(n_fields);
  for (int i = 0; i < n_fields; ++i) {
    const auto f = sample_trap_field(t, 0.5, 1.0, 1000 + i);
    for (int v = 1; v < t.size(); ++v) traps += f.omega[v];
    tries += t.size() - 1;
    s1.push_back(f.omega[5]);
    s2.push_back(f.omega[6]);
  }
  const double p_hat = static_cast<double>(traps) / static_cast<double>(tries);
  CHECK(std::abs(p_hat - 0.5) <= 3.0 * stats::binomial_se(0.5, tries));
  const double corr = stats::pearson_correlation(s1, s2);
  CHECK(std::abs(corr) <= 3.0 / std::sqrt(static_cast<double>(n_fields)));
}

TEST_CASE("pruning keeps the root and deletes whole subtrees") {
  const auto t = QaryTree::complete(2, 4);

  const auto all = sample_trap_field(t, 1.0, 1.0, 3);
  const auto only_root = prune_to_galton_watson(t, all);
  CHECK(only_root.size() == 1);
  CHECK(only_root.depth_cap() == 4);

  TrapField none;
  none.omega.assign(t.size(), 0);
  none.trap_prob.assign(t.size(), 0.5);
  none.kill_prob = 1.0;
  const auto unchanged = prune_to_galton_watson(t, none);
  CHECK(unchanged.size() == t.size());
  for (int v = 0; v < t.size(); ++v) CHECK(unchanged.depth(v) == t.depth(v));

  auto soft = none;
  soft.kill_prob = 0.5;
  CHECK_THROWS_AS(prune_to_galton_watson(t, soft), ValidationError);
}

TEST_CASE("pruned offspring law is Bin(q, 1-p)") {
  const auto t = QaryTree::complete(2, 8);
  const int n_samples = 100000;
  std::int64_t root_children_total = 0;
  std::array<std::int64_t, 3> root_hist{};
  std::array<std::int64_t, 3> depth1_hist{};
  std::int64_t depth1_total = 0;
  for (int i = 0; i < n_samples; ++i) {
    const auto f = sample_trap_field(t, 0.5, 1.0, 50000 + i);
    const auto g = prune_to_galton_watson(t, f);
    const int rc = static_cast<int>(g.children(0).size());
    root_children_total += rc;
    ++root_hist[rc];
    for (int c : g.children(0)) {
      // depth-1 vertices are below the cap, so their offspring law applies
      ++depth1_hist[g.children(c).size()];
      ++depth1_total;
    }
  }
  const double mean_offspring = static_cast<double>(root_children_total) / n_samples;
  // Bin(2, 0.5): mean 1, per-sample sd sqrt(0.5)
  CHECK(std::abs(mean_offspring - 1.0) <= 3.0 * std::sqrt(0.5 / n_samples));

  const std::array<double, 3> expected{0.25, 0.5, 0.25};
  for (int k = 0; k < 3; ++k) {
    const double p_root = static_cast<double>(root_hist[k]) / n_samples;
    CHECK(std::abs(p_root - expected[k]) <= 3.0 * stats::binomial_se(expected[k], n_samples));
    const double p_d1 = static_cast<double>(depth1_hist[k]) / static_cast<double>(depth1_total);
    CHECK(std::abs(p_d1 - expected[k]) <= 3.0 * stats::binomial_se(expected[k], depth1_total));
  }
}

TEST_CASE("class patterns materialize the documented site sets") {
  SUBCASE("x-axis in a 2d box of radius 3") {
    const auto box = BoxLattice::cube(2, 3);
    const auto map = build_site_classes(box, ClassPattern::axis_d(0));
    CHECK(map.dissipative_sites.size() == 7);
    for (int i : map.dissipative_sites) CHECK(box.coord(i)[1] == 0);
  }
  SUBCASE("even sublattice on a path of radius 4") {
    const auto box = BoxLattice::cube(1, 4);
    const auto map = build_site_classes(box, ClassPattern::sublattice_d({2}));
    CHECK(map.dissipative_sites.size() == 5);
    CHECK(box.size() == 9);
  }
  SUBCASE("lines with offsets (1,3,6) in a box of radius 5") {
    const auto box = BoxLattice::cube(2, 5);
    const auto map = build_site_classes(box, ClassPattern::lines_d({1, 3, 6}));
    std::set<int> rows;
    for (int i : map.dissipative_sites) rows.insert(box.coord(i)[1]);
    CHECK(rows == std::set<int>{-3, -1, 0, 1, 3});
    CHECK(map.dissipative_sites.size() == 5 * 11);
  }
  SUBCASE("finite sources make the complement dissipative") {
    const auto box = BoxLattice::cube(1, 2);
    const auto map = build_site_classes(box, ClassPattern::finite_sources({{0}}));
    CHECK(map.source_sites.size() == 1);
    CHECK(map.dissipative_sites.size() == 4);
  }
}

TEST_CASE("classes are mutually exclusive and boundary fills the rest") {
  const auto box = BoxLattice::cube(2, 2);
  const auto map = build_site_classes(box, ClassPattern::axis_d(0));
  int sources = 0, dissipative = 0, boundary = 0, ordinary = 0;
  for (int i = 0; i < box.size(); ++i) {
    switch (map.cls[i]) {
      case SiteClass::Source: ++sources; break;
      case SiteClass::Dissipative: ++dissipative; break;
      case SiteClass::Boundary: ++boundary; break;
      case SiteClass::Ordinary: ++ordinary; break;
    }
  }
  CHECK(sources + dissipative + boundary + ordinary == box.size());
  CHECK(dissipative == 5);  // the axis keeps its class on the boundary
  for (int i = 0; i < box.size(); ++i)
    if (map.cls[i] == SiteClass::Ordinary) CHECK_FALSE(box.is_boundary(i));
}

TEST_CASE("malformed patterns are rejected") {
  CHECK_THROWS_AS(ClassPattern::sublattice_d({0}), ValidationError);
  CHECK_THROWS_AS(ClassPattern::lines_d({3, 1}), ValidationError);
  CHECK_THROWS_AS(ClassPattern::lines_d({0}), ValidationError);
}

TEST_CASE("edge lists use 0-based 'u v' lines") {
  const auto box = BoxLattice::grid({3});
  std::ostringstream os;
  write_edge_list(os, box);
  CHECK(os.str() == "0 1\n1 2\n");

  const auto tree = QaryTree::complete(2, 1);
  std::ostringstream ts;
  write_edge_list(ts, tree);
  CHECK(ts.str() == "0 1\n0 2\n");
}
