#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"

#include "sandlab/errors.hpp"
#include "sandlab/green.hpp"
#include "sandlab/rng.hpp"
#include "sandlab/sandpile.hpp"
#include "sandlab/stats.hpp"
#include "sandlab/topology.hpp"

using namespace sandlab;
using namespace sandlab::sandpile;
using topology::BoxLattice;
using topology::ClassPattern;
using topology::QaryTree;

namespace {

// Reference stabilizer used as the oracle: scans for the first unstable site
// and performs one legal toppling at a time. Deliberately shares nothing with
// the queue-based engine.
std::pair<std::vector<std::int64_t>, std::vector<std::int64_t>> oracle_stabilize(
    const TopplingMatrix& m, std::vector<std::int64_t> h) {
  std::vector<std::int64_t> counts(m.size(), 0);
  for (;;) {
    int site = -1;
    for (int x = 0; x < m.size(); ++x)
      if (h[x] >= m.diag_int(x)) {
        site = x;
        break;
      }
    if (site < 0) break;
    h[site] -= m.diag_int(site);
    ++counts[site];
    for (int y : m.neighbors(site)) h[y] += 1;
  }
  return {h, counts};
}

TopplingMatrix path_matrix(int sites) {
  const auto box = BoxLattice::grid({sites});
  return assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::empty_d()), {});
}

}  // namespace

TEST_CASE("matrix assembly produces the documented thresholds") {
  SUBCASE("3-site path, no extra dissipation") {
    const auto m = path_matrix(3);
    CHECK(m.diag == std::vector<double>{2, 2, 2});
    CHECK(m.edge_weight == 1.0);
    CHECK(m.neighbors(1).size() == 2);
  }
  SUBCASE("single dissipative site") {
    const auto box = BoxLattice::cube(1, 0);
    const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::all_d()), {});
    CHECK(m.size() == 1);
    CHECK(m.diag[0] == 3.0);
  }
  SUBCASE("source threshold 2d*gamma - beta") {
    const auto box = BoxLattice::cube(2, 1);
    LatticeParams lp{1.0, 0.5, 0.25};
    const auto classes = build_site_classes(box, ClassPattern::finite_sources({{0, 0}}));
    const auto m = assemble_toppling_matrix(box, classes, lp, PileMode::ContinuousAvalanche);
    const std::vector<int> origin{0, 0};
    CHECK(m.diag[box.index_of(origin)] == doctest::Approx(3.75));
  }
  SUBCASE("parameter domain") {
    const auto box = BoxLattice::cube(1, 1);
    const auto with_d = build_site_classes(box, ClassPattern::all_d());
    CHECK_THROWS_AS(assemble_toppling_matrix(box, with_d, LatticeParams{0.0, 1.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(assemble_toppling_matrix(box, with_d, LatticeParams{1.0, -1.0, 0.0}), ValidationError);
    const auto with_s = build_site_classes(box, ClassPattern::finite_sources({{0}}));
    CHECK_THROWS_AS(
        assemble_toppling_matrix(box, with_s, LatticeParams{1.0, 1.0, 2.0}, PileMode::ContinuousAvalanche),
        ValidationError);
    // sources demand the continuous-height model
    CHECK_THROWS_AS(
        assemble_toppling_matrix(box, with_s, LatticeParams{1.0, 1.0, 0.5}, PileMode::IntegerSandpile),
        ValidationError);
  }
}

TEST_CASE("two-site cascade by hand") {
  const auto m = path_matrix(2);
  const std::vector<std::int64_t> eta{1, 1};
  const auto r = add_and_stabilize(m, eta, 0, 1000);
  REQUIRE(r.stable());
  CHECK(r.heights == std::vector<std::int64_t>{1, 0});
  CHECK(r.odometer.counts == std::vector<std::int64_t>{1, 1});
  CHECK(r.record.size == 2);
  CHECK(r.record.diameter == 1);
  CHECK(check_conservation(m, eta, r.heights, r.odometer));
}

TEST_CASE("already-stable configurations are fixed points") {
  const auto m = path_matrix(4);
  const std::vector<std::int64_t> eta{1, 0, 1, 1};
  const auto r = stabilize(m, eta, 1000);
  CHECK(r.heights == eta);
  CHECK(std::all_of(r.odometer.counts.begin(), r.odometer.counts.end(),
                    [](std::int64_t c) { return c == 0; }));

  const auto added = add_and_stabilize(m, std::vector<std::int64_t>{0, 0, 0, 0}, 2, 1000);
  CHECK(added.record.size == 0);
  CHECK(added.record.diameter == 0);
}

TEST_CASE("center addition on a full path topples everything") {
  const auto m = path_matrix(5);
  const std::vector<std::int64_t> eta{1, 1, 1, 1, 1};
  const auto r = add_and_stabilize(m, eta, 2, 1000);
  REQUIRE(r.stable());
  CHECK(r.record.size == 5);

  std::vector<std::int64_t> shifted(eta);
  shifted[2] += 1;
  const auto [oracle_h, oracle_n] = oracle_stabilize(m, shifted);
  CHECK(r.heights == oracle_h);
  CHECK(r.odometer.counts == oracle_n);
}

TEST_CASE("toppling order does not change the result") {
  const auto box = BoxLattice::cube(2, 1);
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::empty_d()), {});
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::int64_t> eta(m.size());
    for (auto& h : eta) h = rng.uniform_int(6);
    const int site = rng.uniform_int(m.size());
    const auto fifo = add_and_stabilize(m, eta, site, 100000);

    std::vector<std::int64_t> shifted(eta);
    shifted[site] += 1;
    Rng order(1000 + trial);
    const auto rand_order = stabilize_randomized(m, shifted, 100000, order);
    const auto [oracle_h, oracle_n] = oracle_stabilize(m, shifted);

    CHECK(fifo.heights == rand_order.heights);
    CHECK(fifo.odometer.counts == rand_order.odometer.counts);
    CHECK(fifo.heights == oracle_h);
    CHECK(fifo.odometer.counts == oracle_n);
    CHECK(check_conservation(m, eta, fifo.heights, fifo.odometer));
  }
}

TEST_CASE("a strong source with no drain exhausts the budget") {
  const auto box = BoxLattice::cube(1, 1);
  const auto classes = build_site_classes(box, ClassPattern::finite_sources({{0}}));
  LatticeParams lp{1.0, 1.0, 1.9};
  const auto m = assemble_toppling_matrix(box, classes, lp, PileMode::ContinuousAvalanche);
  const std::vector<int> origin{0};
  const int src = box.index_of(origin);

  std::vector<double> eta(m.size());
  for (int x = 0; x < m.size(); ++x) eta[x] = m.diag[x] * 0.95;
  eta[src] += 1.0;

  const auto small = stabilize(m, eta, 2000);
  CHECK(small.status == StabilizeStatus::BudgetExceeded);
  const auto larger = stabilize(m, eta, 20000);
  CHECK(larger.status == StabilizeStatus::BudgetExceeded);
  // the odometer keeps growing with the budget instead of levelling off
  CHECK(larger.odometer.counts[src] > 2 * small.odometer.counts[src]);

  CHECK_THROWS_AS(stabilize(m, eta, 0), ValidationError);
}

TEST_CASE("continuous-mode stabilization conserves within tolerance") {
  const auto box = BoxLattice::cube(1, 2);
  LatticeParams lp{0.7, 0.3, 0.0};
  const auto classes = build_site_classes(box, ClassPattern::sublattice_d({2}));
  const auto m = assemble_toppling_matrix(box, classes, lp, PileMode::ContinuousAvalanche);
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> eta(m.size());
    for (auto& h : eta) h = rng.uniform() * 2.5 * m.diag[0];
    const auto r = stabilize(m, eta, 100000);
    REQUIRE(r.stable());
    CHECK(is_stable(m, r.heights));
    CHECK(check_conservation(m, eta, r.heights, r.odometer));
  }
}

TEST_CASE("burning separates recurrent from transient configurations") {
  const auto m = path_matrix(2);
  CHECK(burning_test(m, std::vector<std::int64_t>{1, 1}).recurrent);
  CHECK(burning_test(m, std::vector<std::int64_t>{1, 0}).recurrent);
  CHECK(burning_test(m, std::vector<std::int64_t>{0, 1}).recurrent);
  CHECK_FALSE(burning_test(m, std::vector<std::int64_t>{0, 0}).recurrent);

  const auto burn = burning_test(m, std::vector<std::int64_t>{1, 1});
  CHECK(burn.burn_order.size() == 2);
}

TEST_CASE("single dissipative site burns at any stable height") {
  const auto box = BoxLattice::cube(1, 0);
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::all_d()), {});
  for (std::int64_t k = 0; k < 3; ++k)
    CHECK(burning_test(m, std::vector<std::int64_t>{k}).recurrent);
  CHECK(enumerate_recurrent(m).size() == 3);
}

TEST_CASE("recurrent enumeration matches determinants") {
  struct Case {
    int sites;
    std::int64_t expect;
  };
  // tridiagonal thresholds: det grows linearly along the path
  for (const auto& c : {Case{2, 3}, Case{3, 4}, Case{8, 9}}) {
    const auto m = path_matrix(c.sites);
    const auto rec = enumerate_recurrent(m);
    CHECK(static_cast<std::int64_t>(rec.size()) == c.expect);
    const auto det = green::determinant(m);
    REQUIRE(det.exact);
    CHECK(det.exact_value == static_cast<__int128>(c.expect));
  }

  const auto box = BoxLattice::grid({2, 2});
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::empty_d()), {});
  const auto rec = enumerate_recurrent(m);
  const auto det = green::determinant(m);
  REQUIRE(det.exact);
  CHECK(static_cast<__int128>(rec.size()) == det.exact_value);

  CHECK_THROWS_AS(enumerate_recurrent(path_matrix(8), 100), CapacityError);
}

TEST_CASE("stationary chain is uniform on the recurrent set of a 2-site path") {
  const auto m = path_matrix(2);
  StationarySampler chain(m, 99);
  chain.run(2000);
  std::map<std::vector<std::int64_t>, std::int64_t> freq;
  const std::int64_t samples = 100000;
  for (std::int64_t s = 0; s < samples; ++s) {
    chain.step();
    ++freq[chain.heights()];
  }
  CHECK(freq.size() == 3);
  for (const auto& [conf, count] : freq) CHECK(burning_test(m, conf).recurrent);

  // batch means absorb the chain autocorrelation in the error bar
  StationarySampler chain2(m, 100);
  chain2.run(2000);
  std::vector<std::vector<double>> indicators(3, std::vector<double>());
  std::vector<std::vector<std::int64_t>> states(freq.size());
  std::size_t si = 0;
  for (const auto& [conf, count] : freq) states[si++] = conf;
  for (std::int64_t s = 0; s < samples; ++s) {
    chain2.step();
    for (std::size_t k = 0; k < states.size(); ++k)
      indicators[k].push_back(chain2.heights() == states[k] ? 1.0 : 0.0);
  }
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto bm = stats::batch_means(indicators[k], 50);
    CHECK(std::abs(bm.mean - 1.0 / 3.0) <= 3.0 * bm.se);
  }
}

TEST_CASE("stationary heights on a single dissipative site are uniform") {
  const auto box = BoxLattice::cube(1, 0);
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::all_d()), {});
  StationarySampler chain(m, 7);
  chain.run(100);
  const std::int64_t samples = 30000;
  std::vector<std::vector<double>> indicators(3, std::vector<double>());
  for (std::int64_t s = 0; s < samples; ++s) {
    chain.step();
    for (int k = 0; k < 3; ++k) indicators[k].push_back(chain.heights()[0] == k ? 1.0 : 0.0);
  }
  for (int k = 0; k < 3; ++k) {
    const auto bm = stats::batch_means(indicators[k], 50);
    // the single-site chain cycles deterministically, so the estimate is exact
    // up to rounding and the error bar collapses
    CHECK(std::abs(bm.mean - 1.0 / 3.0) <= 3.0 * bm.se + 1e-12);
  }
}

TEST_CASE("probe odometer means match the exact inverse on a 5x5 box") {
  const auto box = BoxLattice::cube(2, 2);
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::empty_d()), {});
  const std::vector<int> center_coord{0, 0};
  const int center = box.index_of(center_coord);

  const green::GreenSolver solver(m);
  const double g_cc = solver.solve_unit(center)[center];

  StationarySampler chain(m, 2024);
  chain.run(5000);
  const std::int64_t samples = 40000;
  std::vector<double> vals;
  vals.reserve(samples);
  for (std::int64_t s = 0; s < samples; ++s) {
    chain.step();
    vals.push_back(static_cast<double>(chain.probe(center).odometer.counts[center]));
  }
  const auto bm = stats::batch_means(vals, 40);
  CHECK(std::abs(bm.mean - g_cc) <= 3.0 * bm.se);
}

TEST_CASE("avalanche statistics on a single site volume") {
  const auto box = BoxLattice::cube(1, 0);
  const auto m = assemble_toppling_matrix(box, build_site_classes(box, ClassPattern::all_d()), {});
  StationarySampler chain(m, 5);
  const std::vector<int> size_grid{0, 1}, diam_grid{0, 1};
  const auto stats_out = avalanche_statistics(chain, 0, 3000, 1, size_grid, diam_grid);
  CHECK(stats_out.mean_size <= 1.0);
  CHECK(stats_out.size_tail.prob[1] == 0.0);   // size never exceeds 1
  CHECK(stats_out.diam_tail.prob[0] == 0.0);   // single site: diameter stays 0
}

TEST_CASE("tree toppling matrix uses threshold q+1") {
  const auto tree = QaryTree::complete(2, 3);
  const auto m = assemble_toppling_matrix(tree);
  for (int v = 0; v < m.size(); ++v) CHECK(m.diag[v] == 3.0);
  // root + both children of an interior vertex receive grains
  const auto r = add_and_stabilize(m, std::vector<std::int64_t>(m.size(), 2), 0, 100000);
  REQUIRE(r.stable());
  CHECK(check_conservation(m, std::vector<std::int64_t>(m.size(), 2), r.heights, r.odometer));
}

TEST_CASE("probe odometer means match the inverse on a pruned tree") {
  const auto complete = QaryTree::complete(2, 8);
  const auto field = topology::sample_trap_field(complete, 0.3, 1.0, 314);
  const auto tree = topology::prune_to_galton_watson(complete, field);
  REQUIRE(tree.size() > 10);
  const auto m = assemble_toppling_matrix(tree);
  const green::GreenSolver solver(m);
  const auto row = solver.solve_unit(0);

  StationarySampler chain(m, 2222);
  chain.run(3000);
  const std::int64_t samples = 30000;
  std::vector<double> at_root;
  at_root.reserve(samples);
  for (std::int64_t s = 0; s < samples; ++s) {
    chain.step();
    at_root.push_back(static_cast<double>(chain.probe(0).odometer.counts[0]));
  }
  const auto bm = stats::batch_means(at_root, 40);
  CHECK(std::abs(bm.mean - row[0]) <= 3.0 * bm.se);
}

TEST_CASE("avalanche tails at the root of a random tree decay") {
  const auto complete = QaryTree::complete(2, 10);
  const auto field = topology::sample_trap_field(complete, 0.3, 1.0, 11235);
  const auto tree = topology::prune_to_galton_watson(complete, field);
  REQUIRE(tree.size() > 30);
  const auto m = assemble_toppling_matrix(tree);
  StationarySampler chain(m, 999);
  chain.run(2000);
  const std::vector<int> size_grid{0, 1, 2, 4, 8, 16};
  const std::vector<int> diam_grid{0, 1, 2, 3, 4, 5};
  const auto av = avalanche_statistics(chain, 0, 8000, 1, size_grid, diam_grid);
  CHECK(av.diam_tail.fit.ok);
  CHECK(av.diam_tail.fit.slope < 0.0);
  for (std::size_t g = 1; g < av.diam_tail.prob.size(); ++g)
    CHECK(av.diam_tail.prob[g] <= av.diam_tail.prob[g - 1]);
  CHECK(av.mean_size >= 0.0);
}

TEST_CASE("serialization formats") {
  std::ostringstream os;
  write_heights_jsonl(os, 7, 3, {1, 0, 2});
  CHECK(os.str() == "{\"seed\":7,\"step\":3,\"heights\":[1,0,2]}\n");

  std::ostringstream cs;
  cs << avalanche_csv_header();
  write_avalanche_csv_row(cs, 7, 3, AvalancheRecord{2, 5, 1});
  CHECK(cs.str() == "seed,step,site,size,diameter\n7,3,2,5,1\n");
}
