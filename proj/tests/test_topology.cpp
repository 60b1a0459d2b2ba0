#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "consentry/topology.hpp"

using namespace consentry;
using Catch::Approx;

namespace {

WeightedGraph path3() {
  WeightedGraph g = WeightedGraph::empty(3);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 1.0);
  return g;
}

WeightedGraph random_connected(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> w(0.2, 2.0);
  WeightedGraph g = WeightedGraph::empty(n);
  for (int v = 1; v < n; ++v) g.add_edge(v, static_cast<int>(rng() % v), w(rng));
  for (int extra = 0; extra < n; ++extra) {
    int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n);
    if (i != j && g.adjacency(i, j) == 0.0 && (rng() % 2)) g.add_edge(i, j, w(rng));
  }
  return g;
}

}  // namespace

TEST_CASE("laplacian reference values") {
  Matrix l = laplacian(path3());
  Matrix expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK((l - expect).cwiseAbs().maxCoeff() == 0.0);

  CHECK(laplacian(WeightedGraph::empty(4)).cwiseAbs().maxCoeff() == 0.0);

  WeightedGraph k3 = WeightedGraph::empty(3);
  k3.add_edge(0, 1, 1.0);
  k3.add_edge(1, 2, 1.0);
  k3.add_edge(0, 2, 1.0);
  Matrix lk = laplacian(k3);
  Matrix expect_k3 = 3.0 * Matrix::Identity(3, 3) - Matrix::Ones(3, 3);
  CHECK((lk - expect_k3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(lk.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("laplacian rows sum to zero on random graphs") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    WeightedGraph g = random_connected(rng, 3 + static_cast<int>(rng() % 6));
    CHECK(laplacian(g).rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("is_connected") {
  CHECK(is_connected(path3()));

  WeightedGraph two = WeightedGraph::empty(4);
  two.add_edge(0, 1, 1.0);
  two.add_edge(2, 3, 1.0);
  CHECK_FALSE(is_connected(two));

  WeightedGraph iso = WeightedGraph::empty(3);
  iso.add_edge(0, 1, 1.0);
  CHECK_FALSE(is_connected(iso));
}

TEST_CASE("node_degree counts positive-weight incident edges") {
  WeightedGraph star = WeightedGraph::empty(5);
  for (int leaf = 1; leaf < 5; ++leaf) star.add_edge(0, leaf, 0.5);
  CHECK(node_degree(star, 0) == 4);
  CHECK(node_degree(star, 1) == 1);
  WeightedGraph iso = WeightedGraph::empty(2);
  CHECK(node_degree(iso, 0) == 0);
  CHECK(node_degree(path3(), 0) == 1);
  CHECK_THROWS_AS(node_degree(path3(), 9), Error);
}

TEST_CASE("delta_laplacian") {
  TopologyLibrary lib;
  lib.modes.push_back(path3());
  lib.modes.push_back(path3());
  CHECK(delta_laplacian(lib, 2).cwiseAbs().maxCoeff() == 0.0);

  WeightedGraph plus = path3();
  plus.add_edge(0, 1, 2.0);  // raise weight 1 -> 2
  lib.modes[1] = plus;
  Matrix dl = delta_laplacian(lib, 2);
  CHECK(dl(0, 0) == Approx(1.0));
  CHECK(dl(0, 1) == Approx(-1.0));
  CHECK(dl(2, 2) == Approx(0.0).margin(0.0));

  CHECK_THROWS_AS(delta_laplacian(lib, 1), Error);
  CHECK_THROWS_AS(delta_laplacian(lib, 5), Error);
}

TEST_CASE("components_of_delta reference cases") {
  DeltaDecomposition none = components_of_delta(Matrix::Zero(4, 4));
  CHECK(none.components.empty());
  CHECK(none.singletons.size() == 4);

  // One added edge {0,1} on five nodes.
  Matrix dl = Matrix::Zero(5, 5);
  dl(0, 0) = dl(1, 1) = 1.0;
  dl(0, 1) = dl(1, 0) = -1.0;
  DeltaDecomposition one = components_of_delta(dl);
  REQUIRE(one.components.size() == 1);
  CHECK(one.components[0] == std::vector<int>{0, 1});
  CHECK(one.singletons == std::vector<int>{2, 3, 4});

  // Edges {0,1} and {1,2} switched together: a single path component.
  Matrix dl2 = Matrix::Zero(4, 4);
  dl2(0, 0) = 1.0;
  dl2(1, 1) = 2.0;
  dl2(2, 2) = 1.0;
  dl2(0, 1) = dl2(1, 0) = -1.0;
  dl2(1, 2) = dl2(2, 1) = -1.0;
  DeltaDecomposition chain = components_of_delta(dl2);
  REQUIRE(chain.components.size() == 1);
  CHECK(chain.components[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("components_of_delta block reconstruction") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 6;
    WeightedGraph a = random_connected(rng, n);
    WeightedGraph b = a;
    // switch a couple of links
    b.add_edge(0, 3, a.adjacency(0, 3) > 0 ? 0.0 : 1.3);
    b.adjacency(0, 3) = b.adjacency(3, 0) = (a.adjacency(0, 3) > 0 ? 0.0 : 1.3);
    Matrix dl = laplacian(b) - laplacian(a);
    if (dl.cwiseAbs().maxCoeff() == 0.0) continue;
    DeltaDecomposition dd = components_of_delta(dl);

    Matrix blockdiag = Matrix::Zero(n, n);
    int at = 0;
    for (const auto& blk : dd.blocks) {
      blockdiag.block(at, at, blk.rows(), blk.cols()) = blk;
      at += static_cast<int>(blk.rows());
    }
    Matrix p = dd.permutation;
    CHECK((p * dl * p.transpose() - blockdiag).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p.transpose() * blockdiag * p - dl).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("partition on a single cluster") {
  TopologyLibrary lib;
  lib.modes.push_back(path3());
  ClusterPartition part;
  part.clusters = {{0, 1, 2}};
  part.local_control_centers = {1};
  PartitionedModel pm = partition(lib, part, 1.0, 2.0);
  REQUIRE(pm.clusters.size() == 1);
  CHECK(pm.clusters[0].e.cols() == 0);
  CHECK((pm.clusters[0].l_intra[0] - laplacian(path3())).cwiseAbs().maxCoeff() == 0.0);
  CHECK(pm.clusters[0].l_couple.empty());
}

TEST_CASE("partition couples two clusters through one edge") {
  // Nodes 0-1 in P1, 2-3 in P2, cut edge {1,2} with weight 0.7.
  TopologyLibrary lib;
  WeightedGraph g = WeightedGraph::empty(4);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 0.7);
  g.add_edge(2, 3, 1.2);
  lib.modes.push_back(g);
  ClusterPartition part;
  part.clusters = {{0, 1}, {2, 3}};
  part.local_control_centers = {1, 2};
  const double alpha = 1.5;
  PartitionedModel pm = partition(lib, part, alpha, 2.0);

  const ClusterModel& c0 = pm.clusters[0];
  REQUIRE(c0.e.cols() == 1);
  // Column sits on the velocity row of node 1 (local index 1).
  CHECK(c0.e(3, 0) == Approx(alpha * 0.7));
  CHECK(c0.e.col(0).cwiseAbs().sum() == Approx(alpha * 0.7));

  // Eq. (13) identity: sum_j A^{ij} x_j = E x_d on random states.
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    Vector xpos(4);
    for (int i = 0; i < 4; ++i) xpos(i) = u(rng);
    // coupling contribution to cluster 0 velocity rows: -alpha * L^{01} x_1
    Vector coupled = Vector::Zero(4);  // 2*N_0
    const Matrix& l01 = c0.l_couple[0].second;
    coupled.tail(2) = -alpha * l01 * Vector{{xpos(2), xpos(3)}};
    Vector via_e = c0.e * pm.coupling_input(0, xpos, alpha);
    CHECK((coupled - via_e).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("partition aggregates cuts sharing a boundary node") {
  // Node 2 in P2 connects to both 0 and 1 in P1.
  TopologyLibrary lib;
  WeightedGraph g = WeightedGraph::empty(4);
  g.add_edge(0, 1, 1.0);
  g.add_edge(0, 2, 0.4);
  g.add_edge(1, 2, 0.6);
  g.add_edge(2, 3, 1.0);
  lib.modes.push_back(g);
  ClusterPartition part;
  part.clusters = {{0, 1}, {2, 3}};
  const double alpha = 2.0;
  PartitionedModel pm = partition(lib, part, alpha, 2.0);

  const ClusterModel& c1 = pm.clusters[1];
  REQUIRE(c1.e.cols() == 1);  // two cuts collapse onto node 2's velocity row
  CHECK(rank_tol(c1.e) == 1);
  CHECK(c1.e(2, 0) == Approx(1.0));

  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector xpos(4);
  for (int i = 0; i < 4; ++i) xpos(i) = u(rng);
  Vector coupled = Vector::Zero(4);
  const Matrix& l10 = c1.l_couple[0].second;
  coupled.tail(2) = -alpha * l10 * Vector{{xpos(0), xpos(1)}};
  Vector via_e = c1.e * pm.coupling_input(1, xpos, alpha);
  CHECK((coupled - via_e).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("partition validates cluster covers and coupling invariance") {
  TopologyLibrary lib;
  lib.modes.push_back(path3());
  ClusterPartition bad;
  bad.clusters = {{0, 1}};  // node 2 missing
  CHECK_THROWS_AS(partition(lib, bad, 1.0, 1.0), Error);

  // A mode that changes an inter-cluster weight must be rejected.
  TopologyLibrary lib2;
  WeightedGraph g = WeightedGraph::empty(4);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 0.5);
  g.add_edge(2, 3, 1.0);
  WeightedGraph g2 = g;
  g2.adjacency(1, 2) = g2.adjacency(2, 1) = 0.9;
  lib2.modes = {g, g2};
  ClusterPartition part;
  part.clusters = {{0, 1}, {2, 3}};
  CHECK_THROWS_AS(partition(lib2, part, 1.0, 1.0), Error);
}

TEST_CASE("19-node three-cluster split produces three subsystems") {
  std::mt19937 rng(41);
  WeightedGraph g = WeightedGraph::empty(19);
  auto chain = [&](int from, int to) {
    for (int v = from; v < to; ++v) g.add_edge(v, v + 1, 1.0);
  };
  chain(0, 6);
  chain(7, 11);
  chain(12, 18);
  g.add_edge(6, 7, 0.5);
  g.add_edge(11, 12, 0.5);
  TopologyLibrary lib;
  lib.modes.push_back(g);
  ClusterPartition part;
  part.clusters = {{0, 1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11}, {12, 13, 14, 15, 16, 17, 18}};
  PartitionedModel pm = partition(lib, part, 1.0, 2.0);
  REQUIRE(pm.clusters.size() == 3);
  CHECK(pm.clusters[0].size() == 7);
  CHECK(pm.clusters[1].size() == 5);
  CHECK(pm.clusters[2].size() == 7);
  CHECK(pm.clusters[0].e.cols() == 1);
  CHECK(pm.clusters[1].e.cols() == 2);
  CHECK(pm.clusters[2].e.cols() == 1);
  (void)rng;
}

TEST_CASE("switching signal validation and lookup") {
  SwitchingSignal sig{{0.0, 2.0}, {1, 2}};
  sig.validate();
  CHECK(sig.mode_at(0.0) == 1);
  CHECK(sig.mode_at(1.999) == 1);
  CHECK(sig.mode_at(2.0) == 2);
  CHECK(sig.mode_at(10.0) == 2);

  SwitchingSignal bad{{0.0, 0.0}, {1, 2}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("library validation requires connected modes") {
  TopologyLibrary lib;
  WeightedGraph g = WeightedGraph::empty(3);
  g.add_edge(0, 1, 1.0);
  lib.modes.push_back(g);  // node 2 isolated
  CHECK_THROWS_AS(lib.validate(), Error);
}
