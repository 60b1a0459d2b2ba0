#pragma once

// Switching communication graphs: Laplacians, cluster partitioning with
// inter-cluster coupling matrices, and connected-component decomposition of
// Laplacian differences. Node and mode indices are 0-based internally; the
// scenario TOML and all emitted reports use 1-based ids.

#include <Eigen/Dense>

#include <algorithm>
#include <set>
#include <tuple>
#include <vector>

#include "consentry/errors.hpp"
#include "consentry/numerics.hpp"

namespace consentry {

struct WeightedGraph {
  int n = 0;
  Matrix adjacency;  // n x n, symmetric, nonnegative, zero diagonal

  static WeightedGraph empty(int n) {
    WeightedGraph g;
    g.n = n;
    g.adjacency = Matrix::Zero(n, n);
    return g;
  }

  void add_edge(int i, int j, double w) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j)
      throw Error(ErrorCode::invalid_input, "add_edge: bad node pair");
    if (w < 0) throw Error(ErrorCode::invalid_input, "add_edge: negative weight");
    adjacency(i, j) = w;
    adjacency(j, i) = w;
  }

  void validate() const {
    if (adjacency.rows() != n || adjacency.cols() != n)
      throw Error(ErrorCode::invalid_input, "WeightedGraph: adjacency shape mismatch");
    require_finite(adjacency, "WeightedGraph");
    if ((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() > 0)
      throw Error(ErrorCode::invalid_input, "WeightedGraph: adjacency not symmetric");
    if (adjacency.diagonal().cwiseAbs().maxCoeff() > 0)
      throw Error(ErrorCode::invalid_input, "WeightedGraph: nonzero diagonal");
    if (adjacency.minCoeff() < 0)
      throw Error(ErrorCode::invalid_input, "WeightedGraph: negative weight");
  }
};

inline Matrix laplacian(const WeightedGraph& g) {
  g.validate();
  Matrix l = -g.adjacency;
  l.diagonal() = g.adjacency.rowwise().sum();
  return l;
}

inline int node_degree(const WeightedGraph& g, int i) {
  if (i < 0 || i >= g.n) throw Error(ErrorCode::invalid_input, "node_degree: node out of range");
  int d = 0;
  for (int j = 0; j < g.n; ++j)
    if (g.adjacency(i, j) > 0) ++d;
  return d;
}

inline bool is_connected(const WeightedGraph& g) {
  g.validate();
  if (g.n == 0) return true;
  std::vector<char> seen(g.n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int j = 0; j < g.n; ++j) {
      if (!seen[j] && g.adjacency(v, j) > 0) {
        seen[j] = 1;
        ++count;
        stack.push_back(j);
      }
    }
  }
  return count == g.n;
}

/// Finite set of switching graphs; mode 1 is the normal mode. Mode indices
/// are 1-based to match the switching-signal convention.
struct TopologyLibrary {
  std::vector<WeightedGraph> modes;

  int n() const { return modes.empty() ? 0 : modes.front().n; }
  int num_modes() const { return static_cast<int>(modes.size()); }

  const WeightedGraph& mode(int q) const {
    if (q < 1 || q > num_modes())
      throw Error(ErrorCode::invalid_input, "TopologyLibrary: mode out of range");
    return modes[static_cast<size_t>(q - 1)];
  }

  void validate() const {
    if (modes.empty()) throw Error(ErrorCode::invalid_input, "TopologyLibrary: no modes");
    for (const auto& g : modes) {
      if (g.n != n())
        throw Error(ErrorCode::invalid_input, "TopologyLibrary: inconsistent node counts");
      if (!is_connected(g))
        throw Error(ErrorCode::invalid_input, "TopologyLibrary: every mode must be connected");
    }
  }
};

inline Matrix delta_laplacian(const TopologyLibrary& lib, int q) {
  if (q == 1) throw Error(ErrorCode::invalid_input, "delta_laplacian: q must differ from 1");
  return laplacian(lib.mode(q)) - laplacian(lib.mode(1));
}

/// Right-continuous piecewise-constant mode signal.
struct SwitchingSignal {
  std::vector<double> breakpoints;  // ascending, breakpoints[0] = t0
  std::vector<int> mode_indices;    // 1-based, one per interval

  static SwitchingSignal constant(int mode, double t0 = 0.0) {
    return SwitchingSignal{{t0}, {mode}};
  }

  void validate() const {
    if (breakpoints.empty() || mode_indices.size() != breakpoints.size())
      throw Error(ErrorCode::invalid_input, "SwitchingSignal: sizes mismatch");
    for (size_t k = 1; k < breakpoints.size(); ++k)
      if (breakpoints[k] <= breakpoints[k - 1])
        throw Error(ErrorCode::invalid_input, "SwitchingSignal: dwell times must be positive");
  }

  int mode_at(double t) const {
    int last = mode_indices.front();
    for (size_t k = 0; k < breakpoints.size(); ++k) {
      if (t >= breakpoints[k] - 1e-12) last = mode_indices[k];
      else break;
    }
    return last;
  }
};

// ---------------------------------------------------------------------------
// Cluster partitioning (per-cluster blocks and coupling matrices)

struct ClusterPartition {
  std::vector<std::vector<int>> clusters;  // disjoint node sets covering 0..n-1
  std::vector<int> local_control_centers;  // one node per cluster

  int num_clusters() const { return static_cast<int>(clusters.size()); }

  void validate(int n) const {
    std::vector<char> seen(n, 0);
    int total = 0;
    for (const auto& cl : clusters) {
      for (int v : cl) {
        if (v < 0 || v >= n) throw Error(ErrorCode::invalid_input, "ClusterPartition: node out of range");
        if (seen[v]) throw Error(ErrorCode::invalid_input, "ClusterPartition: overlapping clusters");
        seen[v] = 1;
        ++total;
      }
    }
    if (total != n) throw Error(ErrorCode::invalid_input, "ClusterPartition: clusters must cover all nodes");
    if (!local_control_centers.empty() &&
        local_control_centers.size() != clusters.size())
      throw Error(ErrorCode::invalid_input, "ClusterPartition: one control center per cluster");
    for (size_t i = 0; i < local_control_centers.size(); ++i) {
      const auto& cl = clusters[i];
      if (std::find(cl.begin(), cl.end(), local_control_centers[i]) == cl.end())
        throw Error(ErrorCode::invalid_input, "ClusterPartition: center not inside its cluster");
    }
  }
};

struct EdgeCut {
  int node_local;     // boundary node, this cluster (global index)
  int node_remote;    // neighboring-cluster node (global index)
  int remote_cluster; // cluster index of node_remote
  double weight;
};

/// One Eq.-(11)/(13) subsystem: intra-cluster blocks for every mode, fixed
/// coupling blocks and the full-column-rank unknown-input map E.
struct ClusterModel {
  std::vector<int> nodes;                  // global indices, ascending
  int center = -1;                         // local control center (global index)
  std::vector<Matrix> l_intra;             // per mode, N_i x N_i
  std::vector<std::pair<int, Matrix>> l_couple;  // (neighbor cluster, N_i x N_j), mode-independent
  Matrix e;                                // 2N_i x c unknown-input map
  std::vector<std::vector<EdgeCut>> e_columns;   // cuts aggregated into each column
  std::vector<EdgeCut> cuts;               // all cuts, ascending (cluster, node) order

  int size() const { return static_cast<int>(nodes.size()); }
  int local_index(int global) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), global);
    if (it == nodes.end() || *it != global)
      throw Error(ErrorCode::invalid_input, "ClusterModel: node not in cluster");
    return static_cast<int>(it - nodes.begin());
  }
};

struct PartitionedModel {
  ClusterPartition partition;
  std::vector<ClusterModel> clusters;
  double alpha = 1.0;
  double gamma = 1.0;
  int num_modes = 1;

  /// Unknown-input signal x_d for cluster i at a global position state x.
  Vector coupling_input(int i, const Vector& x_positions, double alpha_gain) const {
    const ClusterModel& cm = clusters[static_cast<size_t>(i)];
    Vector xd(cm.e.cols());
    for (Eigen::Index col = 0; col < cm.e.cols(); ++col) {
      const auto& cuts = cm.e_columns[static_cast<size_t>(col)];
      if (cuts.size() == 1) {
        xd(col) = x_positions(cuts[0].node_remote);
      } else {
        double acc = 0.0;
        for (const auto& cut : cuts) acc += alpha_gain * cut.weight * x_positions(cut.node_remote);
        xd(col) = acc;
      }
    }
    return xd;
  }
};

/// Splits the closed-loop system over the given clusters. Couplings must be
/// identical in every mode (they are treated as unknown inputs with a fixed
/// map E); libraries violating that are rejected.
inline PartitionedModel partition(const TopologyLibrary& lib, const ClusterPartition& parts,
                                  double alpha, double gamma) {
  lib.validate();
  parts.validate(lib.n());
  const int n = lib.n();

  std::vector<int> cluster_of(n, -1);
  for (size_t i = 0; i < parts.clusters.size(); ++i)
    for (int v : parts.clusters[i]) cluster_of[v] = static_cast<int>(i);

  PartitionedModel pm;
  pm.partition = parts;
  pm.alpha = alpha;
  pm.gamma = gamma;
  pm.num_modes = lib.num_modes();

  // Couplings must not change across modes (they are unknown inputs with a
  // single map E shared by all modes).
  const Matrix& adj1 = lib.mode(1).adjacency;
  for (int q = 2; q <= lib.num_modes(); ++q) {
    const Matrix& adjq = lib.mode(q).adjacency;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (cluster_of[i] != cluster_of[j] &&
            std::abs(adjq(i, j) - adj1(i, j)) > 1e-12)
          throw Error(ErrorCode::invalid_input,
                      "partition: inter-cluster couplings must be identical in all modes");
  }

  for (size_t ci = 0; ci < parts.clusters.size(); ++ci) {
    ClusterModel cm;
    cm.nodes = parts.clusters[ci];
    std::sort(cm.nodes.begin(), cm.nodes.end());
    if (!parts.local_control_centers.empty()) cm.center = parts.local_control_centers[ci];
    const int ni = cm.size();

    for (int q = 1; q <= lib.num_modes(); ++q) {
      const Matrix lq = laplacian(lib.mode(q));
      Matrix li(ni, ni);
      for (int r = 0; r < ni; ++r)
        for (int c = 0; c < ni; ++c) li(r, c) = lq(cm.nodes[r], cm.nodes[c]);
      cm.l_intra.push_back(std::move(li));
    }

    const Matrix l1 = laplacian(lib.mode(1));
    for (size_t cj = 0; cj < parts.clusters.size(); ++cj) {
      if (cj == ci) continue;
      std::vector<int> nj = parts.clusters[cj];
      std::sort(nj.begin(), nj.end());
      Matrix lij(ni, static_cast<int>(nj.size()));
      bool any = false;
      for (int r = 0; r < ni; ++r)
        for (size_t c = 0; c < nj.size(); ++c) {
          lij(r, static_cast<int>(c)) = l1(cm.nodes[r], nj[c]);
          if (lij(r, static_cast<int>(c)) != 0.0) any = true;
        }
      if (any) cm.l_couple.emplace_back(static_cast<int>(cj), std::move(lij));
    }

    // Edge cuts in ascending (remote cluster, remote node, local node) order.
    for (size_t cj = 0; cj < parts.clusters.size(); ++cj) {
      if (cj == ci) continue;
      for (int jr : parts.clusters[cj])
        for (int il : cm.nodes)
          if (adj1(il, jr) > 0)
            cm.cuts.push_back(EdgeCut{il, jr, static_cast<int>(cj), adj1(il, jr)});
    }
    std::sort(cm.cuts.begin(), cm.cuts.end(), [](const EdgeCut& a, const EdgeCut& b) {
      return std::tie(a.remote_cluster, a.node_remote, a.node_local) <
             std::tie(b.remote_cluster, b.node_remote, b.node_local);
    });

    // One E column per cut; cuts sharing a boundary node would give
    // collinear columns, so those collapse into a single aggregated column.
    std::vector<std::vector<EdgeCut>> columns;
    std::vector<char> used(cm.cuts.size(), 0);
    for (size_t k = 0; k < cm.cuts.size(); ++k) {
      if (used[k]) continue;
      std::vector<EdgeCut> group{cm.cuts[k]};
      used[k] = 1;
      for (size_t l = k + 1; l < cm.cuts.size(); ++l)
        if (!used[l] && cm.cuts[l].node_local == cm.cuts[k].node_local) {
          group.push_back(cm.cuts[l]);
          used[l] = 1;
        }
      columns.push_back(std::move(group));
    }
    cm.e = Matrix::Zero(2 * ni, static_cast<int>(columns.size()));
    for (size_t col = 0; col < columns.size(); ++col) {
      const auto& group = columns[col];
      const int row = ni + cm.local_index(group[0].node_local);
      cm.e(row, static_cast<int>(col)) =
          (group.size() == 1) ? alpha * group[0].weight : 1.0;
    }
    cm.e_columns = std::move(columns);
    pm.clusters.push_back(std::move(cm));
  }
  return pm;
}

/// Block form of the Eq.-(11) intra-cluster matrix for mode q.
inline Matrix cluster_mode_matrix(const PartitionedModel& pm, int cluster_i, int q) {
  const ClusterModel& cm = pm.clusters[static_cast<size_t>(cluster_i)];
  const int ni = cm.size();
  Matrix a = Matrix::Zero(2 * ni, 2 * ni);
  a.topRightCorner(ni, ni) = Matrix::Identity(ni, ni);
  a.bottomLeftCorner(ni, ni) = -pm.alpha * cm.l_intra[static_cast<size_t>(q - 1)];
  a.bottomRightCorner(ni, ni) = -pm.gamma * Matrix::Identity(ni, ni);
  return a;
}

// ---------------------------------------------------------------------------
// Connected components of a Laplacian difference

struct DeltaDecomposition {
  Matrix delta_l;
  std::vector<std::vector<int>> components;  // |D_c| >= 2 each, ascending
  std::vector<int> singletons;               // untouched nodes
  Eigen::PermutationMatrix<Eigen::Dynamic> permutation;  // relabeling P
  std::vector<Matrix> blocks;                // delta_l restricted to each component
};

inline DeltaDecomposition components_of_delta(const Matrix& delta_l, double entry_tol = 1e-12) {
  require_finite(delta_l, "components_of_delta");
  const int n = static_cast<int>(delta_l.rows());
  if (delta_l.cols() != n)
    throw Error(ErrorCode::invalid_input, "components_of_delta: matrix not square");
  const double scale = std::max(1.0, delta_l.cwiseAbs().maxCoeff());
  if ((delta_l - delta_l.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorCode::invalid_input, "components_of_delta: matrix not symmetric");
  if ((delta_l.rowwise().sum()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw Error(ErrorCode::invalid_input, "components_of_delta: rows must sum to zero");

  DeltaDecomposition dd;
  dd.delta_l = delta_l;

  std::vector<int> comp(n, -1);
  int next = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[s] != -1) continue;
    bool touched = false;
    for (int j = 0; j < n; ++j)
      if (j != s && std::abs(delta_l(s, j)) > entry_tol) { touched = true; break; }
    if (!touched) continue;
    comp[s] = next;
    std::vector<int> stack{s};
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j)
        if (j != v && std::abs(delta_l(v, j)) > entry_tol && comp[j] == -1) {
          comp[j] = next;
          stack.push_back(j);
        }
    }
    ++next;
  }

  dd.components.resize(next);
  for (int v = 0; v < n; ++v) {
    if (comp[v] == -1) dd.singletons.push_back(v);
    else dd.components[static_cast<size_t>(comp[v])].push_back(v);
  }

  std::vector<int> order;
  for (const auto& c : dd.components) order.insert(order.end(), c.begin(), c.end());
  order.insert(order.end(), dd.singletons.begin(), dd.singletons.end());
  // P maps original index order[k] to relabeled position k.
  Eigen::VectorXi indices(n);
  for (int k = 0; k < n; ++k) indices(order[static_cast<size_t>(k)]) = k;
  dd.permutation = Eigen::PermutationMatrix<Eigen::Dynamic>(indices);

  for (const auto& c : dd.components) {
    Matrix blk(c.size(), c.size());
    for (size_t r = 0; r < c.size(); ++r)
      for (size_t col = 0; col < c.size(); ++col) blk(r, col) = delta_l(c[r], c[col]);
    dd.blocks.push_back(std::move(blk));
  }
  return dd;
}

}  // namespace consentry
