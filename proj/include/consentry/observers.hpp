#pragma once

// The glocal observer pair: one centralized Luenberger observer on global
// measurements (kept on the normal-mode matrix so topology switches show up
// in its residual) and per-cluster unknown-input observers decoupled from
// neighboring clusters.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "consentry/errors.hpp"
#include "consentry/numerics.hpp"
#include "consentry/plant.hpp"
#include "consentry/topology.hpp"

namespace consentry {

namespace detail {

/// Orthonormal split of the state space into observable/unobservable parts
/// of (A, C): columns of `obs` span the row space of the observability
/// matrix, columns of `unobs` its kernel.
struct ObsSplit {
  Matrix obs;
  Matrix unobs;
};

inline Matrix observability_matrix(const Matrix& a, const Matrix& c) {
  const Eigen::Index n = a.rows(), p = c.rows();
  Matrix o(p * n, n);
  Matrix block = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    o.middleRows(k * p, p) = block;
    if (k + 1 < n) block = block * a;
  }
  return o;
}

inline ObsSplit observability_split(const Matrix& a, const Matrix& c) {
  const Matrix o = observability_matrix(a, c);
  ObsSplit s;
  if (c.rows() == 0) {
    s.obs = Matrix::Zero(a.rows(), 0);
    s.unobs = Matrix::Identity(a.rows(), a.rows());
    return s;
  }
  Eigen::JacobiSVD<Matrix> svd(o, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  const double cut = std::max(tol::rank_rel * smax, tol::rank_floor);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++r;
  s.obs = svd.matrixV().leftCols(r);
  s.unobs = svd.matrixV().rightCols(a.rows() - r);
  return s;
}

/// Moore-style eigenstructure assignment: K with eig(A - B K) = targets
/// (distinct reals). Throws design_infeasible when the pair resists
/// placement after bounded retries.
inline Matrix place_poles(const Matrix& a, const Matrix& b, std::vector<double> targets) {
  const Eigen::Index n = a.rows(), m = b.cols();
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw Error(ErrorCode::invalid_input, "place_poles: need one target per state");
  if (n == 0) return Matrix::Zero(m, 0);
  if (m == 0) throw Error(ErrorCode::design_infeasible, "place_poles: no inputs");

  for (int attempt = 0; attempt < 6; ++attempt) {
    std::vector<double> tg = targets;
    for (size_t k = 0; k < tg.size(); ++k)
      tg[k] -= attempt * (0.07 + 0.013 * static_cast<double>(k));

    Matrix v(n, n), w(m, n);
    Matrix vort = Matrix::Zero(n, 0);  // orthonormal span of chosen v's
    bool ok = true;
    for (Eigen::Index k = 0; k < n; ++k) {
      Matrix pen(n, n + m);
      pen << a - tg[static_cast<size_t>(k)] * Matrix::Identity(n, n), b;
      SubspaceBasis ker = nullspace_basis(pen);
      if (ker.dim() == 0) { ok = false; break; }
      // Prefer the kernel combination whose state part is most independent
      // of the v's already chosen.
      Matrix vparts = ker.basis.topRows(n);
      Matrix proj = vparts - vort * (vort.transpose() * vparts);
      Eigen::JacobiSVD<Matrix> svd(proj, Eigen::ComputeFullV);
      Vector combo = svd.matrixV().col(0);
      Vector dir = ker.basis * combo;
      double vn = dir.head(n).norm();
      if (vn < 1e-12) { ok = false; break; }
      dir /= vn;
      v.col(k) = dir.head(n);
      w.col(k) = dir.tail(m);
      // Grow the orthonormal accumulator.
      Vector res = v.col(k) - vort * (vort.transpose() * v.col(k));
      if (res.norm() > 1e-10) {
        vort.conservativeResize(Eigen::NoChange, vort.cols() + 1);
        vort.col(vort.cols() - 1) = res.normalized();
      }
    }
    if (!ok) continue;
    Eigen::FullPivLU<Matrix> lu(v);
    if (!lu.isInvertible()) continue;
    Matrix kmat = w * lu.inverse();
    // Verify the assignment.
    Eigen::EigenSolver<Matrix> es(a - b * kmat);
    bool match = true;
    std::vector<bool> used(tg.size(), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex lam = es.eigenvalues()(i);
      bool found = false;
      for (size_t j = 0; j < tg.size(); ++j) {
        if (!used[j] && std::abs(lam - Complex(tg[j], 0.0)) <= 1e-5 * (1.0 + std::abs(tg[j]))) {
          used[j] = true;
          found = true;
          break;
        }
      }
      if (!found) { match = false; break; }
    }
    if (match) return kmat;
  }
  throw Error(ErrorCode::design_infeasible, "place_poles: assignment failed");
}

inline std::vector<double> spread_targets(int count, double eta) {
  std::vector<double> t(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k)
    t[static_cast<size_t>(k)] =
        (count == 1) ? -(eta + 1.0)
                     : -(eta + 2.0 * static_cast<double>(k) / static_cast<double>(count - 1));
  return t;
}

/// Observer gain L for (A, C) with the observable modes at `targets`
/// (dual of place_poles); unobservable modes are left untouched.
inline Matrix observer_gain(const Matrix& a, const Matrix& c, double eta) {
  ObsSplit split = observability_split(a, c);
  const int r = static_cast<int>(split.obs.cols());
  if (r == 0) return Matrix::Zero(a.rows(), c.rows());
  const Matrix a11 = split.obs.transpose() * a * split.obs;
  const Matrix c1 = c * split.obs;
  const Matrix k1t = place_poles(a11.transpose(), c1.transpose(), spread_targets(r, eta));
  return split.obs * k1t.transpose();
}

inline double spectral_abscissa(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, false);
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    worst = std::max(worst, es.eigenvalues()(i).real());
  return worst;
}

inline double eigvec_condition(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m);
  Eigen::JacobiSVD<MatrixC> svd(es.eigenvectors());
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Centralized observer

struct CentralDesign {
  Matrix gain_h;                         // 2N x |M|
  double eta = 0.5;
  std::vector<VectorC> mode_eigenvalues; // eig(A_q - H C) per mode
  int designed_on_mode = 1;
};

/// Designs a constant output-injection gain H with every observable mode of
/// A_q - H C at Re <= -eta for all library modes; the consensus direction
/// [1;0] may stay marginal when it lies in ker(C). Bounded search over the
/// mode used for placement; failure reports the first violating mode.
inline CentralDesign design_central_gain(const PlantModel& p, double eta = 0.5) {
  p.validate();
  const Matrix c = p.output_matrix();
  const int n2 = p.state_dim();
  Vector consensus = Vector::Zero(n2);
  consensus.head(p.n()).setConstant(1.0 / std::sqrt(static_cast<double>(p.n())));
  const bool consensus_hidden = (c.rows() == 0) || (c * consensus).norm() <= 1e-10;

  std::string last_fail = "no candidate gain";
  for (int dm = 1; dm <= p.lib.num_modes(); ++dm) {
    for (double depth : {0.0, 0.75, 1.5, 3.0}) {
      Matrix h;
      try {
        h = detail::observer_gain(assemble_mode_matrix(p, dm), c, eta + depth);
      } catch (const Error&) {
        continue;
      }
      CentralDesign d;
      d.gain_h = h;
      d.eta = eta;
      d.designed_on_mode = dm;
      bool pass = true;
      for (int q = 1; q <= p.lib.num_modes() && pass; ++q) {
        const Matrix f = assemble_mode_matrix(p, q) - h * c;
        Eigen::EigenSolver<Matrix> es(f);
        d.mode_eigenvalues.push_back(es.eigenvalues());
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
          const Complex lam = es.eigenvalues()(i);
          if (lam.real() <= -eta + 1e-7) continue;
          // The only permitted marginal mode is the hidden consensus
          // direction.
          bool marginal_ok = false;
          if (consensus_hidden && std::abs(lam) <= 1e-6) {
            VectorC dir = es.eigenvectors().col(i);
            marginal_ok = std::abs(dir.dot(consensus.cast<Complex>())) >= 1.0 - 1e-6;
          }
          if (!marginal_ok) {
            last_fail = "mode " + std::to_string(q) + " eigenvalue Re=" +
                        std::to_string(lam.real());
            pass = false;
            break;
          }
        }
      }
      if (pass) return d;
    }
  }
  throw Error(ErrorCode::design_infeasible, "design_central_gain: " + last_fail);
}

/// Residual record shared by the central observer and the cluster UIOs.
struct ResidualTrace {
  std::vector<double> times;
  Matrix r0;                     // |M| x T (global residual), empty if absent
  std::vector<Matrix> r_local;   // per cluster, p_i x T
  Vector r0_norm;                // per-time inf-norm
  Matrix rloc_norm;              // clusters x T
};

/// Runs the Eq.-(20) observer over a recorded trace. The observer matrix is
/// pinned to mode 1 regardless of the plant's switching: the resulting
/// (A_sigma - A_1) x discrepancy in the error dynamics is the detection
/// mechanism. Measurements between grid points are linearly interpolated.
inline ResidualTrace central_observer_run(const PlantModel& p, const Matrix& h,
                                          const SimTrace& tr) {
  const Matrix a1 = assemble_mode_matrix(p, 1);
  const Matrix c = p.output_matrix();
  if (h.rows() != p.state_dim() || h.cols() != c.rows())
    throw Error(ErrorCode::dimension_mismatch, "central_observer_run: gain shape mismatch");

  const int t_count = tr.size();
  ResidualTrace rt;
  rt.times = tr.times;
  rt.r0.resize(c.rows(), t_count);
  rt.r0_norm.resize(t_count);

  Vector xhat = Vector::Zero(p.state_dim());
  const Matrix acl = a1 - h * c;
  for (int k = 0; k < t_count; ++k) {
    const Vector y = tr.outputs.col(k);
    Vector r = y - c * xhat;
    rt.r0.col(k) = r;
    rt.r0_norm(k) = (r.size() == 0) ? 0.0 : r.cwiseAbs().maxCoeff();
    if (k + 1 == t_count) break;
    const double dt = tr.times[static_cast<size_t>(k + 1)] - tr.times[static_cast<size_t>(k)];
    const Vector y1 = tr.outputs.col(k + 1);
    auto yin = [&](double ts) -> Vector {
      const double s = (ts - tr.times[static_cast<size_t>(k)]) / dt;
      return (1.0 - s) * y + s * y1;
    };
    xhat = detail::rk4_step(acl, h, xhat, tr.times[static_cast<size_t>(k)], dt, yin);
  }
  return rt;
}

// ---------------------------------------------------------------------------
// Unknown-input observers

/// Row-selection matrix for the locally measured nodes of one cluster
/// (positions first, then velocities, ascending node order).
inline Matrix local_measurement_matrix(const ClusterModel& cm, const std::vector<int>& measured) {
  const int ni = cm.size();
  Matrix c = Matrix::Zero(2 * static_cast<int>(measured.size()), 2 * ni);
  int r = 0;
  for (int g : measured) c(r++, cm.local_index(g)) = 1.0;
  for (int g : measured) c(r++, ni + cm.local_index(g)) = 1.0;
  return c;
}

struct UioRealization {
  int cluster_index = -1;
  std::vector<int> measured_nodes;  // global ids, ascending
  Matrix c_local;                   // p x 2N_i
  Matrix h;                         // 2N_i x p
  Matrix t_mat;                     // I - hC
  std::vector<Matrix> f_mode;       // per mode
  std::vector<Matrix> k_mode;       // K = F h
  std::vector<Matrix> kbar_mode;
  double eta = 0.5;
  double eta_eff = 0.5;             // realized decay margin
  double mu = 1.0;                  // worst eigenvector condition number
  double tau_min = 0.0;             // dwell-time certificate ln(mu)/eta_eff
  std::vector<VectorC> mode_eigenvalues;
};

/// Builds the Eq.-(14) realization for one cluster: h = E (C E)^+, T = I-hC,
/// per-mode output injection by pole placement on (T A_q, C). Fails with
/// uio-infeasible(rank) when the monitor cannot see the cut directions and
/// uio-infeasible(detectability) when an unobservable cluster mode is not
/// already decaying.
inline UioRealization design_uio(const PartitionedModel& pm, int cluster_i,
                                 const std::vector<int>& measured_nodes, double eta = 0.5) {
  const ClusterModel& cm = pm.clusters.at(static_cast<size_t>(cluster_i));
  const int ni = cm.size();
  UioRealization u;
  u.cluster_index = cluster_i;
  u.measured_nodes = measured_nodes;
  std::sort(u.measured_nodes.begin(), u.measured_nodes.end());
  u.c_local = local_measurement_matrix(cm, u.measured_nodes);
  u.eta = eta;

  const Matrix& e = cm.e;
  if (e.cols() > 0) {
    const Matrix ce = u.c_local * e;
    if (rank_tol(ce) != rank_tol(e))
      throw Error(ErrorCode::uio_infeasible_rank,
                  "design_uio: rank(C E) < rank(E) for cluster " + std::to_string(cluster_i + 1));
    u.h = e * pinv(ce);
  } else {
    u.h = Matrix::Zero(2 * ni, u.c_local.rows());
  }
  u.t_mat = Matrix::Identity(2 * ni, 2 * ni) - u.h * u.c_local;
  if (e.cols() > 0 && ((u.h * u.c_local - Matrix::Identity(2 * ni, 2 * ni)) * e)
                              .cwiseAbs()
                              .maxCoeff() > 1e-9)
    throw Error(ErrorCode::uio_infeasible_rank, "design_uio: (hC - I)E = 0 unsatisfied");

  double worst_abscissa = -std::numeric_limits<double>::infinity();
  double mu = 1.0;
  for (int q = 1; q <= pm.num_modes; ++q) {
    const Matrix aq = cluster_mode_matrix(pm, cluster_i, q);
    const Matrix abar = u.t_mat * aq;
    // Unobservable part must already decay; placement cannot move it.
    detail::ObsSplit split = detail::observability_split(abar, u.c_local);
    if (split.unobs.cols() > 0) {
      const Matrix a22 = split.unobs.transpose() * abar * split.unobs;
      if (detail::spectral_abscissa(a22) > -1e-9)
        throw Error(ErrorCode::uio_infeasible_detectability,
                    "design_uio: undetectable pair in cluster " + std::to_string(cluster_i + 1) +
                        ", mode " + std::to_string(q));
    }
    Matrix kbar;
    try {
      kbar = detail::observer_gain(abar, u.c_local, eta);
    } catch (const Error&) {
      throw Error(ErrorCode::uio_infeasible_detectability,
                  "design_uio: pole placement failed in cluster " +
                      std::to_string(cluster_i + 1) + ", mode " + std::to_string(q));
    }
    const Matrix f = abar - kbar * u.c_local;
    const double sa = detail::spectral_abscissa(f);
    if (sa > -1e-9)
      throw Error(ErrorCode::uio_infeasible_detectability,
                  "design_uio: F not Hurwitz in cluster " + std::to_string(cluster_i + 1));
    worst_abscissa = std::max(worst_abscissa, sa);
    mu = std::max(mu, detail::eigvec_condition(f));
    Eigen::EigenSolver<Matrix> es(f, false);
    u.mode_eigenvalues.push_back(es.eigenvalues());
    u.kbar_mode.push_back(kbar);
    u.k_mode.push_back(f * u.h);
    u.f_mode.push_back(f);
  }
  u.eta_eff = std::min(eta, -worst_abscissa);
  u.mu = mu;
  u.tau_min = (mu <= 1.0) ? 0.0 : std::log(mu) / u.eta_eff;
  return u;
}

/// Local cluster view of a global trace: stacked positions and velocities of
/// the cluster's nodes, and the hidden local measurements (the attacker's
/// sensor channel u_s never touches these).
inline Matrix cluster_states(const ClusterModel& cm, const SimTrace& tr) {
  const int ni = cm.size();
  const int n = static_cast<int>(tr.states.rows()) / 2;
  Matrix xs(2 * ni, tr.size());
  for (int r = 0; r < ni; ++r) {
    xs.row(r) = tr.states.row(cm.nodes[static_cast<size_t>(r)]);
    xs.row(ni + r) = tr.states.row(n + cm.nodes[static_cast<size_t>(r)]);
  }
  return xs;
}

/// Runs one UIO over a recorded trace, switching F/K with the plant's mode.
/// Returns the local residual r = y - C x̂ per grid point.
inline Matrix uio_run(const UioRealization& u, const PartitionedModel& pm, const SimTrace& tr) {
  const ClusterModel& cm = pm.clusters.at(static_cast<size_t>(u.cluster_index));
  const Matrix xs = cluster_states(cm, tr);
  const Matrix ys = u.c_local * xs;
  const int t_count = tr.size();
  Matrix res(u.c_local.rows(), t_count);

  Vector z = -u.h * ys.col(0);  // x̂(0) = 0
  for (int k = 0; k < t_count; ++k) {
    const Vector y = ys.col(k);
    const Vector xhat = z + u.h * y;
    res.col(k) = y - u.c_local * xhat;
    if (k + 1 == t_count) break;
    const int q = tr.mode_at[static_cast<size_t>(k)];
    const Matrix& f = u.f_mode[static_cast<size_t>(q - 1)];
    const Matrix ky = u.k_mode[static_cast<size_t>(q - 1)] + u.kbar_mode[static_cast<size_t>(q - 1)];
    const double dt = tr.times[static_cast<size_t>(k + 1)] - tr.times[static_cast<size_t>(k)];
    const Vector y1 = ys.col(k + 1);
    auto yin = [&](double ts) -> Vector {
      const double s = (ts - tr.times[static_cast<size_t>(k)]) / dt;
      return (1.0 - s) * y + s * y1;
    };
    z = detail::rk4_step(f, ky, z, tr.times[static_cast<size_t>(k)], dt, yin);
  }
  return res;
}

}  // namespace consentry
