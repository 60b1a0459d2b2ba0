#pragma once

// Tolerance-governed dense linear-algebra kernels shared by every other
// module: rank, subspace bases, symmetric eigendecomposition, matrix
// exponential, Moore-Penrose pseudoinverse and Rosenbrock-pencil zeros.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <random>
#include <vector>

#include "consentry/errors.hpp"

namespace consentry {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixC = Eigen::MatrixXcd;
using VectorC = Eigen::VectorXcd;
using Complex = std::complex<double>;

namespace tol {
inline constexpr double orth = 1e-10;       // orthonormality slack for bases
inline constexpr double eig = 1e-8;         // eig_sym reconstruction
inline constexpr double zero = 1e-8;        // Eq.-residual bound for pencil zeros
inline constexpr double rank_rel = 1e-9;    // relative rank cutoff (of sigma_max)
inline constexpr double rank_floor = 1e-12; // absolute floor for rank cutoff
}  // namespace tol

inline void require_finite(const Matrix& m, const char* who) {
  if (!m.allFinite())
    throw Error(ErrorCode::invalid_input, std::string(who) + ": non-finite entries");
}

/// Orthonormal basis of a subspace of R^ambient_dim; columns of `basis`.
struct SubspaceBasis {
  int ambient_dim = 0;
  Matrix basis;  // ambient_dim x dim, orthonormal columns

  int dim() const { return static_cast<int>(basis.cols()); }

  bool is_orthonormal(double eps = tol::orth) const {
    if (basis.cols() == 0) return true;
    Matrix g = basis.transpose() * basis;
    return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= eps;
  }
};

// ---------------------------------------------------------------------------
// Rank and subspace bases (SVD-backed)

inline int rank_tol(const Matrix& m, double tol_rel = tol::rank_rel) {
  if (tol_rel <= 0) throw Error(ErrorCode::invalid_input, "rank_tol: tol must be > 0");
  require_finite(m, "rank_tol");
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  const double cut = std::max(tol_rel * s(0), tol::rank_floor);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

inline SubspaceBasis nullspace_basis(const Matrix& m, double tol_rel = tol::rank_rel) {
  if (tol_rel <= 0) throw Error(ErrorCode::invalid_input, "nullspace_basis: tol must be > 0");
  require_finite(m, "nullspace_basis");
  const int n = static_cast<int>(m.cols());
  SubspaceBasis out;
  out.ambient_dim = n;
  if (m.rows() == 0 || n == 0) {
    out.basis = Matrix::Identity(n, n);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double cut = std::max(tol_rel * smax, tol::rank_floor);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  out.basis = svd.matrixV().rightCols(n - r);
  return out;
}

inline SubspaceBasis image_basis(const Matrix& m, double tol_rel = tol::rank_rel) {
  if (tol_rel <= 0) throw Error(ErrorCode::invalid_input, "image_basis: tol must be > 0");
  require_finite(m, "image_basis");
  SubspaceBasis out;
  out.ambient_dim = static_cast<int>(m.rows());
  if (m.rows() == 0 || m.cols() == 0) {
    out.basis = Matrix::Zero(m.rows(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double cut = std::max(tol_rel * smax, tol::rank_floor);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  out.basis = svd.matrixU().leftCols(r);
  return out;
}

/// True iff span(u) meets ker(map) only at the origin, i.e. no nonzero
/// element of span(u) is annihilated by `map`.
inline bool trivial_intersection(const SubspaceBasis& u, const Matrix& map,
                                 double tol_rel = tol::rank_rel) {
  if (map.cols() != u.ambient_dim)
    throw Error(ErrorCode::dimension_mismatch, "trivial_intersection: ambient dims differ");
  if (u.dim() == 0) return true;
  return rank_tol(map * u.basis, tol_rel) == u.dim();
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition

struct SymEig {
  Vector eigenvalues;  // ascending
  Matrix u;            // orthonormal, l = u * diag(eigenvalues) * u^T
};

inline SymEig eig_sym(const Matrix& l) {
  require_finite(l, "eig_sym");
  if (l.rows() != l.cols())
    throw Error(ErrorCode::invalid_input, "eig_sym: matrix not square");
  const double scale = std::max(1.0, l.cwiseAbs().maxCoeff());
  if ((l - l.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw Error(ErrorCode::invalid_input, "eig_sym: matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (l + l.transpose()));
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::invalid_input, "eig_sym: solver failed");
  return SymEig{es.eigenvalues(), es.eigenvectors()};
}

// ---------------------------------------------------------------------------
// Matrix exponential (scaling-and-squaring Pade via Eigen)

inline Matrix matrix_exp(const Matrix& a, double t = 1.0) {
  require_finite(a, "matrix_exp");
  if (a.rows() != a.cols())
    throw Error(ErrorCode::invalid_input, "matrix_exp: matrix not square");
  Matrix at = a * t;
  return at.exp();
}

// ---------------------------------------------------------------------------
// Moore-Penrose pseudoinverse

inline Matrix pinv(const Matrix& m, double tol_rel = tol::rank_rel) {
  if (tol_rel <= 0) throw Error(ErrorCode::invalid_input, "pinv: tol must be > 0");
  require_finite(m, "pinv");
  if (m.rows() == 0 || m.cols() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double cut = std::max(tol_rel * smax, tol::rank_floor);
  Vector sinv = Vector::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) sinv(i) = 1.0 / s(i);
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

// ---------------------------------------------------------------------------
// Invariant zeros of the Rosenbrock pencil [lambda*I - A, -B; C, D]

/// One zero of the tuple (A,B,C,D): P(lambda0) * [x0; u0] = 0 with the
/// direction normalized to |x0|^2 + |u0|^2 = 1.
struct ZeroDirection {
  Complex lambda0;
  VectorC x0;
  VectorC u0;
  double residual = 0.0;
  int kernel_dim = 1;  // kernel dimension of the pencil at lambda0
};

namespace detail {

inline MatrixC pencil_at(const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d,
                         Complex lambda) {
  const Eigen::Index n = a.rows(), m = b.cols(), p = c.rows();
  MatrixC pm(n + p, n + m);
  pm.topLeftCorner(n, n) = lambda * MatrixC::Identity(n, n) - a.cast<Complex>();
  pm.topRightCorner(n, m) = -b.cast<Complex>();
  pm.bottomLeftCorner(p, n) = c.cast<Complex>();
  pm.bottomRightCorner(p, m) = d.cast<Complex>();
  return pm;
}

inline int rank_complex(const MatrixC& m, double tol_rel) {
  Eigen::JacobiSVD<MatrixC> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  const double cut = std::max(tol_rel * s(0), tol::rank_floor);
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) ++r;
  return r;
}

// Generalized Rayleigh polish: lambda <- (u*^T M v)/(u*^T N v) using the
// smallest singular pair of P(lambda).
inline Complex rayleigh_polish(const Matrix& a, const Matrix& b, const Matrix& c,
                               const Matrix& d, Complex lambda, int iters = 3) {
  const Eigen::Index n = a.rows();
  for (int it = 0; it < iters; ++it) {
    MatrixC pm = pencil_at(a, b, c, d, lambda);
    Eigen::JacobiSVD<MatrixC> svd(pm, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::Index k = svd.singularValues().size() - 1;
    VectorC v = svd.matrixV().col(k);
    VectorC u = svd.matrixU().col(k);
    // P(lambda) = lambda*N - M with N = [I 0; 0 0], M = [A B; -C -D]
    Complex denom = u.head(n).dot(v.head(n));  // u^H N v
    if (std::abs(denom) < 1e-14) break;
    Complex num = u.dot(pm * v);  // u^H P(lambda) v
    Complex next = lambda - num / denom;
    if (!std::isfinite(next.real()) || !std::isfinite(next.imag())) break;
    lambda = next;
  }
  return lambda;
}

}  // namespace detail

inline std::vector<ZeroDirection> invariant_zeros(const Matrix& a, const Matrix& b,
                                                  const Matrix& c, const Matrix& d_in = Matrix()) {
  const Eigen::Index n = a.rows();
  Matrix d = d_in;
  if (d.size() == 0) d = Matrix::Zero(c.rows(), b.cols());
  if (a.cols() != n || b.rows() != n || c.cols() != n || d.rows() != c.rows() ||
      d.cols() != b.cols())
    throw Error(ErrorCode::dimension_mismatch, "invariant_zeros: non-conformal dimensions");
  require_finite(a, "invariant_zeros");
  require_finite(b, "invariant_zeros");
  require_finite(c, "invariant_zeros");
  require_finite(d, "invariant_zeros");

  // Dependent input directions (ker [B; D]) solve Eq. (1) at every lambda with
  // x0 = 0 and carry no state motion; compress them out so zeros are computed
  // on an injective input map (the b = 0 column then reduces to PBH).
  Matrix bd(n + d.rows(), b.cols());
  bd << b, d;
  Matrix tcomp;  // m x m' with orthonormal columns spanning ker([B;D])^perp
  {
    SubspaceBasis k0 = nullspace_basis(bd);
    if (k0.dim() == 0) {
      tcomp = Matrix::Identity(b.cols(), b.cols());
    } else {
      // complement of the kernel inside R^m
      Matrix proj = Matrix::Identity(b.cols(), b.cols()) - k0.basis * k0.basis.transpose();
      tcomp = image_basis(proj).basis;
    }
  }
  const Matrix bc = b * tcomp;
  const Matrix dc = d * tcomp;
  const Eigen::Index m = bc.cols(), p = c.rows();

  const Eigen::Index rows = n + p, cols = n + m;
  if (rows < cols)
    throw Error(ErrorCode::invalid_input,
                "invariant_zeros: wide pencil (more inputs than outputs) unsupported");

  // Normal-rank probe at a few pseudo-random points; rank-deficient
  // everywhere means a degenerate pencil.
  {
    std::mt19937_64 rng(0x5eed5eedULL);
    auto u01 = [&rng]() { return (rng() >> 11) * (1.0 / 9007199254740992.0); };
    bool deficient_everywhere = true;
    for (int k = 0; k < 3; ++k) {
      Complex probe(2.0 * u01() - 1.0, 2.0 * u01() - 1.0);
      probe *= (1.5 + a.cwiseAbs().maxCoeff());
      if (detail::rank_complex(detail::pencil_at(a, bc, c, dc, probe), tol::rank_rel) ==
          static_cast<int>(cols)) {
        deficient_everywhere = false;
        break;
      }
    }
    if (deficient_everywhere)
      throw Error(ErrorCode::unsupported_degenerate,
                  "invariant_zeros: pencil is normal-rank deficient for all lambda");
  }

  // Candidate lambdas: finite generalized eigenvalues of (M, N) with
  // M = [A B; -C -D], N = diag(I, 0). A tall pencil is first compressed to
  // square with random row maps; compression can only add spurious
  // candidates, which the full-pencil residual filter removes.
  Matrix mm(rows, cols), nn = Matrix::Zero(rows, cols);
  mm.topLeftCorner(n, n) = a;
  mm.topRightCorner(n, m) = bc;
  mm.bottomLeftCorner(p, n) = -c;
  mm.bottomRightCorner(p, m) = -dc;
  nn.topLeftCorner(n, n) = Matrix::Identity(n, n);

  std::vector<Complex> candidates;
  std::mt19937_64 rng(0xc0ffee11ULL);
  auto gauss = [&rng]() {
    // Box-Muller on the raw generator keeps results platform-stable.
    double u1 = ((rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    double u2 = ((rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  const int draws = (rows == cols) ? 1 : 2;
  for (int t = 0; t < draws; ++t) {
    Matrix g;
    if (rows == cols) {
      g = Matrix::Identity(rows, rows);
    } else {
      g = Matrix(cols, rows);
      for (Eigen::Index i = 0; i < cols; ++i)
        for (Eigen::Index j = 0; j < rows; ++j) g(i, j) = gauss();
    }
    Eigen::GeneralizedEigenSolver<Matrix> ges;
    ges.compute(g * mm, g * nn, false);
    if (ges.info() != Eigen::Success) continue;
    for (Eigen::Index i = 0; i < ges.alphas().size(); ++i) {
      const Complex al = ges.alphas()(i);
      const double be = ges.betas()(i);
      if (std::abs(be) <= 1e-12 * (1.0 + std::abs(al))) continue;  // infinite eigenvalue
      Complex lam = al / be;
      if (!std::isfinite(lam.real()) || !std::isfinite(lam.imag())) continue;
      if (std::abs(lam) > 1e8) continue;
      candidates.push_back(lam);
    }
  }

  // Deduplicate candidates before the (costly) verification SVDs.
  std::vector<Complex> uniq;
  for (Complex lam : candidates) {
    bool seen = false;
    for (Complex v : uniq)
      if (std::abs(lam - v) <= 1e-6 * (1.0 + std::abs(v))) { seen = true; break; }
    if (!seen) uniq.push_back(lam);
  }

  std::vector<ZeroDirection> zeros;
  for (Complex lam0 : uniq) {
    Complex lam = detail::rayleigh_polish(a, bc, c, dc, lam0);
    if (!std::isfinite(lam.real()) || !std::isfinite(lam.imag())) lam = lam0;
    MatrixC pm = detail::pencil_at(a, bc, c, dc, lam);
    Eigen::JacobiSVD<MatrixC> svd(pm, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const Eigen::Index ns = s.size();
    if (ns == 0) continue;
    if (s(ns - 1) > tol::zero) continue;  // spurious candidate
    int kdim = 0;
    for (Eigen::Index i = 0; i < ns; ++i)
      if (s(i) <= tol::zero) ++kdim;
    // Pick the kernel direction with the largest input component; kernels of
    // dimension > 1 mix drivable directions with plain unobservable modes.
    VectorC dir;
    if (kdim == 1 || m == 0) {
      dir = svd.matrixV().col(ns - 1);
    } else {
      MatrixC kbasis = svd.matrixV().rightCols(kdim);
      Eigen::JacobiSVD<MatrixC> usvd(kbasis.bottomRows(m), Eigen::ComputeThinV);
      dir = kbasis * usvd.matrixV().col(0);
      dir.normalize();
    }
    // Fix the global phase (largest entry real-positive); a real lambda then
    // yields a real direction.
    {
      Eigen::Index imax = 0;
      double best = 0.0;
      for (Eigen::Index i = 0; i < dir.size(); ++i)
        if (std::abs(dir(i)) > best) { best = std::abs(dir(i)); imax = i; }
      if (best > 0) dir *= std::conj(dir(imax)) / best;
    }
    ZeroDirection z;
    z.lambda0 = lam;
    z.x0 = dir.head(n);
    z.u0 = tcomp.cast<Complex>() * dir.tail(m);
    z.residual = (detail::pencil_at(a, b, c, d, lam) *
                  (VectorC(n + b.cols()) << z.x0, z.u0).finished())
                     .norm();
    z.kernel_dim = kdim;
    if (z.residual > tol::zero) continue;
    // Skip duplicates that survived polishing from different candidates.
    bool dup = false;
    for (const auto& zz : zeros)
      if (std::abs(zz.lambda0 - z.lambda0) <= 1e-6 * (1.0 + std::abs(z.lambda0))) { dup = true; break; }
    if (!dup) zeros.push_back(std::move(z));
  }

  // Largest real part first, then smallest |Im|; negative imaginary twin last.
  std::sort(zeros.begin(), zeros.end(), [](const ZeroDirection& l, const ZeroDirection& r) {
    if (l.lambda0.real() != r.lambda0.real()) return l.lambda0.real() > r.lambda0.real();
    const double li = std::abs(l.lambda0.imag()), ri = std::abs(r.lambda0.imag());
    if (li != ri) return li < ri;
    return l.lambda0.imag() > r.lambda0.imag();
  });
  return zeros;
}

}  // namespace consentry
