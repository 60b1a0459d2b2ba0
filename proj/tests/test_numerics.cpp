#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "consentry/numerics.hpp"

using namespace consentry;
using Catch::Approx;

namespace {

Matrix random_matrix(std::mt19937& rng, int rows, int cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

Matrix path3_laplacian() {
  Matrix l(3, 3);
  l << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  return l;
}

}  // namespace

TEST_CASE("rank_tol on reference matrices") {
  CHECK(rank_tol(Matrix::Identity(3, 3)) == 3);
  CHECK(rank_tol(Matrix::Zero(3, 3)) == 0);
  // Laplacian of a connected N-node graph has rank N-1.
  CHECK(rank_tol(path3_laplacian()) == 2);
  CHECK_THROWS_AS(rank_tol(Matrix::Identity(2, 2), -1.0), Error);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(rank_tol(bad), Error);
}

TEST_CASE("nullspace_basis matches hand results") {
  CHECK(nullspace_basis(Matrix::Identity(2, 2)).dim() == 0);

  Matrix row(1, 2);
  row << 1, -1;
  SubspaceBasis ns = nullspace_basis(row);
  REQUIRE(ns.dim() == 1);
  CHECK(std::abs(std::abs(ns.basis(0, 0)) - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(ns.basis(0, 0) == Approx(ns.basis(1, 0)));

  SubspaceBasis lker = nullspace_basis(path3_laplacian());
  REQUIRE(lker.dim() == 1);
  CHECK((path3_laplacian() * lker.basis).cwiseAbs().maxCoeff() < 1e-12);
  Vector ones3 = Vector::Constant(3, 1.0 / std::sqrt(3.0));
  CHECK(std::abs(std::abs(lker.basis.col(0).dot(ones3)) - 1.0) < 1e-12);
  CHECK(lker.is_orthonormal());
}

TEST_CASE("image_basis matches hand results") {
  CHECK(image_basis(Matrix::Identity(4, 4)).dim() == 4);
  CHECK(image_basis(Matrix::Zero(3, 3)).dim() == 0);

  // One added edge {0,1} with weight a on 3 nodes: image is span{e0 - e1}.
  Matrix dl = Matrix::Zero(3, 3);
  dl(0, 0) = 2.0;
  dl(1, 1) = 2.0;
  dl(0, 1) = dl(1, 0) = -2.0;
  SubspaceBasis im = image_basis(dl);
  REQUIRE(im.dim() == 1);
  Vector dir(3);
  dir << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0.0;
  CHECK(std::abs(std::abs(im.basis.col(0).dot(dir)) - 1.0) < 1e-12);
}

TEST_CASE("rank-nullity holds on random matrices") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 24; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 6);
    const int cols = 1 + static_cast<int>(rng() % 6);
    Matrix m = random_matrix(rng, rows, cols);
    if (trial % 3 == 0 && cols > 1) m.col(cols - 1) = m.col(0);  // force rank drop
    CHECK(rank_tol(m) + nullspace_basis(m).dim() == cols);
    CHECK(image_basis(m).dim() == rank_tol(m));
  }
}

TEST_CASE("trivial_intersection detects killed directions") {
  SubspaceBasis e1;
  e1.ambient_dim = 2;
  e1.basis = Matrix::Zero(2, 1);
  e1.basis(0, 0) = 1.0;
  CHECK(trivial_intersection(e1, Matrix::Identity(2, 2)));

  Matrix kill(1, 2);
  kill << 0, 1;  // annihilates e1
  CHECK_FALSE(trivial_intersection(e1, kill));

  // Im(delta L) for edge {0,1} on 3 nodes against the monitor row e2^T:
  // e2^T (e0 - e1) = -1, so the intersection is trivial.
  Matrix dl = Matrix::Zero(3, 3);
  dl(0, 0) = dl(1, 1) = 1.0;
  dl(0, 1) = dl(1, 0) = -1.0;
  Matrix monitor(1, 3);
  monitor << 0, 1, 0;
  CHECK(trivial_intersection(image_basis(dl), monitor));

  CHECK_THROWS_AS(trivial_intersection(e1, Matrix::Identity(3, 3)), Error);
}

TEST_CASE("eig_sym reference spectra") {
  SymEig path = eig_sym(path3_laplacian());
  CHECK(path.eigenvalues(0) == Approx(0.0).margin(1e-12));
  CHECK(path.eigenvalues(1) == Approx(1.0).margin(1e-10));
  CHECK(path.eigenvalues(2) == Approx(3.0).margin(1e-10));

  // K3: eigenvalues {0, 3, 3}.
  Matrix k3 = 3.0 * Matrix::Identity(3, 3) - Matrix::Ones(3, 3);
  SymEig tri = eig_sym(k3);
  CHECK(tri.eigenvalues(0) == Approx(0.0).margin(1e-12));
  CHECK(tri.eigenvalues(1) == Approx(3.0).margin(1e-10));
  CHECK(tri.eigenvalues(2) == Approx(3.0).margin(1e-10));

  SymEig z = eig_sym(Matrix::Zero(2, 2));
  CHECK(z.eigenvalues.cwiseAbs().maxCoeff() == 0.0);

  Matrix asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS_AS(eig_sym(asym), Error);
}

TEST_CASE("eig_sym reconstruction property") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix m = random_matrix(rng, 5, 5);
    Matrix sym = 0.5 * (m + m.transpose());
    SymEig eg = eig_sym(sym);
    const double err =
        (eg.u * eg.eigenvalues.asDiagonal() * eg.u.transpose() - sym).norm();
    CHECK(err <= 1e-8 * (1.0 + sym.norm()));
    CHECK((eg.u.transpose() * eg.u - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("matrix_exp closed forms") {
  CHECK((matrix_exp(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -1.0;
  Matrix ed = matrix_exp(d, 1.0);
  CHECK(ed(0, 0) == Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(ed(1, 1) == Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(ed(0, 1)) < 1e-15);

  Matrix nil = Matrix::Zero(2, 2);
  nil(0, 1) = 1.0;
  Matrix en = matrix_exp(nil, 2.5);
  CHECK(en(0, 0) == Approx(1.0));
  CHECK(en(0, 1) == Approx(2.5));
  CHECK(en(1, 1) == Approx(1.0));
  CHECK(en(1, 0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("matrix_exp semigroup property") {
  std::mt19937 rng(13);
  Matrix a = random_matrix(rng, 4, 4);
  a /= std::max(1.0, a.norm());  // keep ||a||(t+s) <= 10
  const double t = 2.0, s = 3.0;
  Matrix lhs = matrix_exp(a, t + s);
  Matrix rhs = matrix_exp(a, t) * matrix_exp(a, s);
  CHECK((lhs - rhs).norm() <= 1e-8 * (1.0 + lhs.norm()));
}

TEST_CASE("pinv satisfies the Penrose identities") {
  Matrix inv2(2, 2);
  inv2 << 2, 1, 1, 1;
  CHECK((pinv(inv2) - inv2.inverse()).cwiseAbs().maxCoeff() < 1e-12);

  Matrix z = Matrix::Zero(2, 3);
  CHECK(pinv(z).rows() == 3);
  CHECK(pinv(z).cols() == 2);
  CHECK(pinv(z).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937 rng(17);
  Matrix tall = random_matrix(rng, 5, 2);
  Matrix mp = pinv(tall);
  CHECK((mp - (tall.transpose() * tall).inverse() * tall.transpose()).cwiseAbs().maxCoeff() <
        1e-10);
  for (int trial = 0; trial < 8; ++trial) {
    Matrix m = random_matrix(rng, 2 + static_cast<int>(rng() % 4), 2 + static_cast<int>(rng() % 4));
    Matrix p = pinv(m);
    CHECK((m * p * m - m).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((p * m * p - p).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(((m * p).transpose() - m * p).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(((p * m).transpose() - p * m).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("invariant_zeros finds the SISO transmission zero") {
  // Transfer function (1 - s)/s^2: single zero at +1.
  Matrix a(2, 2), b(2, 1), c(1, 2);
  a << 0, 1, 0, 0;
  b << 0, 1;
  c << 1, -1;
  auto zeros = invariant_zeros(a, b, c);
  REQUIRE(zeros.size() == 1);
  CHECK(zeros[0].lambda0.real() == Approx(1.0).margin(1e-8));
  CHECK(std::abs(zeros[0].lambda0.imag()) < 1e-9);
  CHECK(zeros[0].residual <= 1e-8);
  const double norm2 = zeros[0].x0.squaredNorm() + zeros[0].u0.squaredNorm();
  CHECK(norm2 == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("invariant_zeros with zero input column reduces to PBH candidates") {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = -3.0;
  Matrix b = Matrix::Zero(2, 1);
  Matrix c(1, 2);
  c << 1, 0;  // the -3 mode is unobservable
  auto zeros = invariant_zeros(a, b, c);
  REQUIRE(zeros.size() == 1);
  CHECK(zeros[0].lambda0.real() == Approx(-3.0).margin(1e-8));
  CHECK(zeros[0].u0.norm() < 1e-10);

  // PBH oracle over eig(A): rank deficiency of [lambda I - A; C].
  for (double lam : {2.0, -3.0}) {
    Matrix pbh(3, 2);
    pbh.topRows(2) = lam * Matrix::Identity(2, 2) - a;
    pbh.bottomRows(1) = c;
    const bool deficient = rank_tol(pbh) < 2;
    const bool reported = std::abs(lam - zeros[0].lambda0.real()) < 1e-6;
    CHECK(deficient == reported);
  }
}

TEST_CASE("invariant_zeros flags degenerate pencils") {
  // Rank-one C with full input access: the pencil loses column rank at
  // every lambda.
  Matrix a = Matrix::Zero(2, 2);
  Matrix b = Matrix::Identity(2, 2);
  Matrix c(2, 2);
  c << 1, 1, 1, 1;
  CHECK_THROWS_AS(invariant_zeros(a, b, c), Error);
  try {
    invariant_zeros(a, b, c);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported_degenerate);
  }
}

TEST_CASE("invariant_zeros square random systems satisfy the pencil equation") {
  std::mt19937 rng(23);
  int found = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 3);
    Matrix a = random_matrix(rng, n, n);
    Matrix b = random_matrix(rng, n, 2);
    Matrix c = random_matrix(rng, 2, n);
    Matrix d = Matrix::Zero(2, 2);
    auto zeros = invariant_zeros(a, b, c, d);
    for (const auto& z : zeros) {
      ++found;
      MatrixC pencil(n + 2, n + 2);
      pencil.topLeftCorner(n, n) = z.lambda0 * MatrixC::Identity(n, n) - a.cast<Complex>();
      pencil.topRightCorner(n, 2) = -b.cast<Complex>();
      pencil.bottomLeftCorner(2, n) = c.cast<Complex>();
      pencil.bottomRightCorner(2, 2) = d.cast<Complex>();
      VectorC dir(n + 2);
      dir << z.x0, z.u0;
      CHECK((pencil * dir).norm() <= 1e-8);
    }
  }
  CHECK(found > 0);  // random square MIMO systems do have zeros
}

TEST_CASE("invariant_zeros handles tall pencils without inventing zeros") {
  // 1 input, 2 independent outputs: generically no finite zeros.
  std::mt19937 rng(29);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 4;
    Matrix a = random_matrix(rng, n, n);
    Matrix b = random_matrix(rng, n, 1);
    Matrix c = random_matrix(rng, 2, n);
    auto zeros = invariant_zeros(a, b, c);
    CHECK(zeros.empty());
  }
}
