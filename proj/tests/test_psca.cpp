#include <gtest/gtest.h>

#include "phaselock/gradcheck.hpp"
#include "phaselock/psca.hpp"
#include "support.hpp"

using namespace phaselock;
using testing_support::max_abs;

namespace {

using cd = std::complex<double>;

ComplexMatrix random_v(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
  return random_gaussian_matrix(rng, n, p).cast<cd>() + cd(0.0, 1.0) * random_gaussian_matrix(rng, n, p).cast<cd>();
}

/// Rows 0..2 carry a in column 0, rows 3..5 carry b in column 1; then the
/// columns are rotated by a random orthogonal R so the solver has to undo it.
ComplexMatrix two_block_v(std::mt19937_64& rng, Eigen::MatrixXd* rotation = nullptr) {
  ComplexMatrix v = ComplexMatrix::Zero(6, 2);
  const cd a = std::polar(0.8, 0.3);
  const cd b = std::polar(1.1, -1.2);
  for (Eigen::Index i = 0; i < 3; ++i) v(i, 0) = a;
  for (Eigen::Index i = 3; i < 6; ++i) v(i, 1) = b;
  const Eigen::MatrixXd r = random_orthogonal(rng, 2);
  if (rotation) *rotation = r;
  return v * r.cast<cd>();
}

double two_path_objective(const PSCAProblem& p, const Eigen::MatrixXd& W) {
  const ComplexMatrix u = p.V * W.cast<cd>();
  double j = 0.0;
  for (Eigen::Index c = 0; c < u.cols(); ++c) j += std::abs(u.col(c).sum());
  return j;
}

}  // namespace

TEST(PscaObjective, IdentityIsSumOfColumnSums) {
  std::mt19937_64 rng(1);
  PSCAProblem p{random_v(rng, 5, 3)};
  const Eigen::VectorXcd vbar = column_sums(p.V);
  EXPECT_NEAR(psca_objective(p, Eigen::MatrixXd::Identity(3, 3)), vbar.cwiseAbs().sum(), 1e-12);
}

TEST(PscaObjective, SingleComponent) {
  std::mt19937_64 rng(2);
  PSCAProblem p{random_v(rng, 4, 1)};
  const double vbar = std::abs(column_sums(p.V)(0));
  for (double w : {-2.0, 0.5, 3.0})
    EXPECT_NEAR(psca_objective(p, Eigen::MatrixXd::Constant(1, 1, w)), vbar * std::abs(w), 1e-12);
}

TEST(PscaObjective, ColumnSumShortcutMatchesFullProduct) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PSCAProblem p{random_v(rng, 6, 3)};
    const Eigen::MatrixXd W = random_gaussian_matrix(rng, 3, 3);
    EXPECT_NEAR(psca_objective(p, W), two_path_objective(p, W), 1e-12);
  }
}

TEST(PscaObjective, ColumnSignInvariance) {
  std::mt19937_64 rng(4);
  PSCAProblem p{random_v(rng, 6, 3)};
  const Eigen::MatrixXd W = random_orthogonal(rng, 3);
  Eigen::MatrixXd flipped = W;
  flipped.col(1) *= -1.0;
  EXPECT_NEAR(psca_objective(p, flipped), psca_objective(p, W), 1e-12);
  EXPECT_EQ(assign_rows(p.V * flipped.cast<cd>()), assign_rows(p.V * W.cast<cd>()));
}

TEST(PscaGradient, SingleComponent) {
  std::mt19937_64 rng(5);
  PSCAProblem p{random_v(rng, 4, 1)};
  const double vbar = std::abs(column_sums(p.V)(0));
  for (double w : {-1.5, 0.8}) {
    const Eigen::MatrixXd g = psca_gradient(p, Eigen::MatrixXd::Constant(1, 1, w));
    EXPECT_NEAR(g(0, 0), (w > 0 ? 1.0 : -1.0) * vbar, 1e-12);
  }
}

TEST(PscaGradient, RealV) {
  std::mt19937_64 rng(6);
  PSCAProblem p{random_gaussian_matrix(rng, 5, 2).cast<cd>()};
  const Eigen::MatrixXd W = random_gaussian_matrix(rng, 2, 2);
  const Eigen::VectorXcd vbar = column_sums(p.V);
  const Eigen::VectorXcd ubar = W.transpose().cast<cd>() * vbar;
  const Eigen::MatrixXd g = psca_gradient(p, W);
  for (Eigen::Index k = 0; k < 2; ++k)
    for (Eigen::Index j = 0; j < 2; ++j)
      EXPECT_NEAR(g(k, j), vbar(k).real() * (ubar(j).real() > 0 ? 1.0 : -1.0), 1e-12);
}

TEST(PscaGradient, KinkNamesColumn) {
  ComplexMatrix v(3, 2);
  v << 1.0, 2.0, -1.0, 1.0, 0.0, 1.0;  // column 0 sums to zero
  PSCAProblem p{v};
  try {
    psca_gradient(p, Eigen::MatrixXd::Identity(2, 2));
    FAIL() << "expected kink error";
  } catch (const KinkError& e) {
    EXPECT_EQ(e.column(), 0u);
    EXPECT_NE(std::string(e.what()).find("column 0"), std::string::npos);
  }
}

TEST(PscaGradient, MatchesFiniteDifferences) {
  const auto s = gradcheck::run(gradcheck::Algorithm::PSCA, 50, 2);
  EXPECT_GT(s.evaluated(), 45);
  EXPECT_LT(s.max_relative_error(), 1e-6);
}

TEST(PscaGradient, NearKinkTrialIsSkipped) {
  const auto r = gradcheck::psca_trial(23168, 0);
  EXPECT_TRUE(r.skipped);
  EXPECT_NE(r.skip_reason.find("near kink"), std::string::npos);
}

TEST(PscaProblem, Validation) {
  std::mt19937_64 rng(7);
  EXPECT_THROW((PSCAProblem{random_v(rng, 2, 3)}.validate()), InvalidArgument);
  ComplexMatrix v = random_v(rng, 4, 2);
  v.col(1).setZero();
  EXPECT_THROW((PSCAProblem{v}.validate()), InvalidArgument);
}

TEST(PscaSolve, RecoversTwoBlockPartition) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 100);
    PSCAProblem p{two_block_v(rng)};
    OptimizerConfig cfg;
    cfg.seed = seed;
    const PSCASolution sol = psca_solve(p, cfg, 4);
    const auto& a = sol.assignment;
    EXPECT_TRUE(a[0] == a[1] && a[1] == a[2]);
    EXPECT_TRUE(a[3] == a[4] && a[4] == a[5]);
    EXPECT_NE(a[0], a[3]);
    EXPECT_LT(max_abs(sol.W.transpose() * sol.W - Eigen::MatrixXd::Identity(2, 2)), 1e-10);
    EXPECT_NEAR(sol.J, two_path_objective(p, sol.W), 1e-12);
  }
}

TEST(PscaSolve, SingleComponentIsSignOnly) {
  std::mt19937_64 rng(8);
  PSCAProblem p{random_v(rng, 5, 1)};
  const PSCASolution sol = psca_solve(p, OptimizerConfig{}, 2);
  EXPECT_NEAR(std::abs(sol.W(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(sol.J, std::abs(column_sums(p.V)(0)), 1e-12);
}

TEST(PscaSolve, NeverWorseThanAnyStart) {
  std::mt19937_64 data(9);
  PSCAProblem p{random_v(data, 6, 3)};
  OptimizerConfig cfg;
  cfg.seed = 13;
  const PSCASolution sol = psca_solve(p, cfg, 4);
  std::mt19937_64 rng(13);
  for (int s = 0; s < 4; ++s) EXPECT_GE(sol.J + 1e-12, psca_objective(p, random_orthogonal(rng, 3)));
  EXPECT_TRUE(sol.skipped_starts.empty());
}

TEST(PscaSolve, AllStartsAtKinkThrow) {
  ComplexMatrix v(4, 2);
  v << 1.0, 2.0, -1.0, -2.0, 3.0, 1.0, -3.0, -1.0;  // every column sums to zero
  EXPECT_THROW(psca_solve(PSCAProblem{v}, OptimizerConfig{}, 2), KinkError);
}

TEST(AssignRows, TiesGoToLowestColumn) {
  ComplexMatrix u(2, 3);
  u << 1.0, cd(0.0, 1.0), 0.5, 0.2, 0.9, cd(0.0, -0.9);
  EXPECT_EQ(assign_rows(u), (std::vector<int>{0, 1}));
}

TEST(Features, AlignedBasisSeparatesBlockPlvMatrix) {
  // ideal 2-cluster PLV matrix with equal cluster sizes: degenerate eigenvalues
  PLVMatrix m = PLVMatrix::Zero(4, 4);
  const double lag[] = {0.0, 2.5, 0.0, -1.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i / 2 == j / 2) m(i, j) = std::polar(1.0, lag[i] - lag[j]);
  const ComplexMatrix v = plv_features(m, 2);
  const auto a = assign_rows(v);
  EXPECT_EQ(a[0], a[1]);
  EXPECT_EQ(a[2], a[3]);
  EXPECT_NE(a[0], a[2]);
  // same eigenspace up to the per-row phase alignment
  const ComplexMatrix e = leading_eigenvectors(m, 2);
  EXPECT_LT(((v * v.adjoint()).cwiseAbs() - (e * e.adjoint()).cwiseAbs()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((v.adjoint() * v - ComplexMatrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}
