#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "heterot/sphere.hpp"

namespace sphere = heterot::sphere;

TEST(SampleUniform, SingleDirectionIsUnit) {
  const auto d = sphere::sample_uniform(3, 1, 11);
  ASSERT_EQ(d.count(), 1);
  EXPECT_NEAR(d[0].norm(), 1.0, 1e-12);
}

TEST(SampleUniform, MeanNearOrigin) {
  const auto d = sphere::sample_uniform(2, 100000, 5);
  const Eigen::RowVectorXd mean = d.matrix().colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.02);
}

TEST(SampleUniform, Deterministic) {
  EXPECT_EQ(sphere::sample_uniform(4, 20, 9).matrix(), sphere::sample_uniform(4, 20, 9).matrix());
}

TEST(SampleUniform, RejectsDegenerateArguments) {
  EXPECT_THROW(sphere::sample_uniform(1, 5, 0), heterot::DimensionError);
  EXPECT_THROW(sphere::sample_uniform(3, 0, 0), heterot::DimensionError);
}

TEST(GammaRatio, ClosedForms) {
  EXPECT_NEAR(sphere::gamma_ratio(2), 2.0 / std::numbers::pi, 1e-14);
  EXPECT_NEAR(sphere::gamma_ratio(3), 0.5, 1e-14);
  // d = 4: Gamma(2) / (sqrt(pi) Gamma(5/2)) = 1 / (sqrt(pi) * 3 sqrt(pi) / 4) = 4 / (3 pi).
  EXPECT_NEAR(sphere::gamma_ratio(4), 4.0 / (3.0 * std::numbers::pi), 1e-14);
}

TEST(GammaRatio, AtLeastOneOverD) {
  for (int d = 2; d <= 100; ++d) EXPECT_GE(sphere::gamma_ratio(d), 1.0 / d) << d;
}

TEST(GammaRatio, MatchesMonteCarloAtFiveDims) {
  const auto a = sphere::sample_uniform(5, 100000, 21);
  const auto b = sphere::sample_uniform(5, 100000, 22);
  EXPECT_NEAR(sphere::mc_abs_inner_product(a.matrix(), b.matrix()), sphere::gamma_ratio(5), 0.01);
}

TEST(OrthonormalBasis, RowsAreOrthonormal) {
  for (int d : {2, 3, 7}) {
    const Eigen::MatrixXd m = sphere::orthonormal_basis_measure(d, 4).matrix();
    const Eigen::MatrixXd gram = m * m.transpose();
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MeanAbsCosine, IdenticalRowsGiveOne) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(4, 3);
  rows.col(1).setOnes();
  EXPECT_DOUBLE_EQ(sphere::mean_abs_cosine(rows), 1.0);
  EXPECT_TRUE(sphere::admissibility_check(rows, rows, 1.0, 1.0).admissible);
  EXPECT_FALSE(sphere::admissibility_check(rows, rows, 0.99, 1.0).admissible);
}

TEST(MeanAbsCosine, OrthonormalRowsGiveOneOverK) {
  const Eigen::MatrixXd rows = sphere::orthonormal_basis_measure(5, 1).matrix();
  EXPECT_NEAR(sphere::mean_abs_cosine(rows), 1.0 / 5.0, 1e-12);
}

TEST(Admissibility, RandomRowsAdmissibleAtOne) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = sphere::sample_uniform(3, 10, s);
    const auto b = sphere::sample_uniform(4, 10, s + 100);
    EXPECT_TRUE(sphere::admissibility_check(a.matrix(), b.matrix(), 1.0, 1.0).admissible);
  }
}

TEST(DirectionSet, RejectsNonUnitRows) {
  EXPECT_THROW(sphere::DirectionSet(Eigen::MatrixXd::Ones(2, 2)), heterot::DimensionError);
}
