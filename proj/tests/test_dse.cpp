#include <gtest/gtest.h>

#include <algorithm>

#include "heterot/dse.hpp"
#include "heterot/gradcheck.hpp"

namespace dse = heterot::dse;
namespace nn = heterot::nn;
namespace ad = heterot::ad;
using ad::Matrix;
using heterot::PointCloud;

namespace {

PointCloud gaussian_cloud(int n, int p, std::uint64_t seed, double scale = 1.0) {
  heterot::Rng rng(seed);
  Eigen::MatrixXd m(n, p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return PointCloud(m);
}

// Non-autodiff forward pass, row by row.
Matrix plain_forward(const nn::MlpNet& net, const Matrix& x) {
  Matrix h = x;
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    Matrix next = h * net.weights()[l].value();
    for (Eigen::Index i = 0; i < next.rows(); ++i) next.row(i) += net.biases()[l].value();
    if (l + 1 < net.weights().size()) next = next.cwiseMax(0.0);
    h = next;
  }
  for (Eigen::Index i = 0; i < h.rows(); ++i) h.row(i) /= h.row(i).norm();
  return h;
}

struct PlainLosses {
  double l1, l2, l3;
};

PlainLosses plain_losses(const PointCloud& x, const PointCloud& y, const dse::DseState& s, double r) {
  const Matrix theta = s.base_directions().matrix();
  const Matrix moved = plain_forward(s.f(), theta);
  const Matrix phi = plain_forward(*s.phi(), moved);
  const Matrix psi = plain_forward(*s.psi(), moved);
  const Eigen::Index K = theta.rows(), n = x.size();
  double w = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    std::vector<double> a(n), b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      a[i] = x.points().row(i).dot(phi.row(k));
      b[i] = y.points().row(i).dot(psi.row(k));
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (Eigen::Index i = 0; i < n; ++i) w += std::pow(std::abs(a[i] - b[i]), r) / n;
  }
  PlainLosses out{std::pow(w / K, 1.0 / r), 0.0, 0.0};
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < K; ++j) {
      out.l2 += std::abs(phi.row(k).dot(phi.row(j))) + std::abs(psi.row(k).dot(psi.row(j)));
      const double base = theta.row(k).dot(theta.row(j));
      out.l3 += std::pow(phi.row(k).dot(phi.row(j)) - base, 2) + std::pow(psi.row(k).dot(psi.row(j)) - base, 2);
    }
  }
  return out;
}

// Single linear layer with zero bias: row -> row * W.
nn::MlpNet linear_net(const Matrix& w) {
  return nn::MlpNet::from_parameters({w}, {Matrix::Zero(1, w.cols())}, nn::OutputHead::sphere_normalize);
}

}  // namespace

TEST(Losses, MatchStraightLineRecomputation) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    dse::DseConfig cfg;
    cfg.seed = s;
    const auto x = gaussian_cloud(30, 2, s + 1);
    const auto y = gaussian_cloud(30, 3, s + 2);
    dse::DseState state(2, 3, cfg);
    const auto l = dse::compute_losses(x, y, state, cfg);
    const auto want = plain_losses(x, y, state, cfg.r);
    EXPECT_NEAR(l.l1.item(), want.l1, 1e-10);
    EXPECT_NEAR(l.l2.item(), want.l2, 1e-10);
    EXPECT_NEAR(l.l3.item(), want.l3, 1e-10);
  }
}

TEST(Losses, SelfWithTiedEmbeddingsIsZero) {
  dse::DseConfig cfg;
  const auto x = gaussian_cloud(20, 3, 5);
  dse::DseState state(3, 3, cfg);
  EXPECT_EQ(dse::compute_losses(x, x, state, cfg).l1.item(), 0.0);
}

TEST(Losses, PointMassesSingleDirection) {
  dse::DseConfig cfg;
  cfg.slices = 1;
  for (double r : {1.0, 2.0, 3.0}) {
    cfg.r = r;
    Matrix a(1, 2), b(1, 3);
    a << 1.0, -2.0;
    b << 0.5, 4.0, 1.0;
    dse::DseState state(2, 3, cfg);
    const auto e = dse::embed(state);
    const double want = std::abs(e.phi.value().row(0).dot(a.row(0)) - e.psi.value().row(0).dot(b.row(0)));
    EXPECT_NEAR(dse::compute_losses(PointCloud(a), PointCloud(b), state, cfg).l1.item(), want, 1e-12);
  }
}

TEST(Losses, CosinePenaltyClosedForms) {
  dse::DseConfig cfg;
  cfg.latent_dim = 3;
  cfg.slices = 3;
  dse::DseState state(3, 3, cfg);
  const Matrix eye = Matrix::Identity(3, 3);
  state.set_nets(linear_net(eye), linear_net(eye), linear_net(eye));
  state.set_base_directions(heterot::sphere::DirectionSet(eye));
  const auto x = gaussian_cloud(5, 3, 1);
  auto l = dse::compute_losses(x, x, state, cfg);
  EXPECT_NEAR(l.l2.item(), 2.0 * 3, 1e-12);  // orthogonal: diagonal only
  EXPECT_NEAR(l.l3.item(), 0.0, 1e-12);      // isometric embeddings, identity f

  Matrix collapse = Matrix::Zero(1, 3);
  collapse(0, 1) = 1.0;
  state.set_nets(nn::MlpNet::from_parameters({Matrix::Zero(3, 3)}, {collapse}, nn::OutputHead::sphere_normalize),
                 linear_net(eye), linear_net(eye));
  l = dse::compute_losses(x, x, state, cfg);
  EXPECT_NEAR(l.l2.item(), 2.0 * 9, 1e-12);

  cfg.slices = 1;
  dse::DseState one(3, 4, cfg);
  l = dse::compute_losses(x, gaussian_cloud(5, 4, 2), one, cfg);
  EXPECT_NEAR(l.l2.item(), 2.0, 1e-12);
  EXPECT_NEAR(l.l3.item(), 0.0, 1e-12);
}

TEST(Losses, SignedVariantDiffersOnlyInSign) {
  dse::DseConfig cfg;
  cfg.signed_cosine_penalty = true;
  dse::DseState state(2, 3, cfg);
  const auto e = dse::embed(state);
  const Matrix gp = e.phi.value() * e.phi.value().transpose();
  const Matrix gq = e.psi.value() * e.psi.value().transpose();
  EXPECT_NEAR(dse::loss_l2(e, true).item(), gp.sum() + gq.sum(), 1e-12);
}

TEST(Losses, InputChecks) {
  dse::DseConfig cfg;
  dse::DseState state(2, 3, cfg);
  EXPECT_THROW(dse::compute_losses(gaussian_cloud(5, 3, 0), gaussian_cloud(5, 3, 0), state, cfg),
               heterot::DimensionError);
  EXPECT_THROW(dse::compute_losses(gaussian_cloud(5, 2, 0), gaussian_cloud(6, 3, 0), state, cfg),
               heterot::MethodError);
  cfg.slices = 0;
  EXPECT_THROW(dse::DseState(2, 3, cfg), heterot::MethodError);
}

TEST(Fit, TraceLengthsAndDeterminism) {
  dse::DseConfig cfg;
  cfg.iterations = 7;
  cfg.inner_iterations = 2;
  cfg.seed = 3;
  const auto x = gaussian_cloud(40, 2, 1);
  const auto y = gaussian_cloud(40, 3, 2);
  const auto a = dse::dse_fit(x, y, cfg);
  const auto b = dse::dse_fit(x, y, cfg);
  EXPECT_EQ(a.trace_l1.size(), 7u * 2 * 2);
  EXPECT_EQ(a.trace_l3.size(), 7u * 2 * 2);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.trace_l1, b.trace_l1);
  EXPECT_GE(a.value, 0.0);
}

TEST(Fit, SelfDistanceSmall) {
  const auto x = gaussian_cloud(200, 2, 4);
  int ok = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    dse::DseConfig cfg;
    cfg.seed = s;
    ok += dse::dse_fit(x, x, cfg).value <= 0.05 * heterot::moment(x, 2.0);
  }
  EXPECT_GE(ok, 4);
}

TEST(Fit, FinitenessBound) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    dse::DseConfig cfg;
    cfg.seed = s;
    cfg.iterations = 20;
    const auto x = gaussian_cloud(60, 2, s, 2.0);
    const auto y = gaussian_cloud(60, 4, s + 9).translated(Eigen::RowVector4d(3, 0, 0, 1));
    const double bound = std::sqrt(2.0) * (heterot::moment(x, 2.0) + heterot::moment(y, 2.0));
    EXPECT_LE(dse::dse_fit(x, y, cfg).value, bound + 1e-6);
  }
}

TEST(Fit, SliceStepIncreasesL1OnSmoothProblem) {
  dse::DseConfig cfg;
  cfg.iterations = 20;  // ascent phase; Adam overshoots slightly once L1 plateaus
  cfg.lambda_c = 0.0;
  cfg.lambda_a = 0.0;
  cfg.lr_f = 1e-3;
  const auto x = gaussian_cloud(100, 2, 1);
  Eigen::MatrixXd m = gaussian_cloud(100, 2, 2).points();
  m.col(0) *= 4.0;
  const PointCloud y(m);
  auto state = dse::DseState::identity_embeddings(2, cfg);
  const auto res = dse::dse_fit(x, y, cfg, state);
  int up = 0;
  for (std::size_t t = 1; t < res.trace_l1.size(); ++t) up += res.trace_l1[t] >= res.trace_l1[t - 1];
  EXPECT_GE(up, 0.8 * (res.trace_l1.size() - 1));
}

TEST(Fit, NonFiniteInputRejected) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 2);
  m(0, 0) = INFINITY;
  EXPECT_THROW(PointCloud{m}, heterot::NumericalError);
}

TEST(TrainingLoss, TargetEqualsBatchGivesZero) {
  dse::DseConfig cfg;
  dse::DseState state(3, 3, cfg);
  const auto y = gaussian_cloud(50, 3, 1);
  EXPECT_NEAR(dse::dse_loss_for_training(ad::constant(y.points()), ad::constant(y.points()), state, cfg).item(), 0.0,
              1e-14);
}

TEST(TrainingLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    dse::DseConfig cfg;
    cfg.seed = s;
    dse::DseState state(2, 3, cfg);
    const Matrix xb = gaussian_cloud(15, 2, s + 1).points();
    const Matrix yb = gaussian_cloud(15, 3, s + 2).points();
    const auto e = dse::embed(state);
    if (heterot::gradcheck::min_sorted_gap(xb * e.phi.value().transpose()) < 1e-3) continue;
    const heterot::gradcheck::Builder build = [&](const std::vector<Matrix>& p, std::vector<ad::Tensor>& leaves) {
      return dse::dse_loss_for_training(heterot::gradcheck::leaf(p[0], leaves), ad::constant(yb), state, cfg);
    };
    EXPECT_LE(heterot::gradcheck::check(build, {xb}).relative_error, 1e-3) << "seed " << s;
  }
}

// A 2D-noise generator pushed towards a 3D Gaussian blob.
TEST(TrainingLoss, ToyGeneratorReducesLoss) {
  dse::DseConfig cfg;
  cfg.seed = 1;
  cfg.lambda_a = 5.0;
  const int batch = 100;
  nn::MlpNet gen({2, 32, 3}, nn::OutputHead::identity, 2);
  nn::Adam opt(gen.parameters(), 1e-2);
  dse::DseState state(3, 3, cfg);
  heterot::Rng rng(3);
  const Eigen::RowVector3d center(3.0, -2.0, 1.0);
  std::vector<double> trace;
  for (int it = 0; it < 300; ++it) {
    Matrix z(batch, 2), y(batch, 3);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = 0.5 * rng.normal();
    y.rowwise() += center;
    const ad::Tensor out = gen.forward(ad::constant(z));
    dse::train_embeddings(out.value(), y, state, cfg);
    ad::Tensor loss = dse::dse_loss_for_training(out, ad::constant(y), state, cfg);
    trace.push_back(loss.item());
    loss.backward();
    opt.step();
    state.f().zero_grad();
    state.phi()->zero_grad();
    state.psi()->zero_grad();
  }
  double tail = 0.0;
  for (std::size_t i = trace.size() - 20; i < trace.size(); ++i) tail += trace[i] / 20.0;
  EXPECT_LE(tail, 0.5 * trace[10]);
}
