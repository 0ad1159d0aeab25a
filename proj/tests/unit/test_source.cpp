#include <gtest/gtest.h>

#include "csfm/errors.hpp"
#include "csfm/source.hpp"
#include "support.hpp"

namespace csfm {

using testing::central_difference;
using testing::normal_matrix;
using testing::relative_error;

namespace {

// Generator with every layer randomized, so all parameters carry gradient.
SourceModel random_source(SourceKind kind, std::uint64_t seed) {
  SplitRng rng(seed);
  SourceModel m = make_source_model(kind, 2, {8, 8}, rng);
  he_initialize(*m.generator, rng);
  auto &p = m.generator->mutable_params();
  const auto last = m.generator->num_layers() - 1;
  m.generator->layout().weight(p, last) *= 0.3;
  return m;
}

Eigen::MatrixXd one_by_one(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

} // namespace

TEST(source, fixed_gaussian_moments) {
  SplitRng init(1);
  const auto m = make_source_model(SourceKind::fixed_gaussian, 2, {}, init);
  EXPECT_FALSE(m.learnable());
  SplitRng rng(2);
  constexpr Eigen::Index n = 1000000;
  const auto s = sample_source(m, Eigen::RowVectorXd::Zero(n), rng);
  const Eigen::Vector2d mean = s.draw.x0.rowwise().mean();
  const Eigen::Vector2d var =
      (s.draw.x0.colwise() - mean).array().square().rowwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 4.0 / std::sqrt(double(n)));
  EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 4.0 * std::sqrt(2.0 / n));
}

TEST(source, learnable_source_starts_at_standard_normal) {
  SplitRng init(3);
  const auto m =
      make_source_model(SourceKind::conditional_gaussian, 2, {64, 64}, init);
  const Eigen::RowVectorXd c = Eigen::RowVectorXd::LinSpaced(9, -3.0, 3.0);
  const auto mom = source_moments(m, c);
  EXPECT_TRUE(mom.mu.isZero(0.0));
  EXPECT_TRUE(mom.sigma2.isOnes(0.0));
}

TEST(source, deterministic_ignores_rng) {
  const auto m = random_source(SourceKind::deterministic, 4);
  const Eigen::RowVectorXd c = Eigen::RowVectorXd::LinSpaced(5, -1.0, 1.0);
  SplitRng a(10);
  SplitRng b(99);
  b.normal();
  EXPECT_EQ(sample_source(m, c, a).draw.x0, sample_source(m, c, b).draw.x0);
  EXPECT_TRUE(sample_source(m, c, a).draw.sigma2.isZero(0.0));
}

TEST(source, reparameterization_is_bit_exact) {
  const auto m = random_source(SourceKind::conditional_gaussian, 5);
  SplitRng rng(6);
  const auto s = sample_source(m, Eigen::RowVectorXd::LinSpaced(17, -2, 2), rng);
  const Eigen::MatrixXd again =
      s.draw.mu + (s.draw.sigma2.array().sqrt() * s.draw.eps.array()).matrix();
  EXPECT_EQ(again, s.draw.x0);
}

TEST(source, non_finite_condition_is_rejected) {
  const auto m = random_source(SourceKind::conditional_gaussian, 5);
  SplitRng rng(6);
  Eigen::RowVectorXd c(2);
  c << 0.0, std::numeric_limits<double>::infinity();
  EXPECT_THROW(sample_source(m, c, rng), DomainError);
}

TEST(source, pathwise_gradient_matches_finite_differences) {
  for (auto kind : {SourceKind::conditional_gaussian, SourceKind::deterministic}) {
    SourceModel m = random_source(kind, 7);
    SplitRng data(8);
    const Eigen::RowVectorXd c = normal_matrix(1, 6, data);
    const Eigen::MatrixXd gx = normal_matrix(2, 6, data);
    const Eigen::MatrixXd gmu = normal_matrix(2, 6, data);
    const Eigen::MatrixXd glv = normal_matrix(2, 6, data);
    const SplitRng draw_rng(9);

    auto loss = [&] {
      SplitRng r = draw_rng;
      const auto s = sample_source(m, c, r);
      double v = s.draw.x0.cwiseProduct(gx).sum() +
                 s.draw.mu.cwiseProduct(gmu).sum();
      if (kind == SourceKind::conditional_gaussian) {
        v += s.log_sigma2.cwiseProduct(glv).sum();
      }
      return v;
    };
    SplitRng r = draw_rng;
    const auto s = sample_source(m, c, r);
    SourceGrad g{gx, gmu, kind == SourceKind::conditional_gaussian
                              ? glv
                              : Eigen::MatrixXd()};
    const Eigen::VectorXd analytic = source_backward(m, s, g);

    Eigen::VectorXd p = m.generator->params();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      auto f = [&] {
        m.generator->set_params(p);
        return loss();
      };
      EXPECT_LT(relative_error(analytic(i), central_difference(f, p(i))), 1e-4)
          << to_string(kind) << " param " << i;
    }
  }
}

TEST(losses, varreg_values) {
  EXPECT_EQ(varreg_loss(Eigen::MatrixXd::Ones(2, 5)).value, 0.0);
  EXPECT_NEAR(varreg_loss(one_by_one(2.0)).value,
              0.5 * (2.0 - std::log(2.0) - 1.0), 1e-15);
  EXPECT_NEAR(varreg_loss(one_by_one(2.0)).value, 0.153426409720027, 1e-14);
  EXPECT_NEAR(varreg_loss(one_by_one(std::exp(-2.0))).value, 0.567667641618306,
              1e-14);
  EXPECT_THROW(varreg_loss(one_by_one(0.0)), ContractError);
}

TEST(losses, standard_kl_values) {
  EXPECT_EQ(standard_kl_loss(Eigen::MatrixXd::Zero(2, 3),
                             Eigen::MatrixXd::Ones(2, 3))
                .value,
            0.0);
  EXPECT_NEAR(standard_kl_loss(one_by_one(1.0), one_by_one(1.0)).value, 0.5,
              1e-15);
  EXPECT_EQ(standard_kl_loss(one_by_one(0.0), one_by_one(2.0)).value,
            varreg_loss(one_by_one(2.0)).value);
}

TEST(losses, kl_minus_varreg_is_half_squared_mean) {
  SplitRng rng(12);
  const Eigen::MatrixXd mu = normal_matrix(2, 10, rng);
  const Eigen::MatrixXd s2 =
      normal_matrix(2, 10, rng).array().exp().matrix();
  const double gap = standard_kl_loss(mu, s2).value - varreg_loss(s2).value;
  EXPECT_NEAR(gap, 0.5 * mu.squaredNorm() / 10.0, 1e-10);
}

TEST(losses, closed_forms_match_monte_carlo) {
  SplitRng rng(13);
  constexpr int n = 1000000;
  for (double s2 : {0.25, 0.5, 2.0, 4.0}) {
    const double mu = 0.6;
    double acc_var = 0.0;
    double acc_kl = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mu + std::sqrt(s2) * rng.normal();
      const double log_q = -0.5 * std::log(s2) - 0.5 * (x - mu) * (x - mu) / s2;
      acc_var += log_q + 0.5 * (x - mu) * (x - mu);
      acc_kl += log_q + 0.5 * x * x;
    }
    const double vr = varreg_loss(one_by_one(s2)).value;
    const double kl = standard_kl_loss(one_by_one(mu), one_by_one(s2)).value;
    EXPECT_NEAR(acc_var / n, vr, 0.02 * vr) << s2;
    EXPECT_NEAR(acc_kl / n, kl, 0.02 * kl) << s2;
  }
}

TEST(losses, gradients_match_finite_differences) {
  SplitRng rng(14);
  Eigen::MatrixXd mu = normal_matrix(2, 4, rng);
  Eigen::MatrixXd s2 = normal_matrix(2, 4, rng).array().exp().matrix();
  Eigen::MatrixXd x1 = normal_matrix(2, 4, rng);
  const auto vr = varreg_loss(s2);
  const auto kl = standard_kl_loss(mu, s2);
  const auto cs = cosine_align_loss(mu, x1);
  const auto ms = mse_align_loss(mu, x1);
  for (Eigen::Index i = 0; i < s2.size(); ++i) {
    auto fv = [&] { return varreg_loss(s2).value; };
    auto fk = [&] { return standard_kl_loss(mu, s2).value; };
    auto fc = [&] { return cosine_align_loss(mu, x1).value; };
    auto fm = [&] { return mse_align_loss(mu, x1).value; };
    EXPECT_LT(relative_error(vr.grad(i), central_difference(fv, s2(i))), 1e-6);
    EXPECT_LT(relative_error(kl.grad_sigma2(i), central_difference(fk, s2(i))),
              1e-6);
    EXPECT_LT(relative_error(kl.grad_mu(i), central_difference(fk, mu(i))), 1e-6);
    EXPECT_LT(relative_error(cs.grad(i), central_difference(fc, mu(i))), 1e-6);
    EXPECT_LT(relative_error(ms.grad(i), central_difference(fm, mu(i))), 1e-6);
  }
}

TEST(losses, cosine_alignment_values) {
  Eigen::MatrixXd a(2, 1);
  a << 1.0, 2.0;
  Eigen::MatrixXd orth(2, 1);
  orth << -2.0, 1.0;
  EXPECT_NEAR(cosine_align_loss(a, a).value, 0.0, 1e-15);
  EXPECT_NEAR(cosine_align_loss(a, -a).value, 2.0, 1e-15);
  EXPECT_NEAR(cosine_align_loss(a, orth).value, 1.0, 1e-15);
  const auto zero = cosine_align_loss(Eigen::MatrixXd::Zero(2, 1), a);
  EXPECT_EQ(zero.value, 1.0);
  EXPECT_TRUE(zero.grad.isZero(0.0));
}

TEST(losses, mse_alignment_values) {
  Eigen::MatrixXd x1(2, 1);
  x1 << 3.0, 4.0;
  EXPECT_EQ(mse_align_loss(x1, x1).value, 0.0);
  EXPECT_DOUBLE_EQ(mse_align_loss(Eigen::MatrixXd::Zero(2, 1), x1).value, 12.5);
  SplitRng rng(15);
  const Eigen::MatrixXd a = normal_matrix(2, 6, rng);
  const Eigen::MatrixXd b = normal_matrix(2, 6, rng);
  EXPECT_EQ(mse_align_loss(a, b).value, mse_align_loss(b, a).value);
}

} // namespace csfm
