#include <gtest/gtest.h>

#include <numeric>

#include "csfm/errors.hpp"
#include "csfm/metrics.hpp"
#include "csfm/nnet/adam.hpp"
#include "csfm/nnet/dense_net.hpp"
#include "csfm/nnet/gelu.hpp"
#include "csfm/nnet/per_sample.hpp"
#include "csfm/nnet/rng.hpp"
#include "support.hpp"

namespace csfm {

using testing::central_difference;
using testing::normal_matrix;
using testing::relative_error;
using testing::uniform_row;

TEST(gelu, known_values) {
  EXPECT_EQ(gelu(0.0), 0.0);
  const long double ten = 10.0L * testing::normal_cdf_ld(10.0L);
  EXPECT_NEAR(gelu(10.0), static_cast<double>(ten), 1e-8);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-8);
  EXPECT_NEAR(gelu(-10.0), 0.0, 1e-8);
  EXPECT_NEAR(gelu(-10.0),
              static_cast<double>(-10.0L * testing::normal_cdf_ld(-10.0L)),
              1e-30);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
}

TEST(gelu, odd_part_is_identity) {
  // x Phi(x) - (-x) Phi(-x) = x (Phi(x) + Phi(-x)) = x.
  SplitRng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-8.0, 8.0);
    EXPECT_NEAR(gelu(x) - gelu(-x), x, 4.0 * std::numeric_limits<double>::epsilon() *
                                           std::max(1.0, std::abs(x)));
  }
}

TEST(gelu, derivative_matches_finite_difference) {
  for (double x = -6.0; x <= 6.0; x += 0.37) {
    const double h = 1e-5;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    EXPECT_LT(relative_error(gelu_derivative(x), fd), 1e-7) << x;
  }
}

TEST(rng, split_is_reproducible) {
  SplitRng root(123);
  SplitRng a = root.split(5);
  SplitRng b = root.split(5);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  EXPECT_EQ(rng_split(root, 9).next_u64(), root.split(9).next_u64());
  // Drawing from a child does not advance the parent.
  EXPECT_EQ(root.counter(), 0u);
}

TEST(rng, split_streams_look_independent) {
  SplitRng root(2024);
  SplitRng a = root.split(0);
  SplitRng b = root.split(1);
  constexpr int n = 1000;
  Eigen::MatrixXd xa(1, n);
  Eigen::MatrixXd xb(1, n);
  for (int i = 0; i < n; ++i) {
    xa(0, i) = a.normal();
    xb(0, i) = b.normal();
  }
  // Permutation test on the energy distance.
  const double observed = energy_distance(xa, xb);
  Eigen::MatrixXd pooled(1, 2 * n);
  pooled << xa, xb;
  std::vector<int> idx(2 * n);
  std::iota(idx.begin(), idx.end(), 0);
  SplitRng perm(77);
  constexpr int permutations = 200;
  int at_least = 0;
  for (int p = 0; p < permutations; ++p) {
    for (int i = 2 * n - 1; i > 0; --i) {
      std::swap(idx[i], idx[perm.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    Eigen::MatrixXd pa(1, n);
    Eigen::MatrixXd pb(1, n);
    for (int i = 0; i < n; ++i) {
      pa(0, i) = pooled(0, idx[i]);
      pb(0, i) = pooled(0, idx[n + i]);
    }
    if (energy_distance(pa, pb) >= observed) {
      ++at_least;
    }
  }
  const double p_value = (at_least + 1.0) / (permutations + 1.0);
  EXPECT_GT(p_value, 0.05);

  // Pairwise correlation of the two streams.
  const double ma = xa.mean();
  const double mb = xb.mean();
  const double cov = ((xa.array() - ma) * (xb.array() - mb)).mean();
  const double corr = cov / std::sqrt((xa.array() - ma).square().mean() *
                                      (xb.array() - mb).square().mean());
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(n));
}

TEST(rng, uniform_is_open_interval_and_normal_moments) {
  SplitRng rng(3);
  double sum = 0.0;
  double sq = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(dense_net, zero_network_outputs_zero) {
  DenseNet<double> net({3, 5, 2}, {true, true});
  SplitRng rng(1);
  const Eigen::MatrixXd x = normal_matrix(3, 4, rng);
  const auto out = forward(net, x, uniform_row(4, rng), uniform_row(4, rng));
  EXPECT_TRUE(out.output.isZero(0.0));
}

TEST(dense_net, identity_linear_layer) {
  DenseNet<double> net({2, 2});
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.num_params());
  net.layout().weight(p, 0) = Eigen::Matrix2d::Identity();
  net.set_params(p);
  Eigen::MatrixXd x(2, 1);
  x << 1.0, 2.0;
  EXPECT_EQ(forward(net, x).output, x);
}

TEST(dense_net, two_layer_scalar_hand_evaluation) {
  DenseNet<double> net({1, 1, 1});
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.num_params());
  net.layout().weight(p, 0).setConstant(1.0);
  net.layout().weight(p, 1).setConstant(1.0);
  net.set_params(p);
  const auto out = forward(net, Eigen::MatrixXd(Eigen::MatrixXd::Constant(1, 1, 1.0)));
  EXPECT_NEAR(out.output(0, 0),
              static_cast<double>(testing::normal_cdf_ld(1.0L)), 1e-15);
  EXPECT_NEAR(out.output(0, 0), 0.8413447460685429, 1e-15);
}

TEST(dense_net, rejects_mismatched_side_inputs) {
  DenseNet<double> net({2, 4, 2}, {true, false});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_THROW(forward(net, x), ConfigError);
  const Eigen::RowVectorXd side = Eigen::RowVectorXd::Zero(3);
  EXPECT_THROW(forward(net, x, side, side), ConfigError);
  EXPECT_THROW(forward(net, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 3)), side),
               ConfigError);
}

TEST(dense_net, zero_output_grad_gives_zero_gradients) {
  DenseNet<double> net({2, 6, 6, 3}, {true, true});
  SplitRng rng(5);
  he_initialize(net, rng);
  const auto fwd = forward(net, normal_matrix(2, 7, rng), uniform_row(7, rng),
                           uniform_row(7, rng));
  const auto g = backward(net, fwd.tape, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 7)));
  EXPECT_TRUE(g.params.isZero(0.0));
  EXPECT_TRUE(g.inputs.isZero(0.0));
  EXPECT_TRUE(g.time.isZero(0.0));
  EXPECT_TRUE(g.condition.isZero(0.0));
}

TEST(dense_net, linear_layer_squared_error_gradient) {
  DenseNet<double> net({3, 2});
  SplitRng rng(8);
  he_initialize(net, rng);
  const Eigen::MatrixXd x = normal_matrix(3, 1, rng);
  const Eigen::MatrixXd target = normal_matrix(2, 1, rng);
  const auto fwd = forward(net, x);
  const Eigen::MatrixXd residual = fwd.output - target;
  const auto g = backward(net, fwd.tape, residual);
  const Eigen::MatrixXd expected = residual * x.transpose();
  EXPECT_TRUE(net.layout().weight(g.params, 0).isApprox(expected, 1e-14));
  EXPECT_TRUE(net.layout().bias(g.params, 0).isApprox(residual.col(0), 1e-14));
}

TEST(dense_net, stale_tape_is_rejected) {
  DenseNet<double> net({2, 3, 2});
  SplitRng rng(1);
  he_initialize(net, rng);
  const auto fwd = forward(net, normal_matrix(2, 2, rng));
  net.mutable_params()(0) += 1.0;
  EXPECT_THROW(backward(net, fwd.tape, Eigen::MatrixXd(Eigen::MatrixXd::Ones(2, 2))),
               ContractError);
}

TEST(dense_net, gradients_match_finite_differences) {
  SplitRng rng(42);
  DenseNet<double> net({2, 7, 5, 3}, {true, true});
  he_initialize(net, rng);
  Eigen::MatrixXd x = normal_matrix(2, 6, rng);
  Eigen::RowVectorXd t = uniform_row(6, rng);
  Eigen::RowVectorXd c = normal_matrix(1, 6, rng);
  const Eigen::MatrixXd weights = normal_matrix(3, 6, rng);

  const auto fwd = forward(net, x, t, c);
  const auto g = backward(net, fwd.tape, weights);

  auto loss = [&] {
    return forward(net, x, t, c).output.cwiseProduct(weights).sum();
  };
  Eigen::VectorXd p = net.params();
  auto f = [&] {
    net.set_params(p);
    return loss();
  };
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const double fd = central_difference(f, p(i));
    EXPECT_LT(relative_error(g.params(i), fd), 1e-4) << "param " << i;
  }
  net.set_params(p);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    EXPECT_LT(relative_error(g.inputs(i), central_difference(loss, x(i))), 1e-4);
  }
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    EXPECT_LT(relative_error(g.time(i), central_difference(loss, t(i))), 1e-4);
    EXPECT_LT(relative_error(g.condition(i), central_difference(loss, c(i))),
              1e-4);
  }
}

TEST(adam, zero_gradient_leaves_parameters) {
  AdamState<double> st(3, AdamHyper{});
  Eigen::VectorXd p(3);
  p << 1.0, -2.0, 3.0;
  const Eigen::VectorXd before = p;
  adam_step(st, p, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(p, before);
}

TEST(adam, first_step_is_sign_like) {
  AdamHyper h;
  AdamState<double> st(3, h);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 0.5, -2.0, 1e-3;
  adam_step(st, p, g);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p(i), -h.learning_rate * g(i) / (std::abs(g(i)) + h.epsilon),
                1e-15);
  }
}

TEST(adam, two_steps_match_unrolled_recursion) {
  AdamHyper h;
  h.learning_rate = 0.01;
  AdamState<double> st(1, h);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.3);
  const double g1 = 0.7;
  const double g2 = -0.2;
  adam_step(st, p, Eigen::VectorXd::Constant(1, g1));
  adam_step(st, p, Eigen::VectorXd::Constant(1, g2));

  double x = 0.3;
  double m = 0.0;
  double v = 0.0;
  int step = 0;
  for (double g : {g1, g2}) {
    ++step;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, step));
    const double vh = v / (1.0 - std::pow(0.999, step));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p(0), x, 1e-12);
  EXPECT_EQ(st.step_count, 2u);
}

TEST(adam, non_finite_gradient_is_rejected_without_mutation) {
  AdamState<double> st(2, AdamHyper{});
  Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_step(st, p, g), NumericError);
  EXPECT_EQ(p, Eigen::VectorXd::Ones(2));
  EXPECT_EQ(st.step_count, 0u);
  EXPECT_TRUE(st.first_moment.isZero(0.0));
}

namespace {

// d/dy of 0.5 * ||y - target||^2 per column.
auto half_squared_error(const Eigen::MatrixXd &target) {
  return [target](const Eigen::MatrixXd &y) -> Eigen::MatrixXd {
    return y - target;
  };
}

} // namespace

TEST(per_sample, identical_samples_have_identical_gradients) {
  SplitRng rng(4);
  DenseNet<double> net({2, 4, 2}, {true, false});
  he_initialize(net, rng);
  const Eigen::MatrixXd one = normal_matrix(2, 1, rng);
  const Eigen::MatrixXd x = one.replicate(1, 5);
  const Eigen::MatrixXd target = normal_matrix(2, 1, rng).replicate(1, 5);
  const auto ps = per_sample_gradient_batch(
      net, half_squared_error(target), x,
      Eigen::RowVectorXd(Eigen::RowVectorXd::Constant(5, 0.3)));
  for (std::size_t i = 1; i < ps.size(); ++i) {
    for (std::size_t l = 0; l < ps[i].size(); ++l) {
      EXPECT_EQ(ps[i][l].weight, ps[0][l].weight);
      EXPECT_EQ(ps[i][l].bias, ps[0][l].bias);
    }
  }
}

TEST(per_sample, mean_equals_batch_gradient) {
  SplitRng rng(12);
  DenseNet<double> net({2, 6, 6, 2}, {true, true});
  he_initialize(net, rng);
  const Eigen::Index n = 9;
  const Eigen::MatrixXd x = normal_matrix(2, n, rng);
  const Eigen::RowVectorXd t = uniform_row(n, rng);
  const Eigen::RowVectorXd c = uniform_row(n, rng);
  const Eigen::MatrixXd target = normal_matrix(2, n, rng);
  const auto ps =
      per_sample_gradient_batch(net, half_squared_error(target), x, t, c);
  const auto fwd = forward(net, x, t, c);
  const auto batch = backward(net, fwd.tape, Eigen::MatrixXd((fwd.output - target) / n));
  for (Eigen::Index l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(net.layout().out_dim(l),
                                                 net.layout().in_dim(l));
    for (const auto &sample : ps) {
      mean += sample[l].weight / static_cast<double>(n);
    }
    EXPECT_LT((mean - net.layout().weight(batch.params, l)).cwiseAbs().maxCoeff(),
              1e-10);
  }
}

TEST(per_sample, matches_separate_single_sample_passes) {
  SplitRng rng(21);
  DenseNet<double> net({1, 2, 1});
  he_initialize(net, rng);
  Eigen::MatrixXd x(1, 2);
  x << 0.4, -1.3;
  Eigen::MatrixXd target(1, 2);
  target << 1.0, 0.5;
  const auto ps = per_sample_gradient_batch(net, half_squared_error(target), x);
  for (Eigen::Index i = 0; i < 2; ++i) {
    const auto fwd = forward(net, Eigen::MatrixXd(x.col(i)));
    const auto g = backward(net, fwd.tape, Eigen::MatrixXd(fwd.output - target.col(i)));
    for (Eigen::Index l = 0; l < net.num_layers(); ++l) {
      EXPECT_EQ(ps[i][l].weight, Eigen::MatrixXd(net.layout().weight(g.params, l)));
      EXPECT_EQ(ps[i][l].bias, Eigen::VectorXd(net.layout().bias(g.params, l)));
    }
  }
}

TEST(per_sample, empty_batch_and_bad_layer_are_rejected) {
  DenseNet<double> net({1, 2, 1});
  EXPECT_THROW(per_sample_gradient_batch(net, half_squared_error(Eigen::MatrixXd(1, 0)),
                                         Eigen::MatrixXd(1, 0)),
               DomainError);
  EXPECT_THROW(per_sample_gradient_batch(
                   net, half_squared_error(Eigen::MatrixXd::Zero(1, 1)),
                   Eigen::MatrixXd(Eigen::MatrixXd::Zero(1, 1)),
                   Eigen::RowVectorXd(), Eigen::RowVectorXd(), {5}),
               ConfigError);
}

} // namespace csfm
