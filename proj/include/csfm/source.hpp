#ifndef CSFM_SOURCE_HPP_
#define CSFM_SOURCE_HPP_

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "csfm/nnet/dense_net.hpp"
#include "csfm/nnet/rng.hpp"

namespace csfm {

enum class SourceKind { fixed_gaussian, deterministic, conditional_gaussian };
enum class RegularizerKind { none, standard_kl, varreg };

std::string to_string(SourceKind k);
std::string to_string(RegularizerKind k);
SourceKind parse_source_kind(const std::string &s);
RegularizerKind parse_regularizer_kind(const std::string &s);

/*
 * p(X0 | C). The generator maps the scalar condition to 2 * output_dim
 * values: the mean head followed by the log-variance head. Storing
 * log sigma^2 keeps the variance positive by construction.
 */
struct SourceModel {
  SourceKind kind = SourceKind::fixed_gaussian;
  std::optional<DenseNet<double>> generator;
  Eigen::Index output_dim = 2;

  bool learnable() const { return generator.has_value(); }
};

// Builds the generator for learnable kinds: hidden layers He-initialized,
// output layer zeroed so every condition starts at N(0, I).
SourceModel make_source_model(SourceKind kind, Eigen::Index output_dim,
                              const std::vector<Eigen::Index> &hidden,
                              SplitRng &rng);

// Columns are samples.
struct SourceDraw {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd sigma2;
  Eigen::MatrixXd eps;
};

struct SourceSample {
  SourceDraw draw;
  Eigen::MatrixXd log_sigma2;
  std::optional<ForwardTape<double>> tape;
};

SourceSample sample_source(const SourceModel &model,
                           const Eigen::RowVectorXd &c, SplitRng &rng);

// Mean and variance per condition with eps = 0 (x0 = mu).
SourceDraw source_moments(const SourceModel &model,
                          const Eigen::RowVectorXd &c);

// Upstream gradients of a scalar loss. Empty matrices count as zero.
struct SourceGrad {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd mu;
  Eigen::MatrixXd log_sigma2;
};

// Pathwise gradient with respect to the generator parameters, routing the
// x0 gradient through mu and log sigma^2 using the recorded eps.
Eigen::VectorXd source_backward(const SourceModel &model,
                                const SourceSample &sample,
                                const SourceGrad &grad);

struct LossAndGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;
};

struct KlLossAndGrad {
  double value = 0.0;
  Eigen::MatrixXd grad_mu;
  Eigen::MatrixXd grad_sigma2;
};

// Batch mean of KL(N(mu, sigma2) || N(mu, I)) = 1/2 sum(s - log s - 1).
// Gradient is with respect to sigma2.
LossAndGrad varreg_loss(const Eigen::MatrixXd &sigma2);

// Batch mean of KL(N(mu, sigma2) || N(0, I)).
KlLossAndGrad standard_kl_loss(const Eigen::MatrixXd &mu,
                               const Eigen::MatrixXd &sigma2);

// Batch mean of 1 - cos(x0, x1). Gradient is with respect to x0 only; a
// sample with either norm below 1e-12 contributes 1 and no gradient.
LossAndGrad cosine_align_loss(const Eigen::MatrixXd &x0,
                              const Eigen::MatrixXd &x1);

// Batch mean of the per-dimension mean of (x0 - x1)^2, gradient w.r.t. x0.
LossAndGrad mse_align_loss(const Eigen::MatrixXd &x0,
                           const Eigen::MatrixXd &x1);

} // namespace csfm

#endif // CSFM_SOURCE_HPP_
