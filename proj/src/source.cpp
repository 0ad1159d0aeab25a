#include "csfm/source.hpp"

#include <cmath>

#include "csfm/errors.hpp"

namespace csfm {

std::string to_string(SourceKind k) {
  switch (k) {
  case SourceKind::fixed_gaussian:
    return "fixed_gaussian";
  case SourceKind::deterministic:
    return "deterministic";
  case SourceKind::conditional_gaussian:
    return "conditional_gaussian";
  }
  return "unknown";
}

std::string to_string(RegularizerKind k) {
  switch (k) {
  case RegularizerKind::none:
    return "none";
  case RegularizerKind::standard_kl:
    return "standard_kl";
  case RegularizerKind::varreg:
    return "varreg";
  }
  return "unknown";
}

SourceKind parse_source_kind(const std::string &s) {
  if (s == "fixed_gaussian") {
    return SourceKind::fixed_gaussian;
  }
  if (s == "deterministic") {
    return SourceKind::deterministic;
  }
  if (s == "conditional_gaussian") {
    return SourceKind::conditional_gaussian;
  }
  throw ConfigError("unknown source kind '" + s + "'");
}

RegularizerKind parse_regularizer_kind(const std::string &s) {
  if (s == "none") {
    return RegularizerKind::none;
  }
  if (s == "standard_kl") {
    return RegularizerKind::standard_kl;
  }
  if (s == "varreg") {
    return RegularizerKind::varreg;
  }
  throw ConfigError("unknown regularizer '" + s + "'");
}

SourceModel make_source_model(SourceKind kind, Eigen::Index output_dim,
                              const std::vector<Eigen::Index> &hidden,
                              SplitRng &rng) {
  SourceModel model;
  model.kind = kind;
  model.output_dim = output_dim;
  if (kind == SourceKind::fixed_gaussian) {
    return model;
  }
  std::vector<Eigen::Index> dims{1};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2 * output_dim);
  DenseNet<double> net(dims);
  he_initialize(net, rng);
  auto &p = net.mutable_params();
  const auto last = net.num_layers() - 1;
  net.layout().weight(p, last).setZero();
  net.layout().bias(p, last).setZero();
  model.generator = std::move(net);
  return model;
}

namespace {

void check_finite(const Eigen::MatrixXd &m, const char *what) {
  if (!m.allFinite()) {
    throw NumericError(std::string("source generator produced a non-finite ") +
                       what);
  }
}

} // namespace

SourceSample sample_source(const SourceModel &model,
                           const Eigen::RowVectorXd &c, SplitRng &rng) {
  if (!c.allFinite()) {
    throw DomainError("source conditions must be finite");
  }
  const Eigen::Index d = model.output_dim;
  const Eigen::Index n = c.size();
  SourceSample out;
  auto &draw = out.draw;
  switch (model.kind) {
  case SourceKind::fixed_gaussian: {
    draw.eps.resize(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        draw.eps(k, i) = rng.normal();
      }
    }
    draw.mu = Eigen::MatrixXd::Zero(d, n);
    draw.sigma2 = Eigen::MatrixXd::Ones(d, n);
    draw.x0 = draw.eps;
    out.log_sigma2 = Eigen::MatrixXd::Zero(d, n);
    return out;
  }
  case SourceKind::deterministic: {
    auto fwd = forward(*model.generator, Eigen::MatrixXd(c));
    draw.mu = fwd.output.topRows(d);
    check_finite(draw.mu, "mean");
    draw.sigma2 = Eigen::MatrixXd::Zero(d, n);
    draw.eps = Eigen::MatrixXd::Zero(d, n);
    draw.x0 = draw.mu;
    out.log_sigma2.resize(0, 0);
    out.tape = std::move(fwd.tape);
    return out;
  }
  case SourceKind::conditional_gaussian: {
    auto fwd = forward(*model.generator, Eigen::MatrixXd(c));
    draw.mu = fwd.output.topRows(d);
    out.log_sigma2 = fwd.output.bottomRows(d);
    check_finite(fwd.output, "mean or log-variance");
    draw.sigma2 = out.log_sigma2.array().exp().matrix();
    draw.eps.resize(d, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        draw.eps(k, i) = rng.normal();
      }
    }
    draw.x0 = draw.mu + (draw.sigma2.array().sqrt() * draw.eps.array()).matrix();
    check_finite(draw.x0, "sample");
    out.tape = std::move(fwd.tape);
    return out;
  }
  }
  throw ConfigError("unknown source kind");
}

SourceDraw source_moments(const SourceModel &model,
                          const Eigen::RowVectorXd &c) {
  const Eigen::Index d = model.output_dim;
  const Eigen::Index n = c.size();
  SourceDraw draw;
  draw.eps = Eigen::MatrixXd::Zero(d, n);
  switch (model.kind) {
  case SourceKind::fixed_gaussian:
    draw.mu = Eigen::MatrixXd::Zero(d, n);
    draw.sigma2 = Eigen::MatrixXd::Ones(d, n);
    break;
  case SourceKind::deterministic: {
    const auto fwd = forward(*model.generator, Eigen::MatrixXd(c));
    draw.mu = fwd.output.topRows(d);
    draw.sigma2 = Eigen::MatrixXd::Zero(d, n);
    break;
  }
  case SourceKind::conditional_gaussian: {
    const auto fwd = forward(*model.generator, Eigen::MatrixXd(c));
    draw.mu = fwd.output.topRows(d);
    draw.sigma2 = fwd.output.bottomRows(d).array().exp().matrix();
    break;
  }
  }
  draw.x0 = draw.mu;
  return draw;
}

Eigen::VectorXd source_backward(const SourceModel &model,
                                const SourceSample &sample,
                                const SourceGrad &grad) {
  if (!model.learnable()) {
    return Eigen::VectorXd();
  }
  if (!sample.tape) {
    throw ContractError("source sample carries no tape");
  }
  const Eigen::Index d = model.output_dim;
  const Eigen::Index n = sample.draw.x0.cols();
  Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(2 * d, n);
  auto g_mu = out_grad.topRows(d);
  auto g_lv = out_grad.bottomRows(d);
  if (grad.mu.size() != 0) {
    g_mu += grad.mu;
  }
  if (grad.x0.size() != 0) {
    g_mu += grad.x0;
  }
  if (model.kind == SourceKind::conditional_gaussian) {
    if (grad.log_sigma2.size() != 0) {
      g_lv += grad.log_sigma2;
    }
    if (grad.x0.size() != 0) {
      // x0 = mu + exp(lv / 2) * eps  =>  dx0/dlv = exp(lv / 2) * eps / 2.
      g_lv += (0.5 * grad.x0.array() * sample.draw.sigma2.array().sqrt() *
               sample.draw.eps.array())
                  .matrix();
    }
  }
  return backward(*model.generator, *sample.tape, out_grad).params;
}

namespace {

void require_positive_variance(const Eigen::MatrixXd &sigma2) {
  if (!(sigma2.array() > 0.0).all()) {
    throw ContractError("variances must be strictly positive");
  }
}

void require_same_shape(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError("alignment batches must have the same shape");
  }
}

} // namespace

LossAndGrad varreg_loss(const Eigen::MatrixXd &sigma2) {
  require_positive_variance(sigma2);
  const auto n = static_cast<double>(sigma2.cols());
  const auto s = sigma2.array();
  LossAndGrad out;
  out.value = 0.5 * (s - s.log() - 1.0).sum() / n;
  out.grad = (0.5 * (1.0 - 1.0 / s) / n).matrix();
  return out;
}

KlLossAndGrad standard_kl_loss(const Eigen::MatrixXd &mu,
                               const Eigen::MatrixXd &sigma2) {
  require_positive_variance(sigma2);
  require_same_shape(mu, sigma2);
  const auto n = static_cast<double>(sigma2.cols());
  const auto s = sigma2.array();
  KlLossAndGrad out;
  out.value = 0.5 * (mu.array().square() + s - s.log() - 1.0).sum() / n;
  out.grad_mu = mu / n;
  out.grad_sigma2 = (0.5 * (1.0 - 1.0 / s) / n).matrix();
  return out;
}

LossAndGrad cosine_align_loss(const Eigen::MatrixXd &x0,
                              const Eigen::MatrixXd &x1) {
  require_same_shape(x0, x1);
  constexpr double cMinNorm = 1e-12;
  const Eigen::Index n = x0.cols();
  LossAndGrad out;
  out.grad = Eigen::MatrixXd::Zero(x0.rows(), n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = x0.col(i).norm();
    const double b = x1.col(i).norm();
    if (a < cMinNorm || b < cMinNorm) {
      total += 1.0;
      continue;
    }
    const double cosine = x0.col(i).dot(x1.col(i)) / (a * b);
    total += 1.0 - cosine;
    // d cos / d x0 = x1 / (|x0||x1|) - cos * x0 / |x0|^2
    out.grad.col(i) =
        -(x1.col(i) / (a * b) - cosine * x0.col(i) / (a * a)) /
        static_cast<double>(n);
  }
  out.value = total / static_cast<double>(n);
  return out;
}

LossAndGrad mse_align_loss(const Eigen::MatrixXd &x0,
                           const Eigen::MatrixXd &x1) {
  require_same_shape(x0, x1);
  const double denom = static_cast<double>(x0.cols() * x0.rows());
  const Eigen::MatrixXd diff = x0 - x1;
  return {diff.squaredNorm() / denom, 2.0 * diff / denom};
}

} // namespace csfm
