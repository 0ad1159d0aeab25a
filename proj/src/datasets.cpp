#include "csfm/datasets.hpp"

#include <cmath>
#include <numbers>

#include "csfm/errors.hpp"

namespace csfm {

std::string to_string(DatasetFamily f) {
  switch (f) {
  case DatasetFamily::eight_gaussians:
    return "eight_gaussians";
  case DatasetFamily::two_moons:
    return "two_moons";
  case DatasetFamily::gaussian_benchmark:
    return "gaussian_benchmark";
  }
  return "unknown";
}

std::string to_string(ConditionMode m) {
  switch (m) {
  case ConditionMode::polar_angle:
    return "polar_angle";
  case ConditionMode::x_coordinate:
    return "x_coordinate";
  case ConditionMode::l2_norm:
    return "l2_norm";
  }
  return "unknown";
}

DatasetFamily parse_dataset_family(const std::string &s) {
  if (s == "eight_gaussians") {
    return DatasetFamily::eight_gaussians;
  }
  if (s == "two_moons") {
    return DatasetFamily::two_moons;
  }
  if (s == "gaussian_benchmark") {
    return DatasetFamily::gaussian_benchmark;
  }
  throw ConfigError("unknown dataset family '" + s + "'");
}

ConditionMode parse_condition_mode(const std::string &s) {
  if (s == "polar_angle") {
    return ConditionMode::polar_angle;
  }
  if (s == "x_coordinate") {
    return ConditionMode::x_coordinate;
  }
  if (s == "l2_norm") {
    return ConditionMode::l2_norm;
  }
  throw ConfigError("unknown condition mode '" + s + "'");
}

void validate(const DatasetSpec &spec) {
  if (spec.family == DatasetFamily::two_moons &&
      spec.condition_mode != ConditionMode::x_coordinate) {
    throw ConfigError("two_moons only supports the x_coordinate condition");
  }
  if (spec.family == DatasetFamily::gaussian_benchmark) {
    throw ConfigError("gaussian_benchmark has no condition; use "
                      "gaussian_benchmark_pair");
  }
  if (!(spec.mode_std >= 0.0) || !(spec.moon_noise_std >= 0.0) ||
      !(spec.mode_radius > 0.0)) {
    throw ConfigError("dataset geometry must be non-negative");
  }
}

namespace {
void require_positive(Eigen::Index n) {
  if (n < 1) {
    throw DomainError("sample count must be at least 1");
  }
}
} // namespace

ConditionedBatch sample_eight_gaussians(Eigen::Index n, const DatasetSpec &spec,
                                        SplitRng &rng) {
  require_positive(n);
  if (spec.family != DatasetFamily::eight_gaussians) {
    throw ConfigError("sample_eight_gaussians called with another family");
  }
  validate(spec);
  ConditionedBatch out{Eigen::Matrix2Xd(2, n), Eigen::RowVectorXd(n),
                       Eigen::VectorXi(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<int>(rng.below(8));
    const double theta = 2.0 * std::numbers::pi * k / 8.0;
    const Eigen::Vector2d center(spec.mode_radius * std::cos(theta),
                                 spec.mode_radius * std::sin(theta));
    const double ex = rng.normal();
    const double ey = rng.normal();
    out.x1.col(i) = center + spec.mode_std * Eigen::Vector2d(ex, ey);
    out.component(i) = k;
    switch (spec.condition_mode) {
    case ConditionMode::polar_angle:
      out.c(i) = theta;
      break;
    case ConditionMode::x_coordinate:
      out.c(i) = out.x1(0, i);
      break;
    case ConditionMode::l2_norm:
      out.c(i) = center.norm();
      break;
    }
  }
  return out;
}

MoonsMoments two_moons_moments(double noise_std) {
  // theta ~ U[0, pi]: E[cos] = 0, E[sin] = 2/pi, E[cos^2] = E[sin^2] = 1/2.
  const double noise_var = noise_std * noise_std;
  const double var_x = 0.75 + noise_var;
  const double var_y = 0.5625 - 1.0 / std::numbers::pi + noise_var;
  return {Eigen::Vector2d(0.5, 0.25),
          Eigen::Vector2d(std::sqrt(var_x), std::sqrt(var_y))};
}

ConditionedBatch sample_two_moons(Eigen::Index n, const DatasetSpec &spec,
                                  SplitRng &rng) {
  require_positive(n);
  if (spec.family != DatasetFamily::two_moons) {
    throw ConfigError("sample_two_moons called with another family");
  }
  validate(spec);
  const MoonsMoments moments = two_moons_moments(spec.moon_noise_std);
  ConditionedBatch out{Eigen::Matrix2Xd(2, n), Eigen::RowVectorXd(n),
                       Eigen::VectorXi(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool upper = rng.uniform() < 0.5;
    const double theta = std::numbers::pi * rng.uniform();
    Eigen::Vector2d p;
    if (upper) {
      p << std::cos(theta), std::sin(theta);
    } else {
      p << 1.0 - std::cos(theta), 0.5 - std::sin(theta);
    }
    const double ex = rng.normal();
    const double ey = rng.normal();
    p += spec.moon_noise_std * Eigen::Vector2d(ex, ey);
    if (spec.standardize) {
      p = (p - moments.mean).cwiseQuotient(moments.std_dev);
    }
    out.x1.col(i) = p;
    out.c(i) = p(0);
    out.component(i) = upper ? 0 : 1;
  }
  return out;
}

ConditionedBatch sample_dataset(Eigen::Index n, const DatasetSpec &spec,
                                SplitRng &rng) {
  switch (spec.family) {
  case DatasetFamily::eight_gaussians:
    return sample_eight_gaussians(n, spec, rng);
  case DatasetFamily::two_moons:
    return sample_two_moons(n, spec, rng);
  case DatasetFamily::gaussian_benchmark:
    break;
  }
  throw ConfigError("gaussian_benchmark is not a conditional dataset");
}

GaussianPairs gaussian_benchmark_pair(Eigen::Index n, Eigen::Index dim,
                                      SplitRng &rng) {
  require_positive(n);
  if (dim != 1 && dim != 2) {
    throw ConfigError("gaussian benchmark supports dim 1 or 2");
  }
  GaussianPairs out{Eigen::MatrixXd(dim, n), Eigen::MatrixXd(dim, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d < dim; ++d) {
      out.x0(d, i) = rng.normal();
    }
    for (Eigen::Index d = 0; d < dim; ++d) {
      out.x1(d, i) = rng.normal();
    }
  }
  return out;
}

double oracle_intrinsic_variance_gaussian(double t, Eigen::Index dim) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("t must lie in [0, 1]");
  }
  const double a = 2.0 * t - 1.0;
  const double v = t * t + (1.0 - t) * (1.0 - t);
  return static_cast<double>(dim) * (2.0 - a * a / v);
}

} // namespace csfm
