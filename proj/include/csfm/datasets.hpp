#ifndef CSFM_DATASETS_HPP_
#define CSFM_DATASETS_HPP_

#include <Eigen/Dense>

#include <string>

#include "csfm/nnet/rng.hpp"

namespace csfm {

enum class DatasetFamily { eight_gaussians, two_moons, gaussian_benchmark };
enum class ConditionMode { polar_angle, x_coordinate, l2_norm };

std::string to_string(DatasetFamily f);
std::string to_string(ConditionMode m);
DatasetFamily parse_dataset_family(const std::string &s);
ConditionMode parse_condition_mode(const std::string &s);

struct DatasetSpec {
  DatasetFamily family = DatasetFamily::eight_gaussians;
  ConditionMode condition_mode = ConditionMode::polar_angle;
  double mode_radius = 2.0;
  double mode_std = 0.2;
  double moon_noise_std = 0.1;
  bool standardize = false;
};

// Throws ConfigError when the condition mode is not defined for the family.
void validate(const DatasetSpec &spec);

struct ConditionedSample {
  Eigen::Vector2d x1;
  double c;
};

// Column i of `x1` is paired with c(i). `component` is the mixture mode
// (eight gaussians) or moon index (two moons) each sample was drawn from.
struct ConditionedBatch {
  Eigen::Matrix2Xd x1;
  Eigen::RowVectorXd c;
  Eigen::VectorXi component;

  Eigen::Index size() const { return x1.cols(); }
  ConditionedSample operator[](Eigen::Index i) const {
    return {x1.col(i), c(i)};
  }
};

ConditionedBatch sample_eight_gaussians(Eigen::Index n, const DatasetSpec &spec,
                                        SplitRng &rng);
ConditionedBatch sample_two_moons(Eigen::Index n, const DatasetSpec &spec,
                                  SplitRng &rng);
// Dispatches on spec.family (eight_gaussians or two_moons).
ConditionedBatch sample_dataset(Eigen::Index n, const DatasetSpec &spec,
                                SplitRng &rng);

// Fixed standardization constants of the noisy two-moons distribution.
struct MoonsMoments {
  Eigen::Vector2d mean;
  Eigen::Vector2d std_dev;
};
MoonsMoments two_moons_moments(double noise_std);

struct GaussianPairs {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd x1;
};

// Independent standard-normal endpoints, `dim` rows by n columns each.
GaussianPairs gaussian_benchmark_pair(Eigen::Index n, Eigen::Index dim,
                                      SplitRng &rng);

// E[X1 - X0 | X_t = x] for independent N(0, I) endpoints.
template <typename Derived>
auto oracle_velocity_gaussian(const Eigen::MatrixBase<Derived> &x, double t) {
  const double scale = (2.0 * t - 1.0) / (t * t + (1.0 - t) * (1.0 - t));
  return (scale * x).eval();
}

// E[Var(X1 - X0 | X_t)] (trace) for independent N(0, I) endpoints.
double oracle_intrinsic_variance_gaussian(double t, Eigen::Index dim);

} // namespace csfm

#endif // CSFM_DATASETS_HPP_
