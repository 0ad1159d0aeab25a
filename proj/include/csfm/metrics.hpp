#ifndef CSFM_METRICS_HPP_
#define CSFM_METRICS_HPP_

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "csfm/datasets.hpp"
#include "csfm/flow_model.hpp"
#include "csfm/nnet/rng.hpp"
#include "csfm/source.hpp"

namespace csfm {

// One logged row. Optional fields are written as empty CSV cells.
struct MetricsRecord {
  long step = 0;
  double loss_fm = 0.0;
  double loss_reg = 0.0;
  double loss_align = 0.0;
  double loss_total = 0.0;
  std::optional<double> sigma2_mean;
  std::optional<double> sigma2_min;
  std::optional<double> sigma2_max;
  std::optional<double> sliced_w2;
  std::optional<double> energy_distance;
  std::optional<double> straightness_mean;
  bool collapse_flag = false;
  bool explosion_flag = false;
};

struct BinEstimate {
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> value;
  Eigen::Index count = 0;
};

std::vector<double> uniform_bin_edges(int bins);
// Index of the bin containing t; t = 1 falls in the last bin.
int bin_index(double t, int bins);

/*
 * E[Var(delta | x_t)] per time bin. Inside a bin every point's local
 * variance is the trace of the sample covariance of delta over its k
 * nearest neighbours in x (the point itself included); the bin value is the
 * mean of those local variances. Bins with at most k points are missing.
 */
std::vector<BinEstimate> intrinsic_variance_knn(const Eigen::MatrixXd &xt,
                                                const Eigen::RowVectorXd &t,
                                                const Eigen::MatrixXd &delta,
                                                int t_bins, int k);

struct GradVarianceProfile {
  std::vector<double> edges;
  std::vector<std::optional<double>> variance;
  std::vector<Eigen::Index> counts;
  std::vector<Eigen::Index> layers;
};

// Hidden-to-hidden weight layers of a network (all but the first and last).
std::vector<Eigen::Index> hidden_weight_layers(const DenseNet<double> &net);

/*
 * Element-wise variance (unbiased) across samples of the per-sample FM-loss
 * gradient ||v(x_t, t, c) - delta||^2 with respect to each selected weight
 * matrix, summed over elements and averaged over the selected layers.
 * Bins with fewer than two samples are missing.
 */
GradVarianceProfile gradient_variance_profile(
    const FlowModel &flow, const Eigen::MatrixXd &xt,
    const Eigen::RowVectorXd &t, const Eigen::RowVectorXd &c,
    const Eigen::MatrixXd &delta, int t_bins,
    const std::vector<Eigen::Index> &layers);

// Draws probe_size (x1, c) pairs from the pool, x0 from the source and
// t ~ U[0, 1], then profiles them. Requires probe_size >= 100 * t_bins.
GradVarianceProfile gradient_variance_probe(
    const FlowModel &flow, const SourceModel &source,
    const ConditionedBatch &pool, int t_bins,
    const std::vector<Eigen::Index> &layers, Eigen::Index probe_size,
    SplitRng &rng);

// Squared 2-Wasserstein distance between two 1D empirical distributions of
// possibly different sizes, by exact quantile matching. Sorts its inputs.
double wasserstein1d_squared(std::vector<double> a, std::vector<double> b);

// sqrt of the mean over random unit directions of the squared 1D W2 of the
// projected sets. Columns are points.
double sliced_wasserstein(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b,
                          int projections, SplitRng &rng);

// 2 E|a - b| - E|a - a'| - E|b - b'| over all ordered pairs, i = j included,
// which makes the statistic a non-negative squared MMD.
double energy_distance(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b);

struct DetectorThresholds {
  double collapse_below = 1e-3;
  double explode_above = 1e2;
  int persistence = 10;
};

// Trigger indices point at the record that completed the persistence run.
struct DetectorFlags {
  bool collapse = false;
  bool explosion = false;
  long collapse_index = -1;
  long explosion_index = -1;
};

// Sticky collapse/explosion detection over a stream of logged sigma^2 means.
// A missing (NaN) value breaks any ongoing run.
class VarianceDetector {
public:
  explicit VarianceDetector(DetectorThresholds th = {}) : th_(th) {}

  const DetectorFlags &update(double sigma2_mean);
  const DetectorFlags &flags() const { return flags_; }

private:
  DetectorThresholds th_;
  DetectorFlags flags_;
  long index_ = -1;
  int below_run_ = 0;
  int above_run_ = 0;
};

DetectorFlags collapse_explosion_detect(std::span<const double> series,
                                        DetectorThresholds th = {});

} // namespace csfm

#endif // CSFM_METRICS_HPP_
