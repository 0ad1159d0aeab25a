#include "csfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "csfm/errors.hpp"

namespace csfm {

std::vector<double> uniform_bin_edges(int bins) {
  if (bins < 1) {
    throw ConfigError("need at least one time bin");
  }
  std::vector<double> edges(bins + 1);
  for (int b = 0; b <= bins; ++b) {
    edges[b] = static_cast<double>(b) / bins;
  }
  return edges;
}

int bin_index(double t, int bins) {
  const int b = static_cast<int>(std::floor(t * bins));
  return std::clamp(b, 0, bins - 1);
}

namespace {

std::vector<std::vector<Eigen::Index>> group_by_bin(const Eigen::RowVectorXd &t,
                                                    int bins) {
  std::vector<std::vector<Eigen::Index>> groups(bins);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    groups[bin_index(t(i), bins)].push_back(i);
  }
  return groups;
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd &m,
                            const std::vector<Eigen::Index> &idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
  }
  return out;
}

Eigen::RowVectorXd gather(const Eigen::RowVectorXd &v,
                          const std::vector<Eigen::Index> &idx) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out(static_cast<Eigen::Index>(j)) = v(idx[j]);
  }
  return out;
}

} // namespace

std::vector<BinEstimate> intrinsic_variance_knn(const Eigen::MatrixXd &xt,
                                                const Eigen::RowVectorXd &t,
                                                const Eigen::MatrixXd &delta,
                                                int t_bins, int k) {
  if (k < 2) {
    throw ConfigError("intrinsic variance needs k >= 2 neighbours");
  }
  if (xt.cols() != t.size() || delta.cols() != t.size()) {
    throw ConfigError("x_t, t and delta must have one column per sample");
  }
  const auto edges = uniform_bin_edges(t_bins);
  const auto groups = group_by_bin(t, t_bins);
  std::vector<BinEstimate> out(t_bins);
  for (int b = 0; b < t_bins; ++b) {
    const auto &idx = groups[b];
    const auto m = static_cast<Eigen::Index>(idx.size());
    out[b].lo = edges[b];
    out[b].hi = edges[b + 1];
    out[b].count = m;
    if (m <= k) {
      continue;
    }
    const Eigen::MatrixXd x = gather_cols(xt, idx);
    const Eigen::MatrixXd d = gather_cols(delta, idx);
    const Eigen::RowVectorXd sq = x.colwise().squaredNorm();
    std::vector<std::pair<double, Eigen::Index>> dist(m);
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::RowVectorXd cross = x.col(i).transpose() * x;
      for (Eigen::Index j = 0; j < m; ++j) {
        dist[j] = {j == i ? -1.0 : sq(i) + sq(j) - 2.0 * cross(j), j};
      }
      std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d.rows());
      for (int q = 0; q < k; ++q) {
        mean += d.col(dist[q].second);
      }
      mean /= k;
      double var = 0.0;
      for (int q = 0; q < k; ++q) {
        var += (d.col(dist[q].second) - mean).squaredNorm();
      }
      total += var / (k - 1);
    }
    out[b].value = total / static_cast<double>(m);
  }
  return out;
}

std::vector<Eigen::Index> hidden_weight_layers(const DenseNet<double> &net) {
  std::vector<Eigen::Index> layers;
  for (Eigen::Index l = 1; l + 1 < net.num_layers(); ++l) {
    layers.push_back(l);
  }
  if (layers.empty()) {
    for (Eigen::Index l = 0; l < net.num_layers(); ++l) {
      layers.push_back(l);
    }
  }
  return layers;
}

GradVarianceProfile gradient_variance_profile(
    const FlowModel &flow, const Eigen::MatrixXd &xt,
    const Eigen::RowVectorXd &t, const Eigen::RowVectorXd &c,
    const Eigen::MatrixXd &delta, int t_bins,
    const std::vector<Eigen::Index> &layers) {
  if (layers.empty()) {
    throw ConfigError("gradient variance probe needs at least one layer");
  }
  for (auto l : layers) {
    if (l < 0 || l >= flow.net.num_layers()) {
      throw ConfigError("probe layer " + std::to_string(l) +
                        " does not exist");
    }
  }
  GradVarianceProfile prof;
  prof.edges = uniform_bin_edges(t_bins);
  prof.variance.assign(t_bins, std::nullopt);
  prof.counts.assign(t_bins, 0);
  prof.layers = layers;
  const auto groups = group_by_bin(t, t_bins);
  for (int b = 0; b < t_bins; ++b) {
    const auto &idx = groups[b];
    const auto n = static_cast<Eigen::Index>(idx.size());
    prof.counts[b] = n;
    if (n < 2) {
      continue;
    }
    const Eigen::MatrixXd x = gather_cols(xt, idx);
    const Eigen::RowVectorXd tb = gather(t, idx);
    const Eigen::RowVectorXd cb =
        flow.condition_injected ? gather(c, idx) : Eigen::RowVectorXd();
    const Eigen::MatrixXd d = gather_cols(delta, idx);
    const auto fwd = flow_forward(flow, x, tb, cb);
    // Per-sample loss ||v - delta||^2 has output gradient 2 (v - delta).
    const auto bwd = backward(flow.net, fwd.tape,
                              Eigen::MatrixXd(2.0 * (fwd.output - d)));
    double layer_sum = 0.0;
    for (auto l : layers) {
      const Eigen::MatrixXd &dl = bwd.deltas[l];
      const Eigen::MatrixXd &al = fwd.tape.activations[l];
      const Eigen::MatrixXd mean = dl * al.transpose() / static_cast<double>(n);
      double ss = 0.0;
      Eigen::MatrixXd g(mean.rows(), mean.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        g.noalias() = dl.col(i) * al.col(i).transpose();
        ss += (g - mean).squaredNorm();
      }
      layer_sum += ss / static_cast<double>(n - 1);
    }
    prof.variance[b] = layer_sum / static_cast<double>(layers.size());
  }
  return prof;
}

GradVarianceProfile gradient_variance_probe(
    const FlowModel &flow, const SourceModel &source,
    const ConditionedBatch &pool, int t_bins,
    const std::vector<Eigen::Index> &layers, Eigen::Index probe_size,
    SplitRng &rng) {
  if (probe_size < 100 * static_cast<Eigen::Index>(t_bins)) {
    throw DomainError("gradient variance probe needs at least 100 samples "
                      "per time bin");
  }
  if (pool.size() == 0) {
    throw DomainError("empty sample pool");
  }
  SplitRng pick_rng = rng.split(1);
  SplitRng time_rng = rng.split(2);
  SplitRng source_rng = rng.split(3);
  Eigen::Matrix2Xd x1(2, probe_size);
  Eigen::RowVectorXd c(probe_size);
  Eigen::RowVectorXd t(probe_size);
  for (Eigen::Index i = 0; i < probe_size; ++i) {
    const auto j =
        static_cast<Eigen::Index>(pick_rng.below(static_cast<std::uint64_t>(
            pool.size())));
    x1.col(i) = pool.x1.col(j);
    c(i) = pool.c(j);
    t(i) = time_rng.uniform();
  }
  const SourceDraw draw = sample_source(source, c, source_rng).draw;
  const Eigen::MatrixXd xt =
      draw.x0.array().rowwise() * (1.0 - t.array()) +
      x1.array().rowwise() * t.array();
  const Eigen::MatrixXd delta = x1 - draw.x0;
  return gradient_variance_profile(flow, xt, t, c, delta, t_bins, layers);
}

double wasserstein1d_squared(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw DomainError("Wasserstein distance of an empty set");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto n = a.size();
  const auto m = b.size();
  // Quantile levels (i+1)/n and (j+1)/m, compared exactly in integers.
  std::size_t i = 0;
  std::size_t j = 0;
  double prev = 0.0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::size_t ni = (i + 1) * m;
    const std::size_t nj = (j + 1) * n;
    const std::size_t next = std::min(ni, nj);
    const double level = static_cast<double>(next) / static_cast<double>(n * m);
    const double diff = a[i] - b[j];
    acc += (level - prev) * diff * diff;
    prev = level;
    if (ni == next) {
      ++i;
    }
    if (nj == next) {
      ++j;
    }
  }
  return acc;
}

double sliced_wasserstein(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b,
                          int projections, SplitRng &rng) {
  if (a.cols() < 2 || b.cols() < 2) {
    throw DomainError("sliced Wasserstein needs at least two points per set");
  }
  if (a.rows() != b.rows()) {
    throw ConfigError("point sets have different dimensions");
  }
  if (projections < 1) {
    throw ConfigError("need at least one projection");
  }
  const Eigen::Index dim = a.rows();
  std::vector<double> pa(a.cols());
  std::vector<double> pb(b.cols());
  double acc = 0.0;
  for (int p = 0; p < projections; ++p) {
    Eigen::VectorXd dir(dim);
    do {
      for (Eigen::Index k = 0; k < dim; ++k) {
        dir(k) = rng.normal();
      }
    } while (dir.norm() < 1e-12);
    dir.normalize();
    Eigen::Map<Eigen::RowVectorXd>(pa.data(), a.cols()) = dir.transpose() * a;
    Eigen::Map<Eigen::RowVectorXd>(pb.data(), b.cols()) = dir.transpose() * b;
    acc += wasserstein1d_squared(pa, pb);
  }
  return std::sqrt(acc / projections);
}

namespace {
double mean_pair_distance(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    acc += (b.colwise() - a.col(i)).colwise().norm().sum();
  }
  return acc / (static_cast<double>(a.cols()) * static_cast<double>(b.cols()));
}
} // namespace

double energy_distance(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) {
  if (a.cols() < 2 || b.cols() < 2) {
    throw DomainError("energy distance needs at least two points per set");
  }
  if (a.rows() != b.rows()) {
    throw ConfigError("point sets have different dimensions");
  }
  const double value = 2.0 * mean_pair_distance(a, b) -
                       mean_pair_distance(a, a) - mean_pair_distance(b, b);
  return std::max(value, 0.0);
}

const DetectorFlags &VarianceDetector::update(double sigma2_mean) {
  ++index_;
  if (std::isnan(sigma2_mean)) {
    below_run_ = 0;
    above_run_ = 0;
    return flags_;
  }
  below_run_ = sigma2_mean < th_.collapse_below ? below_run_ + 1 : 0;
  above_run_ = sigma2_mean > th_.explode_above ? above_run_ + 1 : 0;
  if (!flags_.collapse && below_run_ >= th_.persistence) {
    flags_.collapse = true;
    flags_.collapse_index = index_;
  }
  if (!flags_.explosion && above_run_ >= th_.persistence) {
    flags_.explosion = true;
    flags_.explosion_index = index_;
  }
  return flags_;
}

DetectorFlags collapse_explosion_detect(std::span<const double> series,
                                        DetectorThresholds th) {
  if (series.empty()) {
    throw DomainError("detector needs a non-empty series");
  }
  VarianceDetector det(th);
  for (double v : series) {
    det.update(v);
  }
  return det.flags();
}

} // namespace csfm
