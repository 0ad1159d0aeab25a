#ifndef CSFM_SAMPLER_HPP_
#define CSFM_SAMPLER_HPP_

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "csfm/errors.hpp"
#include "csfm/flow_model.hpp"
#include "csfm/source.hpp"

namespace csfm {

struct Trajectory {
  Eigen::Index sample_id = 0;
  double c = 0.0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
};

// Euler paths of a whole batch. states[k] holds every sample at times[k].
// When `recorded` is false only the first and last states are kept.
struct TrajectoryBatch {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> states;
  Eigen::RowVectorXd c;
  bool recorded = true;
  bool failed = false;
  int failed_step = -1;

  const Eigen::MatrixXd &start() const { return states.front(); }
  const Eigen::MatrixXd &end() const { return states.back(); }
  Eigen::Index size() const { return states.front().cols(); }
  Trajectory trajectory(Eigen::Index i) const;
};

/*
 * x_{k+1} = x_k + v(x_k, k / steps, c) / steps. `field(x, t, c)` returns
 * the velocity of every column. A non-finite state stops the loop; the
 * batch then holds the finite prefix with `failed` set.
 */
template <typename Field>
TrajectoryBatch euler_integrate_field(Field &&field, const Eigen::MatrixXd &x0,
                                      const Eigen::RowVectorXd &c, int steps,
                                      bool record = true) {
  if (steps < 1) {
    throw DomainError("Euler integration needs at least one step");
  }
  TrajectoryBatch out;
  out.c = c;
  out.recorded = record;
  out.times.push_back(0.0);
  out.states.push_back(x0);
  Eigen::MatrixXd x = x0;
  const double h = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    x += h * field(x, t, c);
    if (!x.allFinite()) {
      out.failed = true;
      out.failed_step = k;
      return out;
    }
    const double t_next = static_cast<double>(k + 1) / steps;
    if (record || k + 1 == steps) {
      out.times.push_back(t_next);
      out.states.push_back(x);
    }
  }
  return out;
}

TrajectoryBatch euler_integrate(const FlowModel &flow,
                                const Eigen::MatrixXd &x0,
                                const Eigen::RowVectorXd &c, int steps,
                                bool record = true);

struct GeneratedBatch {
  SourceDraw source;
  Eigen::MatrixXd x1;
  std::optional<TrajectoryBatch> paths;
};

GeneratedBatch generate_batch(const FlowModel &flow, const SourceModel &source,
                              const Eigen::RowVectorXd &c, int steps,
                              SplitRng &rng, bool keep_paths = false);

// Mean over path points of the squared distance to the chord, normalized by
// the squared chord length (plus 1e-12).
double straightness(const Trajectory &traj);
double mean_straightness(const TrajectoryBatch &paths);

} // namespace csfm

#endif // CSFM_SAMPLER_HPP_
