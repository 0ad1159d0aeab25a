#include "csfm/sampler.hpp"

namespace csfm {

Trajectory TrajectoryBatch::trajectory(Eigen::Index i) const {
  Trajectory traj;
  traj.sample_id = i;
  traj.c = c.size() > i ? c(i) : 0.0;
  traj.t = times;
  traj.x.reserve(states.size());
  for (const auto &s : states) {
    traj.x.emplace_back(s.col(i));
  }
  return traj;
}

TrajectoryBatch euler_integrate(const FlowModel &flow,
                                const Eigen::MatrixXd &x0,
                                const Eigen::RowVectorXd &c, int steps,
                                bool record) {
  Eigen::RowVectorXd t_row(x0.cols());
  return euler_integrate_field(
      [&](const Eigen::MatrixXd &x, double t, const Eigen::RowVectorXd &cc) {
        t_row.setConstant(t);
        return velocity(flow, x, t_row, cc);
      },
      x0, c, steps, record);
}

GeneratedBatch generate_batch(const FlowModel &flow, const SourceModel &source,
                              const Eigen::RowVectorXd &c, int steps,
                              SplitRng &rng, bool keep_paths) {
  GeneratedBatch out;
  out.source = sample_source(source, c, rng).draw;
  auto paths = euler_integrate(flow, out.source.x0, c, steps, keep_paths);
  if (paths.failed) {
    throw NumericError("Euler integration produced a non-finite state at "
                       "step " +
                       std::to_string(paths.failed_step));
  }
  out.x1 = paths.end();
  if (keep_paths) {
    out.paths = std::move(paths);
  }
  return out;
}

double straightness(const Trajectory &traj) {
  if (traj.x.size() < 3) {
    throw DomainError("straightness needs at least three points");
  }
  const Eigen::VectorXd &first = traj.x.front();
  const Eigen::VectorXd &last = traj.x.back();
  const double chord2 = (last - first).squaredNorm();
  double acc = 0.0;
  for (std::size_t k = 0; k < traj.x.size(); ++k) {
    const double t = traj.t[k];
    acc += (traj.x[k] - ((1.0 - t) * first + t * last)).squaredNorm();
  }
  return acc / static_cast<double>(traj.x.size()) / (chord2 + 1e-12);
}

double mean_straightness(const TrajectoryBatch &paths) {
  if (paths.states.size() < 3) {
    throw DomainError("straightness needs at least three recorded points");
  }
  const Eigen::MatrixXd &first = paths.start();
  const Eigen::MatrixXd &last = paths.end();
  const Eigen::RowVectorXd chord2 =
      (last - first).colwise().squaredNorm().array() + 1e-12;
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(first.cols());
  for (std::size_t k = 0; k < paths.states.size(); ++k) {
    const double t = paths.times[k];
    acc += (paths.states[k] - ((1.0 - t) * first + t * last))
               .colwise()
               .squaredNorm();
  }
  const auto npts = static_cast<double>(paths.states.size());
  return (acc.array() / chord2.array()).mean() / npts;
}

} // namespace csfm
