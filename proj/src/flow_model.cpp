#include "csfm/flow_model.hpp"

#include "csfm/errors.hpp"

namespace csfm {

FlowModel make_flow_model(Eigen::Index dim, Eigen::Index hidden,
                          Eigen::Index num_layers, bool condition_injected,
                          SplitRng &rng) {
  if (num_layers < 2) {
    throw ConfigError("flow network needs at least two layers");
  }
  std::vector<Eigen::Index> dims{dim};
  for (Eigen::Index l = 0; l + 1 < num_layers; ++l) {
    dims.push_back(hidden);
  }
  dims.push_back(dim);
  FlowModel flow{DenseNet<double>(dims, {true, condition_injected}),
                 condition_injected};
  he_initialize(flow.net, rng);
  return flow;
}

ForwardResult<double> flow_forward(const FlowModel &flow,
                                   const Eigen::MatrixXd &x,
                                   const Eigen::RowVectorXd &t,
                                   const Eigen::RowVectorXd &c) {
  if (flow.condition_injected) {
    return forward(flow.net, x, t, c);
  }
  return forward(flow.net, x, t);
}

Eigen::MatrixXd velocity(const FlowModel &flow, const Eigen::MatrixXd &x,
                         const Eigen::RowVectorXd &t,
                         const Eigen::RowVectorXd &c) {
  return flow_forward(flow, x, t, c).output;
}

} // namespace csfm
