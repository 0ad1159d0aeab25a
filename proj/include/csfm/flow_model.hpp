#ifndef CSFM_FLOW_MODEL_HPP_
#define CSFM_FLOW_MODEL_HPP_

#include <Eigen/Dense>

#include "csfm/nnet/dense_net.hpp"
#include "csfm/nnet/rng.hpp"

namespace csfm {

// v(x, t[, c]). Time always enters through its projection; the condition
// projection exists only when condition_injected is set.
struct FlowModel {
  DenseNet<double> net;
  bool condition_injected = true;

  Eigen::Index dim() const { return net.input_dim(); }
};

// `num_layers` affine layers of width `hidden` (the first one being the
// shared input projection), identity output of width `dim`.
FlowModel make_flow_model(Eigen::Index dim, Eigen::Index hidden,
                          Eigen::Index num_layers, bool condition_injected,
                          SplitRng &rng);

ForwardResult<double> flow_forward(const FlowModel &flow,
                                   const Eigen::MatrixXd &x,
                                   const Eigen::RowVectorXd &t,
                                   const Eigen::RowVectorXd &c);

Eigen::MatrixXd velocity(const FlowModel &flow, const Eigen::MatrixXd &x,
                         const Eigen::RowVectorXd &t,
                         const Eigen::RowVectorXd &c);

} // namespace csfm

#endif // CSFM_FLOW_MODEL_HPP_
