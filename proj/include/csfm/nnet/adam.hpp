#ifndef CSFM_NNET_ADAM_HPP_
#define CSFM_NNET_ADAM_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>

#include "csfm/errors.hpp"

namespace csfm {

struct AdamHyper {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar = double> struct AdamState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  AdamHyper hyper;
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step_count = 0;

  AdamState() = default;
  AdamState(Eigen::Index num_params, AdamHyper h)
      : hyper(h), first_moment(Vector::Zero(num_params)),
        second_moment(Vector::Zero(num_params)) {}
};

/*
 * One bias-corrected Adam update. A non-finite gradient leaves both the
 * parameters and the optimizer state untouched and raises NumericError.
 */
template <typename Scalar, typename ParamVec, typename GradVec>
void adam_step(AdamState<Scalar> &state, Eigen::MatrixBase<ParamVec> &params,
               const Eigen::MatrixBase<GradVec> &grads) {
  if (grads.size() != params.size() ||
      state.first_moment.size() != params.size()) {
    throw ConfigError("adam: gradient and parameter sizes differ");
  }
  if (!grads.allFinite()) {
    Eigen::Index bad = 0;
    for (Eigen::Index i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads(i))) {
        bad = i;
        break;
      }
    }
    std::ostringstream msg;
    msg << "adam: non-finite gradient at index " << bad << " (value "
        << grads(bad) << ") on step " << state.step_count + 1;
    throw NumericError(msg.str());
  }
  const auto &h = state.hyper;
  const Scalar b1 = static_cast<Scalar>(h.beta1);
  const Scalar b2 = static_cast<Scalar>(h.beta2);
  state.step_count += 1;
  const auto t = static_cast<Scalar>(state.step_count);
  state.first_moment = b1 * state.first_moment + (Scalar(1) - b1) * grads;
  state.second_moment =
      b2 * state.second_moment +
      (Scalar(1) - b2) * grads.cwiseProduct(grads);
  const Scalar c1 = Scalar(1) - std::pow(b1, t);
  const Scalar c2 = Scalar(1) - std::pow(b2, t);
  const Scalar lr = static_cast<Scalar>(h.learning_rate);
  const Scalar eps = static_cast<Scalar>(h.epsilon);
  params.derived() -=
      (lr * (state.first_moment / c1).array() /
       ((state.second_moment / c2).array().sqrt() + eps))
          .matrix();
}

} // namespace csfm

#endif // CSFM_NNET_ADAM_HPP_
