#ifndef CSFM_NNET_PER_SAMPLE_HPP_
#define CSFM_NNET_PER_SAMPLE_HPP_

#include <vector>

#include "csfm/errors.hpp"
#include "csfm/nnet/dense_net.hpp"

namespace csfm {

template <typename Scalar> struct LayerGradient {
  MatrixX<Scalar> weight;
  VectorX<Scalar> bias;
};

// One entry per sample, each holding one LayerGradient per designated layer.
template <typename Scalar>
using PerSampleGradients = std::vector<std::vector<LayerGradient<Scalar>>>;

/*
 * Per-sample gradients from a single batched pass. Each sample's loss only
 * touches its own column, so column i of every layer delta together with
 * column i of that layer's input activation is exactly the gradient of
 * loss_i alone.
 */
template <typename Scalar>
PerSampleGradients<Scalar>
per_sample_gradients(const DenseNet<Scalar> &net,
                     const ForwardTape<Scalar> &tape,
                     const BackwardResult<Scalar> &grads,
                     const std::vector<Eigen::Index> &layers) {
  const Eigen::Index batch = tape.batch_size();
  if (batch == 0) {
    throw DomainError("per-sample gradients of an empty batch");
  }
  for (auto l : layers) {
    if (l < 0 || l >= net.num_layers()) {
      throw ConfigError("designated layer " + std::to_string(l) +
                        " does not exist");
    }
  }
  PerSampleGradients<Scalar> out(batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    out[i].reserve(layers.size());
    for (auto l : layers) {
      const auto d = grads.deltas[l].col(i);
      out[i].push_back({d * tape.activations[l].col(i).transpose(), d});
    }
  }
  return out;
}

/*
 * `loss_output_grad(outputs)` returns d loss_i / d output_i for every column,
 * i.e. the gradient of each sample's own (unaveraged) loss.
 */
template <typename Scalar, typename LossGrad>
PerSampleGradients<Scalar> per_sample_gradient_batch(
    const DenseNet<Scalar> &net, LossGrad &&loss_output_grad,
    const std::type_identity_t<MatrixX<Scalar>> &inputs,
    const std::type_identity_t<RowVectorX<Scalar>> &time = {},
    const std::type_identity_t<RowVectorX<Scalar>> &condition = {},
    const std::vector<Eigen::Index> &layers = {}) {
  if (inputs.cols() == 0) {
    throw DomainError("per-sample gradients of an empty batch");
  }
  auto fwd = forward(net, inputs, time, condition);
  const MatrixX<Scalar> g = loss_output_grad(fwd.output);
  const auto bwd = backward(net, fwd.tape, g);
  std::vector<Eigen::Index> sel = layers;
  if (sel.empty()) {
    for (Eigen::Index l = 0; l < net.num_layers(); ++l) {
      sel.push_back(l);
    }
  }
  return per_sample_gradients(net, fwd.tape, bwd, sel);
}

} // namespace csfm

#endif // CSFM_NNET_PER_SAMPLE_HPP_
