#ifndef CSFM_NNET_DENSE_NET_HPP_
#define CSFM_NNET_DENSE_NET_HPP_

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "csfm/errors.hpp"
#include "csfm/nnet/gelu.hpp"
#include "csfm/nnet/rng.hpp"

namespace csfm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Scalar side inputs that are linearly projected to the first hidden width
// and summed into the first pre-activation.
struct InputEmbeddings {
  bool time = false;
  bool condition = false;
};

namespace detail {
inline std::uint64_t next_snapshot_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
} // namespace detail

/*
 * Offsets of every parameter block inside a flat parameter vector. Layer l
 * stores its weight matrix (column-major, out x in) followed by its bias.
 * The time and condition projections, when present, come last.
 */
struct ParamLayout {
  std::vector<Eigen::Index> dims;
  std::vector<Eigen::Index> weight_offset;
  std::vector<Eigen::Index> bias_offset;
  Eigen::Index time_offset = -1;
  Eigen::Index condition_offset = -1;
  Eigen::Index size = 0;

  ParamLayout() = default;
  ParamLayout(std::vector<Eigen::Index> layer_dims, InputEmbeddings emb)
      : dims(std::move(layer_dims)) {
    if (dims.size() < 2) {
      throw ConfigError("a network needs at least an input and output width");
    }
    for (auto d : dims) {
      if (d <= 0) {
        throw ConfigError("layer widths must be positive");
      }
    }
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      weight_offset.push_back(size);
      size += dims[l + 1] * dims[l];
      bias_offset.push_back(size);
      size += dims[l + 1];
    }
    if (emb.time) {
      time_offset = size;
      size += dims[1];
    }
    if (emb.condition) {
      condition_offset = size;
      size += dims[1];
    }
  }

  Eigen::Index num_layers() const {
    return static_cast<Eigen::Index>(dims.size()) - 1;
  }
  Eigen::Index in_dim(Eigen::Index l) const { return dims[l]; }
  Eigen::Index out_dim(Eigen::Index l) const { return dims[l + 1]; }
  bool has_time() const { return time_offset >= 0; }
  bool has_condition() const { return condition_offset >= 0; }

  template <typename Vec> auto weight(Vec &flat, Eigen::Index l) const {
    using S = typename std::remove_const_t<Vec>::Scalar;
    using M = std::conditional_t<std::is_const_v<Vec>, const MatrixX<S>,
                                 MatrixX<S>>;
    return Eigen::Map<M>(flat.data() + weight_offset[l], out_dim(l),
                         in_dim(l));
  }
  template <typename Vec> auto bias(Vec &flat, Eigen::Index l) const {
    return flat.segment(bias_offset[l], out_dim(l));
  }
  template <typename Vec> auto time_projection(Vec &flat) const {
    return flat.segment(time_offset, dims[1]);
  }
  template <typename Vec> auto condition_projection(Vec &flat) const {
    return flat.segment(condition_offset, dims[1]);
  }
};

/*
 * Fully connected network: GELU on every hidden layer, identity output.
 * Parameters live in one flat vector so optimizers, checkpoints and
 * finite-difference checks can treat them uniformly.
 *
 * Every mutation through mutable_params() assigns a fresh snapshot id;
 * tapes record the id they were produced under and backward() refuses a
 * tape from another snapshot.
 */
template <typename Scalar = double> class DenseNet {
public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;
  using RowVector = RowVectorX<Scalar>;

  DenseNet() = default;
  explicit DenseNet(std::vector<Eigen::Index> layer_dims,
                    InputEmbeddings emb = {})
      : layout_(std::move(layer_dims), emb),
        params_(Vector::Zero(layout_.size)),
        snapshot_(detail::next_snapshot_id()) {}

  const ParamLayout &layout() const { return layout_; }
  const std::vector<Eigen::Index> &layer_dims() const { return layout_.dims; }
  Eigen::Index num_layers() const { return layout_.num_layers(); }
  Eigen::Index input_dim() const { return layout_.dims.front(); }
  Eigen::Index output_dim() const { return layout_.dims.back(); }
  Eigen::Index num_params() const { return layout_.size; }
  bool has_time() const { return layout_.has_time(); }
  bool has_condition() const { return layout_.has_condition(); }
  InputEmbeddings embeddings() const { return {has_time(), has_condition()}; }

  const Vector &params() const { return params_; }
  Vector &mutable_params() {
    snapshot_ = detail::next_snapshot_id();
    return params_;
  }
  void set_params(const Vector &p) {
    if (p.size() != params_.size()) {
      throw ConfigError("parameter vector size mismatch");
    }
    mutable_params() = p;
  }
  std::uint64_t snapshot() const { return snapshot_; }

  auto weight(Eigen::Index l) const { return layout_.weight(params_, l); }
  auto bias(Eigen::Index l) const { return layout_.bias(params_, l); }
  auto time_projection() const { return layout_.time_projection(params_); }
  auto condition_projection() const {
    return layout_.condition_projection(params_);
  }

private:
  ParamLayout layout_;
  Vector params_;
  std::uint64_t snapshot_ = 0;
};

// He-style initialization (std = sqrt(2 / fan_in)) for weights, zero biases.
// Embedding projections use fan_in = 1.
template <typename Scalar>
void he_initialize(DenseNet<Scalar> &net, SplitRng &rng) {
  const auto &lay = net.layout();
  auto &p = net.mutable_params();
  p.setZero();
  for (Eigen::Index l = 0; l < lay.num_layers(); ++l) {
    auto w = lay.weight(p, l);
    const Scalar std_dev =
        std::sqrt(Scalar(2) / static_cast<Scalar>(lay.in_dim(l)));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        w(i, j) = std_dev * static_cast<Scalar>(rng.normal());
      }
    }
  }
  const Scalar embed_std = std::sqrt(Scalar(2));
  if (lay.has_time()) {
    auto w = lay.time_projection(p);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w(i) = embed_std * static_cast<Scalar>(rng.normal());
    }
  }
  if (lay.has_condition()) {
    auto w = lay.condition_projection(p);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w(i) = embed_std * static_cast<Scalar>(rng.normal());
    }
  }
}

template <typename Scalar> struct ForwardTape {
  std::uint64_t snapshot = 0;
  RowVectorX<Scalar> time;
  RowVectorX<Scalar> condition;
  // activations[0] is the network input; activations[l] feeds layer l.
  std::vector<MatrixX<Scalar>> activations;
  std::vector<MatrixX<Scalar>> pre_activations;
  // GELU slope at each hidden pre-activation, saved for the backward pass.
  std::vector<MatrixX<Scalar>> slopes;

  Eigen::Index batch_size() const { return activations.front().cols(); }
};

template <typename Scalar> struct ForwardResult {
  MatrixX<Scalar> output;
  ForwardTape<Scalar> tape;
};

template <typename Scalar> struct BackwardResult {
  VectorX<Scalar> params;
  MatrixX<Scalar> inputs;
  RowVectorX<Scalar> time;
  RowVectorX<Scalar> condition;
  // deltas[l] = d loss / d pre_activations[l]; kept for per-sample gradients.
  std::vector<MatrixX<Scalar>> deltas;
};

namespace detail {
template <typename Scalar>
void check_side_input(bool expected, const RowVectorX<Scalar> &values,
                      Eigen::Index batch, const char *name) {
  if (expected && values.size() != batch) {
    throw ConfigError(std::string("network expects a ") + name +
                      " value per sample");
  }
  if (!expected && values.size() != 0) {
    throw ConfigError(std::string("network has no ") + name + " projection");
  }
}
} // namespace detail

// Inputs are one column per sample. `time` and `condition` must be empty
// exactly when the network was built without the matching projection.
template <typename Scalar>
ForwardResult<Scalar>
forward(const DenseNet<Scalar> &net,
        const std::type_identity_t<MatrixX<Scalar>> &inputs,
        const std::type_identity_t<RowVectorX<Scalar>> &time = {},
        const std::type_identity_t<RowVectorX<Scalar>> &condition = {}) {
  if (inputs.rows() != net.input_dim()) {
    throw ConfigError("input width " + std::to_string(inputs.rows()) +
                      " does not match network input " +
                      std::to_string(net.input_dim()));
  }
  const Eigen::Index batch = inputs.cols();
  detail::check_side_input(net.has_time(), time, batch, "time");
  detail::check_side_input(net.has_condition(), condition, batch, "condition");

  const Eigen::Index depth = net.num_layers();
  ForwardResult<Scalar> out;
  auto &tape = out.tape;
  tape.snapshot = net.snapshot();
  tape.time = time;
  tape.condition = condition;
  tape.activations.reserve(depth);
  tape.pre_activations.reserve(depth);
  tape.slopes.reserve(depth);
  tape.activations.push_back(inputs);

  for (Eigen::Index l = 0; l < depth; ++l) {
    MatrixX<Scalar> pre(net.layout().out_dim(l), batch);
    pre.noalias() = net.weight(l) * tape.activations.back();
    pre.colwise() += net.bias(l);
    if (l == 0) {
      if (net.has_time()) {
        pre.noalias() += net.time_projection() * time;
      }
      if (net.has_condition()) {
        pre.noalias() += net.condition_projection() * condition;
      }
    }
    if (l + 1 < depth) {
      const MatrixX<Scalar> cdf = pre.unaryExpr([](Scalar x) {
        using std::erfc;
        return Scalar(0.5) * erfc(-x / std::numbers::sqrt2_v<Scalar>);
      });
      const auto pdf =
          (Scalar(-0.5) * pre.array().square()).exp() *
          (std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar>);
      tape.activations.push_back(pre.cwiseProduct(cdf));
      tape.slopes.push_back((cdf.array() + pre.array() * pdf).matrix());
    }
    tape.pre_activations.push_back(std::move(pre));
  }
  out.output = tape.pre_activations.back();
  return out;
}

// Gradients of sum(output_grad .* output) with respect to parameters and
// every input channel.
template <typename Scalar>
BackwardResult<Scalar> backward(const DenseNet<Scalar> &net,
                                const ForwardTape<Scalar> &tape,
                                const std::type_identity_t<MatrixX<Scalar>> &output_grad) {
  if (tape.snapshot != net.snapshot()) {
    throw ContractError("tape was recorded under a different parameter "
                        "snapshot");
  }
  const Eigen::Index depth = net.num_layers();
  if (output_grad.rows() != net.output_dim() ||
      output_grad.cols() != tape.batch_size()) {
    throw ConfigError("output gradient shape does not match network output");
  }
  const auto &lay = net.layout();
  BackwardResult<Scalar> res;
  res.params = VectorX<Scalar>::Zero(net.num_params());
  res.deltas.resize(depth);

  MatrixX<Scalar> delta = output_grad;
  for (Eigen::Index l = depth - 1; l >= 0; --l) {
    const auto &a = tape.activations[l];
    lay.weight(res.params, l).noalias() = delta * a.transpose();
    lay.bias(res.params, l) = delta.rowwise().sum();
    MatrixX<Scalar> upstream(lay.in_dim(l), delta.cols());
    upstream.noalias() = net.weight(l).transpose() * delta;
    if (l == 0) {
      if (net.has_time()) {
        lay.time_projection(res.params).noalias() =
            delta * tape.time.transpose();
        res.time.noalias() = net.time_projection().transpose() * delta;
      }
      if (net.has_condition()) {
        lay.condition_projection(res.params).noalias() =
            delta * tape.condition.transpose();
        res.condition.noalias() =
            net.condition_projection().transpose() * delta;
      }
      res.inputs = std::move(upstream);
      res.deltas[l] = std::move(delta);
      break;
    }
    res.deltas[l] = std::move(delta);
    delta = upstream.cwiseProduct(tape.slopes[l - 1]);
  }
  return res;
}

} // namespace csfm

#endif // CSFM_NNET_DENSE_NET_HPP_
