#ifndef CSFM_FLOW_HPP_
#define CSFM_FLOW_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csfm/datasets.hpp"
#include "csfm/flow_model.hpp"
#include "csfm/metrics.hpp"
#include "csfm/nnet/adam.hpp"
#include "csfm/nnet/rng.hpp"
#include "csfm/source.hpp"

namespace csfm {

enum class AlignKind { none, cosine, mse };

std::string to_string(AlignKind k);
AlignKind parse_align_kind(const std::string &s);

struct LossWeights {
  double lambda_varreg = 0.0; // weight of whichever regularizer is active
  double lambda_align = 0.0;
  AlignKind align_kind = AlignKind::none;
  bool stop_grad_delta = false;
};

struct NetworkShape {
  Eigen::Index flow_hidden = 64;
  Eigen::Index flow_layers = 10;
  std::vector<Eigen::Index> source_hidden{64, 64};
};

// Periodic fidelity evaluation on a fixed held-out set.
struct EvalConfig {
  long interval = 1000;
  Eigen::Index samples = 1024;
  int euler_steps = 16;
  int projections = 128;
};

struct ReflowConfig {
  double step_fraction = 0.2;
  Eigen::Index pool_size = 8192;
  long pool_refresh = 1000;
  int euler_steps = 50;
};

struct TrainConfig {
  DatasetSpec dataset;
  SourceKind source_kind = SourceKind::fixed_gaussian;
  RegularizerKind regularizer = RegularizerKind::none;
  LossWeights weights;
  bool condition_injected = true;
  long steps = 20000;
  Eigen::Index batch_size = 256;
  double learning_rate = 3e-4;
  std::string time_sampler = "uniform";
  std::uint64_t seed = 0;
  long log_interval = 100;
  long checkpoint_interval = 0; // 0: final checkpoint only
  AdamHyper adam;               // learning_rate above overrides adam's
  NetworkShape nets;
  EvalConfig eval;
  ReflowConfig reflow;
  DetectorThresholds detector;
};

void validate(const TrainConfig &cfg);
AdamHyper adam_hyper(const TrainConfig &cfg);

// Stream labels split off the run seed.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t data = 2;
inline constexpr std::uint64_t step = 3;
inline constexpr std::uint64_t eval_data = 4;
inline constexpr std::uint64_t eval_metrics = 5;
inline constexpr std::uint64_t reflow = 6;
inline constexpr std::uint64_t analysis = 7;
} // namespace streams

struct Interpolation {
  Eigen::MatrixXd xt;
  Eigen::MatrixXd delta;
};

// x_t = (1 - t) x0 + t x1 and delta = x1 - x0, column by column.
Interpolation interpolate(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                          const Eigen::RowVectorXd &t);

// Batch mean of ||v - delta||^2 (summed over dimensions); grad w.r.t. v.
LossAndGrad fm_residual_loss(const Eigen::MatrixXd &v,
                             const Eigen::MatrixXd &delta);

double total_loss(double fm, double reg, double align, const LossWeights &w);

struct LossBreakdown {
  double fm = 0.0;
  double reg = 0.0;
  double align = 0.0;
  double total = 0.0;
  std::optional<double> sigma2_mean;
  std::optional<double> sigma2_min;
  std::optional<double> sigma2_max;
};

struct TrainState {
  FlowModel flow;
  SourceModel source;
  AdamState<double> flow_adam;
  AdamState<double> source_adam;
  long step = 0;
};

TrainState make_train_state(const TrainConfig &cfg);

struct StepGradients {
  LossBreakdown loss;
  Eigen::VectorXd flow;
  Eigen::VectorXd source;
  // Source gradient split by route; filled only when requested.
  Eigen::VectorXd source_xt_path;
  Eigen::VectorXd source_delta_path;
  Eigen::VectorXd source_reg_path;
  Eigen::VectorXd source_align_path;
};

/*
 * Loss and gradients for one batch with given times and source draw. The
 * source receives gradient through x_t (the flow input) and through delta
 * (the regression target); stop_grad_delta drops the second route.
 */
StepGradients compute_step_gradients(const TrainState &state,
                                     const ConditionedBatch &batch,
                                     const Eigen::RowVectorXd &t,
                                     const SourceSample &x0,
                                     const TrainConfig &cfg,
                                     bool decompose = false);

// Draws times from `rng`, then the source sample, and applies one Adam
// update to each learnable parameter set.
LossBreakdown train_step(TrainState &state, const ConditionedBatch &batch,
                         const TrainConfig &cfg, SplitRng &rng);

struct FidelityReport {
  double sliced_w2 = 0.0;
  double energy_distance = 0.0;
  double straightness_mean = 0.0;
};

// Fixed held-out evaluation targets for a run (depends on seed and dataset
// only, so runs sharing them are comparable).
ConditionedBatch held_out_targets(const TrainConfig &cfg, Eigen::Index n);

FidelityReport evaluate_fidelity(const FlowModel &flow,
                                 const SourceModel &source,
                                 const ConditionedBatch &targets,
                                 int euler_steps, int projections,
                                 SplitRng &rng, bool with_straightness = true);

struct RunHooks {
  std::function<void(const TrainState &)> on_checkpoint;
  std::function<void(const MetricsRecord &)> on_record;
  // Called with the state at the moment a NumericError halts the run.
  std::function<void(const TrainState &, const std::string &)> on_failure;
};

struct RunArtifacts {
  TrainState state;
  std::vector<MetricsRecord> metrics;
  DetectorFlags flags;
};

RunArtifacts train_run(const TrainConfig &cfg, const RunHooks &hooks = {});

// One FM update of the flow alone on explicit pairs; returns the FM loss.
double flow_matching_update(FlowModel &flow, AdamState<double> &adam,
                            const Eigen::MatrixXd &x0,
                            const Eigen::MatrixXd &x1,
                            const Eigen::RowVectorXd &c,
                            const Eigen::RowVectorXd &t);

struct ReflowResult {
  long steps = 0;
  double final_fm = 0.0;
};

// Fine-tunes the flow on (x0, generated x1) pairs from the frozen source.
ReflowResult reflow_finetune(FlowModel &flow, const SourceModel &source,
                             const TrainConfig &cfg, SplitRng &rng);

} // namespace csfm

#endif // CSFM_FLOW_HPP_
