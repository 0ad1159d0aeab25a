#include "csfm/flow.hpp"

#include <cmath>

#include "csfm/errors.hpp"
#include "csfm/sampler.hpp"

namespace csfm {

std::string to_string(AlignKind k) {
  switch (k) {
  case AlignKind::none:
    return "none";
  case AlignKind::cosine:
    return "cosine";
  case AlignKind::mse:
    return "mse";
  }
  return "unknown";
}

AlignKind parse_align_kind(const std::string &s) {
  if (s == "none") {
    return AlignKind::none;
  }
  if (s == "cosine") {
    return AlignKind::cosine;
  }
  if (s == "mse") {
    return AlignKind::mse;
  }
  throw ConfigError("unknown alignment kind '" + s + "'");
}

void validate(const TrainConfig &cfg) {
  validate(cfg.dataset);
  if (cfg.steps < 1) {
    throw ConfigError("steps must be at least 1");
  }
  if (cfg.batch_size < 2) {
    throw ConfigError("batch_size must be at least 2");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (cfg.time_sampler != "uniform") {
    throw ConfigError("unsupported time sampler '" + cfg.time_sampler + "'");
  }
  if (cfg.log_interval < 1 || cfg.eval.interval < 1) {
    throw ConfigError("log and eval intervals must be positive");
  }
  if (cfg.weights.lambda_varreg < 0.0 || cfg.weights.lambda_align < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (cfg.source_kind != SourceKind::conditional_gaussian &&
      cfg.regularizer != RegularizerKind::none) {
    throw ConfigError("variance regularizers need a conditional_gaussian "
                      "source");
  }
  if (cfg.source_kind == SourceKind::fixed_gaussian &&
      cfg.weights.align_kind != AlignKind::none) {
    throw ConfigError("alignment needs a learnable source");
  }
  if (cfg.eval.samples < 2 || cfg.eval.euler_steps < 1 ||
      cfg.eval.projections < 1) {
    throw ConfigError("invalid evaluation settings");
  }
  if (cfg.reflow.pool_size < 2 || cfg.reflow.pool_refresh < 1 ||
      cfg.reflow.euler_steps < 1 || !(cfg.reflow.step_fraction > 0.0)) {
    throw ConfigError("invalid reflow settings");
  }
}

AdamHyper adam_hyper(const TrainConfig &cfg) {
  AdamHyper h = cfg.adam;
  h.learning_rate = cfg.learning_rate;
  return h;
}

Interpolation interpolate(const Eigen::MatrixXd &x0, const Eigen::MatrixXd &x1,
                          const Eigen::RowVectorXd &t) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols() ||
      t.size() != x0.cols()) {
    throw ConfigError("interpolate: shape mismatch");
  }
  if (!((t.array() >= 0.0).all() && (t.array() <= 1.0).all())) {
    throw DomainError("interpolation times must lie in [0, 1]");
  }
  Interpolation out;
  out.xt = (x0.array().rowwise() * (1.0 - t.array()) +
            x1.array().rowwise() * t.array())
               .matrix();
  out.delta = x1 - x0;
  return out;
}

LossAndGrad fm_residual_loss(const Eigen::MatrixXd &v,
                             const Eigen::MatrixXd &delta) {
  if (v.rows() != delta.rows() || v.cols() != delta.cols()) {
    throw ConfigError("fm loss: shape mismatch");
  }
  const auto n = static_cast<double>(v.cols());
  const Eigen::MatrixXd r = v - delta;
  return {r.squaredNorm() / n, 2.0 * r / n};
}

double total_loss(double fm, double reg, double align, const LossWeights &w) {
  double total = fm + w.lambda_varreg * reg;
  if (w.align_kind != AlignKind::none) {
    total += w.lambda_align * align;
  }
  return total;
}

TrainState make_train_state(const TrainConfig &cfg) {
  validate(cfg);
  SplitRng init = SplitRng(cfg.seed).split(streams::init);
  SplitRng flow_init = init.split(1);
  SplitRng source_init = init.split(2);
  TrainState st{make_flow_model(2, cfg.nets.flow_hidden, cfg.nets.flow_layers,
                                cfg.condition_injected, flow_init),
                make_source_model(cfg.source_kind, 2, cfg.nets.source_hidden,
                                  source_init),
                {},
                {},
                0};
  const AdamHyper h = adam_hyper(cfg);
  st.flow_adam = AdamState<double>(st.flow.net.num_params(), h);
  if (st.source.learnable()) {
    st.source_adam = AdamState<double>(st.source.generator->num_params(), h);
  }
  return st;
}

StepGradients compute_step_gradients(const TrainState &state,
                                     const ConditionedBatch &batch,
                                     const Eigen::RowVectorXd &t,
                                     const SourceSample &x0,
                                     const TrainConfig &cfg, bool decompose) {
  const auto &w = cfg.weights;
  const auto &draw = x0.draw;
  const Interpolation ip = interpolate(draw.x0, batch.x1, t);
  const auto fwd = flow_forward(state.flow, ip.xt, t, batch.c);
  const LossAndGrad fm = fm_residual_loss(fwd.output, ip.delta);
  if (!std::isfinite(fm.value)) {
    throw NumericError("flow matching loss is not finite at step " +
                       std::to_string(state.step + 1));
  }
  const auto fbwd = backward(state.flow.net, fwd.tape, fm.grad);

  StepGradients out;
  out.loss.fm = fm.value;
  out.flow = fbwd.params;

  if (state.source.kind != SourceKind::deterministic) {
    out.loss.sigma2_mean = draw.sigma2.mean();
    out.loss.sigma2_min = draw.sigma2.minCoeff();
    out.loss.sigma2_max = draw.sigma2.maxCoeff();
  }

  SourceGrad reg_grad;
  if (cfg.regularizer == RegularizerKind::varreg) {
    const LossAndGrad r = varreg_loss(draw.sigma2);
    out.loss.reg = r.value;
    // d/d log s = d/ds * s
    reg_grad.log_sigma2 =
        (w.lambda_varreg * r.grad.array() * draw.sigma2.array()).matrix();
  } else if (cfg.regularizer == RegularizerKind::standard_kl) {
    const KlLossAndGrad r = standard_kl_loss(draw.mu, draw.sigma2);
    out.loss.reg = r.value;
    reg_grad.mu = w.lambda_varreg * r.grad_mu;
    reg_grad.log_sigma2 =
        (w.lambda_varreg * r.grad_sigma2.array() * draw.sigma2.array())
            .matrix();
  }

  Eigen::MatrixXd align_grad;
  if (w.align_kind == AlignKind::cosine) {
    const LossAndGrad a = cosine_align_loss(draw.x0, batch.x1);
    out.loss.align = a.value;
    align_grad = w.lambda_align * a.grad;
  } else if (w.align_kind == AlignKind::mse) {
    const LossAndGrad a = mse_align_loss(draw.x0, batch.x1);
    out.loss.align = a.value;
    align_grad = w.lambda_align * a.grad;
  }
  out.loss.total = total_loss(out.loss.fm, out.loss.reg, out.loss.align, w);
  if (!std::isfinite(out.loss.total)) {
    throw NumericError("total loss is not finite at step " +
                       std::to_string(state.step + 1));
  }

  if (!state.source.learnable()) {
    return out;
  }

  // x_t = (1 - t) x0 + t x1 feeds the flow; delta = x1 - x0 is the target.
  const Eigen::MatrixXd xt_path =
      (fbwd.inputs.array().rowwise() * (1.0 - t.array())).matrix();
  const Eigen::MatrixXd &delta_path = fm.grad;

  SourceGrad g = reg_grad;
  g.x0 = xt_path;
  if (!w.stop_grad_delta) {
    g.x0 += delta_path;
  }
  if (align_grad.size() != 0) {
    g.x0 += align_grad;
  }
  out.source = source_backward(state.source, x0, g);

  if (decompose) {
    out.source_xt_path = source_backward(state.source, x0, {xt_path, {}, {}});
    out.source_delta_path =
        source_backward(state.source, x0, {delta_path, {}, {}});
    out.source_reg_path = source_backward(state.source, x0, reg_grad);
    out.source_align_path =
        align_grad.size() != 0
            ? source_backward(state.source, x0, {align_grad, {}, {}})
            : Eigen::VectorXd::Zero(out.source.size());
  }
  return out;
}

namespace {

Eigen::RowVectorXd draw_times(Eigen::Index n, SplitRng &rng) {
  Eigen::RowVectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i) = rng.uniform();
  }
  return t;
}

} // namespace

LossBreakdown train_step(TrainState &state, const ConditionedBatch &batch,
                         const TrainConfig &cfg, SplitRng &rng) {
  const Eigen::RowVectorXd t = draw_times(batch.size(), rng);
  const SourceSample x0 = sample_source(state.source, batch.c, rng);
  const StepGradients g = compute_step_gradients(state, batch, t, x0, cfg);
  adam_step(state.flow_adam, state.flow.net.mutable_params(), g.flow);
  if (state.source.learnable()) {
    adam_step(state.source_adam, state.source.generator->mutable_params(),
              g.source);
  }
  state.step += 1;
  return g.loss;
}

ConditionedBatch held_out_targets(const TrainConfig &cfg, Eigen::Index n) {
  SplitRng rng = SplitRng(cfg.seed).split(streams::eval_data);
  return sample_dataset(n, cfg.dataset, rng);
}

FidelityReport evaluate_fidelity(const FlowModel &flow,
                                 const SourceModel &source,
                                 const ConditionedBatch &targets,
                                 int euler_steps, int projections,
                                 SplitRng &rng, bool with_straightness) {
  SplitRng gen_rng = rng.split(1);
  SplitRng proj_rng = rng.split(2);
  const GeneratedBatch gen = generate_batch(
      flow, source, targets.c, euler_steps, gen_rng,
      with_straightness && euler_steps >= 2);
  FidelityReport rep;
  rep.sliced_w2 = sliced_wasserstein(gen.x1, targets.x1, projections, proj_rng);
  rep.energy_distance = energy_distance(gen.x1, targets.x1);
  if (gen.paths) {
    rep.straightness_mean = mean_straightness(*gen.paths);
  }
  return rep;
}

RunArtifacts train_run(const TrainConfig &cfg, const RunHooks &hooks) {
  RunArtifacts run{make_train_state(cfg), {}, {}};
  TrainState &state = run.state;
  const SplitRng root(cfg.seed);
  SplitRng data_rng = root.split(streams::data);
  SplitRng step_rng = root.split(streams::step);
  SplitRng metrics_rng = root.split(streams::eval_metrics);
  const ConditionedBatch eval_targets = held_out_targets(cfg, cfg.eval.samples);
  VarianceDetector detector(cfg.detector);

  double sum_fm = 0.0;
  double sum_reg = 0.0;
  double sum_align = 0.0;
  double sum_total = 0.0;
  long window = 0;
  for (long step = 1; step <= cfg.steps; ++step) {
    const ConditionedBatch batch =
        sample_dataset(cfg.batch_size, cfg.dataset, data_rng);
    LossBreakdown loss;
    try {
      loss = train_step(state, batch, cfg, step_rng);
    } catch (const NumericError &e) {
      if (hooks.on_failure) {
        hooks.on_failure(state, e.what());
      }
      throw;
    }
    sum_fm += loss.fm;
    sum_reg += loss.reg;
    sum_align += loss.align;
    sum_total += loss.total;
    ++window;

    const bool last = step == cfg.steps;
    if (step % cfg.log_interval == 0 || last) {
      MetricsRecord rec;
      rec.step = step;
      rec.loss_fm = sum_fm / window;
      rec.loss_reg = sum_reg / window;
      rec.loss_align = sum_align / window;
      rec.loss_total = sum_total / window;
      rec.sigma2_mean = loss.sigma2_mean;
      rec.sigma2_min = loss.sigma2_min;
      rec.sigma2_max = loss.sigma2_max;
      if (step % cfg.eval.interval == 0 || last) {
        SplitRng eval_rng = metrics_rng.split(static_cast<std::uint64_t>(step));
        const FidelityReport rep =
            evaluate_fidelity(state.flow, state.source, eval_targets,
                              cfg.eval.euler_steps, cfg.eval.projections,
                              eval_rng);
        rec.sliced_w2 = rep.sliced_w2;
        rec.energy_distance = rep.energy_distance;
        if (cfg.eval.euler_steps >= 2) {
          rec.straightness_mean = rep.straightness_mean;
        }
      }
      if (rec.sigma2_mean) {
        detector.update(*rec.sigma2_mean);
      }
      rec.collapse_flag = detector.flags().collapse;
      rec.explosion_flag = detector.flags().explosion;
      run.metrics.push_back(rec);
      if (hooks.on_record) {
        hooks.on_record(rec);
      }
      sum_fm = sum_reg = sum_align = sum_total = 0.0;
      window = 0;
    }
    if (hooks.on_checkpoint &&
        ((cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) ||
         last)) {
      hooks.on_checkpoint(state);
    }
  }
  run.flags = detector.flags();
  return run;
}

double flow_matching_update(FlowModel &flow, AdamState<double> &adam,
                            const Eigen::MatrixXd &x0,
                            const Eigen::MatrixXd &x1,
                            const Eigen::RowVectorXd &c,
                            const Eigen::RowVectorXd &t) {
  const Interpolation ip = interpolate(x0, x1, t);
  const auto fwd = flow_forward(flow, ip.xt, t, c);
  const LossAndGrad fm = fm_residual_loss(fwd.output, ip.delta);
  if (!std::isfinite(fm.value)) {
    throw NumericError("flow matching loss is not finite");
  }
  const auto bwd = backward(flow.net, fwd.tape, fm.grad);
  adam_step(adam, flow.net.mutable_params(), bwd.params);
  return fm.value;
}

ReflowResult reflow_finetune(FlowModel &flow, const SourceModel &source,
                             const TrainConfig &cfg, SplitRng &rng) {
  validate(cfg);
  const auto &rc = cfg.reflow;
  ReflowResult res;
  res.steps = std::max<long>(
      1, std::lround(static_cast<double>(cfg.steps) * rc.step_fraction));
  AdamState<double> adam(flow.net.num_params(), adam_hyper(cfg));
  // Pairs always come from the flow as it was before fine-tuning.
  const FlowModel teacher = flow;
  SplitRng data_rng = rng.split(1);
  SplitRng pool_rng = rng.split(2);
  SplitRng batch_rng = rng.split(3);

  Eigen::MatrixXd pool_x0;
  Eigen::MatrixXd pool_x1;
  Eigen::RowVectorXd pool_c;
  const Eigen::Index b = cfg.batch_size;
  Eigen::MatrixXd x0(2, b);
  Eigen::MatrixXd x1(2, b);
  Eigen::RowVectorXd c(b);
  Eigen::RowVectorXd t(b);
  for (long step = 0; step < res.steps; ++step) {
    if (step % rc.pool_refresh == 0) {
      const ConditionedBatch data = sample_dataset(rc.pool_size, cfg.dataset,
                                                   data_rng);
      const GeneratedBatch gen =
          generate_batch(teacher, source, data.c, rc.euler_steps, pool_rng);
      pool_x0 = gen.source.x0;
      pool_x1 = gen.x1;
      pool_c = data.c;
    }
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto j = static_cast<Eigen::Index>(
          batch_rng.below(static_cast<std::uint64_t>(pool_c.size())));
      x0.col(i) = pool_x0.col(j);
      x1.col(i) = pool_x1.col(j);
      c(i) = pool_c(j);
      t(i) = batch_rng.uniform();
    }
    res.final_fm = flow_matching_update(flow, adam, x0, x1, c, t);
  }
  return res;
}

} // namespace csfm
