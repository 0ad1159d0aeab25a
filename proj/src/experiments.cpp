#include "csfm/experiments.hpp"

#include <iostream>

#include "csfm/errors.hpp"
#include "csfm/plot.hpp"
#include "csfm/sampler.hpp"

namespace csfm {

namespace {

// Regularizer weight shared by every toy preset with a VarReg or KL term.
constexpr double cToyRegWeight = 1.0;

TrainConfig base_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.dataset.family = DatasetFamily::eight_gaussians;
  cfg.dataset.condition_mode = ConditionMode::polar_angle;
  return cfg;
}

void use_varreg(TrainConfig &cfg, double weight) {
  cfg.source_kind = SourceKind::conditional_gaussian;
  cfg.regularizer = RegularizerKind::varreg;
  cfg.weights.lambda_varreg = weight;
}

void set_dataset(TrainConfig &cfg, DatasetFamily family) {
  cfg.dataset.family = family;
  cfg.dataset.condition_mode = family == DatasetFamily::two_moons
                                   ? ConditionMode::x_coordinate
                                   : ConditionMode::polar_angle;
}

} // namespace

const std::vector<std::string> &preset_names() {
  static const std::vector<std::string> names{
      "fig2a",       "fig2b",         "fig2c",          "fig2d",
      "fig2e",       "uncond_flow",   "illcond_l2",     "illcond_xcoord",
      "stopgrad_explode", "gradvar",  "fewstep",        "reflow"};
  return names;
}

const std::vector<int> &default_sweep_steps() {
  static const std::vector<int> steps{2, 3, 5, 10, 50};
  return steps;
}

Preset make_preset(const std::string &name, std::uint64_t seed,
                   std::optional<DatasetFamily> dataset) {
  Preset p;
  p.name = name;
  TrainConfig &cfg = p.config;
  cfg = base_config(seed);
  const bool dataset_free = name.rfind("fig2", 0) == 0 || name == "gradvar" ||
                            name == "fewstep" || name == "reflow" ||
                            name == "uncond_flow" ||
                            name == "stopgrad_explode";
  if (name == "fig2a") {
    cfg.source_kind = SourceKind::fixed_gaussian;
  } else if (name == "fig2b") {
    cfg.source_kind = SourceKind::deterministic;
  } else if (name == "fig2c") {
    cfg.source_kind = SourceKind::conditional_gaussian;
  } else if (name == "fig2d") {
    cfg.source_kind = SourceKind::conditional_gaussian;
    cfg.regularizer = RegularizerKind::standard_kl;
    cfg.weights.lambda_varreg = cToyRegWeight;
  } else if (name == "fig2e") {
    use_varreg(cfg, cToyRegWeight);
  } else if (name == "uncond_flow") {
    use_varreg(cfg, cToyRegWeight);
    cfg.condition_injected = false;
  } else if (name == "illcond_l2") {
    use_varreg(cfg, cToyRegWeight);
    cfg.dataset.condition_mode = ConditionMode::l2_norm;
  } else if (name == "illcond_xcoord") {
    use_varreg(cfg, cToyRegWeight);
    cfg.dataset.condition_mode = ConditionMode::x_coordinate;
  } else if (name == "stopgrad_explode") {
    use_varreg(cfg, 1.0);
    cfg.weights.stop_grad_delta = true;
    cfg.condition_injected = false;
  } else if (name == "gradvar") {
    use_varreg(cfg, cToyRegWeight);
    p.gradvar = true;
  } else if (name == "fewstep") {
    use_varreg(cfg, cToyRegWeight);
    p.sweep = true;
  } else if (name == "reflow") {
    use_varreg(cfg, cToyRegWeight);
    p.reflow = true;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  if (dataset) {
    if (!dataset_free) {
      throw ConfigError("preset '" + name + "' fixes its dataset");
    }
    set_dataset(cfg, *dataset);
  }
  validate(cfg);
  return p;
}

Preset preset_from_config(const TrainConfig &cfg) {
  Preset p;
  p.name = "config";
  p.config = cfg;
  return p;
}

namespace {

void dump_state(const fs::path &dir, const TrainState &state,
                const std::string &reason) {
  write_text(dir / "error.txt", reason + "\nstep " +
                                    std::to_string(state.step) + "\n");
  write_checkpoint(dir / "flow_dump.bin", state.flow.net);
  if (state.source.learnable()) {
    write_checkpoint(dir / "source_dump.bin", *state.source.generator);
  }
}

void write_final_checkpoints(const fs::path &dir, const TrainState &state,
                             const std::string &tag) {
  write_checkpoint(dir / "checkpoints" / ("flow_" + tag + ".bin"),
                   state.flow.net);
  if (state.source.learnable()) {
    write_checkpoint(dir / "checkpoints" / ("source_" + tag + ".bin"),
                     *state.source.generator);
  }
}

Eigen::RowVectorXd condition_grid(const Eigen::RowVectorXd &c, int n) {
  return Eigen::RowVectorXd::LinSpaced(n, c.minCoeff(), c.maxCoeff());
}

void write_sample_exports(const fs::path &dir, const TrainConfig &cfg,
                          const FlowModel &flow, const SourceModel &source) {
  const ConditionedBatch targets = held_out_targets(cfg, cSampleExportCount);
  SplitRng rng = SplitRng(cfg.seed).split(streams::analysis).split(1);
  const GeneratedBatch gen = generate_batch(
      flow, source, targets.c, cfg.eval.euler_steps, rng, true);
  write_text(dir / "samples.csv",
             samples_csv(targets, gen.source, gen.x1, targets.c));
  write_text(dir / "trajectories.csv",
             trajectories_csv(*gen.paths, cTrajectoryExportCount));
  const Eigen::RowVectorXd grid = condition_grid(targets.c, 64);
  write_text(dir / "source_grid.csv",
             source_grid_csv(grid, source_moments(source, grid)));
}

void log_record(const MetricsRecord &r) {
  std::cerr << "step " << r.step << " fm " << format_double(r.loss_fm)
            << " total " << format_double(r.loss_total);
  if (r.sigma2_mean) {
    std::cerr << " sigma2 " << format_double(*r.sigma2_mean);
  }
  if (r.sliced_w2) {
    std::cerr << " sw2 " << format_double(*r.sliced_w2);
  }
  std::cerr << '\n';
}

} // namespace

RunOutcome run_preset(const Preset &preset, const fs::path &dir,
                      bool verbose) {
  const TrainConfig &cfg = preset.config;
  validate(cfg);
  fs::create_directories(dir);
  write_config(dir / "config.json", cfg);

  std::vector<MetricsRecord> partial;
  RunHooks hooks;
  hooks.on_record = [&](const MetricsRecord &r) {
    partial.push_back(r);
    if (verbose) {
      log_record(r);
    }
  };
  hooks.on_checkpoint = [&](const TrainState &state) {
    if (cfg.checkpoint_interval > 0 &&
        state.step % cfg.checkpoint_interval == 0) {
      write_final_checkpoints(dir, state, "step" + std::to_string(state.step));
    }
    if (state.step == cfg.steps) {
      write_final_checkpoints(dir, state, "final");
    }
  };
  hooks.on_failure = [&](const TrainState &state, const std::string &why) {
    write_text(dir / "metrics.csv", metrics_csv(partial));
    dump_state(dir / "failure", state, why);
  };

  RunArtifacts run = train_run(cfg, hooks);
  write_text(dir / "metrics.csv", metrics_csv(run.metrics));
  write_sample_exports(dir, cfg, run.state.flow, run.state.source);
  const PlotReport plots = emit_plots(dir);
  if (verbose) {
    for (const auto &n : plots.notices) {
      std::cerr << n << '\n';
    }
  }

  if (preset.sweep) {
    sweep_steps(dir, default_sweep_steps());
  }
  if (preset.gradvar) {
    gradvar_analysis(dir);
  }
  if (preset.reflow) {
    reflow_analysis(dir);
  }
  return {dir, std::move(run.metrics), run.flags};
}

LoadedRun load_run(const fs::path &dir, const std::string &flow_checkpoint) {
  const auto cfg_path = dir / "config.json";
  if (!fs::exists(cfg_path)) {
    throw MissingArtifact("missing " + cfg_path.string());
  }
  LoadedRun run;
  run.config = read_config(cfg_path);
  const auto flow_path = dir / flow_checkpoint;
  if (!fs::exists(flow_path)) {
    throw MissingArtifact("missing " + flow_path.string());
  }
  run.flow = {read_checkpoint(flow_path), run.config.condition_injected};
  if (run.flow.net.has_condition() != run.config.condition_injected) {
    throw ConfigError("flow checkpoint does not match condition_injected");
  }
  run.source.kind = run.config.source_kind;
  run.source.output_dim = 2;
  if (run.config.source_kind != SourceKind::fixed_gaussian) {
    const auto src_path = dir / "checkpoints" / "source_final.bin";
    if (!fs::exists(src_path)) {
      throw MissingArtifact("missing " + src_path.string());
    }
    run.source.generator = read_checkpoint(src_path);
  }
  return run;
}

std::vector<StepsDistance> step_sweep(const LoadedRun &run,
                                      const std::vector<int> &steps) {
  const ConditionedBatch targets = held_out_targets(run.config, cSweepSamples);
  const SplitRng base = SplitRng(run.config.seed).split(streams::analysis).split(2);
  std::vector<StepsDistance> rows;
  for (int s : steps) {
    SplitRng rng = base;
    const FidelityReport rep = evaluate_fidelity(
        run.flow, run.source, targets, s, cSweepProjections, rng, false);
    rows.push_back({s, rep.sliced_w2, rep.energy_distance});
  }
  return rows;
}

std::vector<StepsDistance> sweep_steps(const fs::path &dir,
                                       const std::vector<int> &steps) {
  const LoadedRun run = load_run(dir);
  auto rows = step_sweep(run, steps);
  write_text(dir / "steps_vs_distance.csv", steps_vs_distance_csv(rows));
  return rows;
}

GradVarianceProfile probe_gradient_variance(const LoadedRun &run) {
  SplitRng rng = SplitRng(run.config.seed).split(streams::analysis).split(3);
  SplitRng pool_rng = rng.split(1);
  SplitRng probe_rng = rng.split(2);
  const ConditionedBatch pool =
      sample_dataset(cProbeSamples, run.config.dataset, pool_rng);
  return gradient_variance_probe(run.flow, run.source, pool, cProbeBins,
                                 hidden_weight_layers(run.flow.net),
                                 cProbeSamples, probe_rng);
}

std::vector<BinEstimate> estimate_intrinsic_variance(const LoadedRun &run) {
  SplitRng rng = SplitRng(run.config.seed).split(streams::analysis).split(4);
  SplitRng data_rng = rng.split(1);
  SplitRng draw_rng = rng.split(2);
  const ConditionedBatch data =
      sample_dataset(cIntrinsicTriples, run.config.dataset, data_rng);
  Eigen::RowVectorXd t(data.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t(i) = draw_rng.uniform();
  }
  const SourceDraw x0 = sample_source(run.source, data.c, draw_rng).draw;
  const Interpolation ip = interpolate(x0.x0, data.x1, t);
  // A conditional flow sees (x_t, c), so neighbourhoods are taken there.
  Eigen::MatrixXd features = ip.xt;
  if (run.config.condition_injected) {
    features.conservativeResize(3, Eigen::NoChange);
    features.row(2) = data.c;
  }
  return intrinsic_variance_knn(features, t, ip.delta, cProbeBins,
                                cIntrinsicNeighbours);
}

GradVarianceProfile gradvar_analysis(const fs::path &dir) {
  const LoadedRun run = load_run(dir);
  GradVarianceProfile prof = probe_gradient_variance(run);
  write_text(dir / "gradvar.csv", gradvar_csv(prof));
  write_text(dir / "intrinsic_variance.csv",
             intrinsic_variance_csv(estimate_intrinsic_variance(run)));
  return prof;
}

ReflowOutcome reflow_analysis(const fs::path &dir) {
  LoadedRun run = load_run(dir);
  ReflowOutcome out;
  out.before = step_sweep(run, default_sweep_steps());
  SplitRng rng = SplitRng(run.config.seed).split(streams::reflow);
  reflow_finetune(run.flow, run.source, run.config, rng);
  out.after = step_sweep(run, default_sweep_steps());
  const auto rdir = dir / "reflow";
  write_checkpoint(rdir / "checkpoints" / "flow_final.bin", run.flow.net);
  write_text(rdir / "steps_vs_distance_pre.csv",
             steps_vs_distance_csv(out.before));
  write_text(rdir / "steps_vs_distance.csv", steps_vs_distance_csv(out.after));
  return out;
}

} // namespace csfm
