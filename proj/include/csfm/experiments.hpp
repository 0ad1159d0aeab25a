#ifndef CSFM_EXPERIMENTS_HPP_
#define CSFM_EXPERIMENTS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csfm/flow.hpp"
#include "csfm/io.hpp"
#include "csfm/metrics.hpp"

namespace csfm {

struct Preset {
  std::string name;
  TrainConfig config;
  bool sweep = false;
  bool gradvar = false;
  bool reflow = false;
};

// Stable catalog of preset names.
const std::vector<std::string> &preset_names();

// Throws ConfigError for an unknown name. `dataset` replaces the preset's
// default dataset (eight gaussians, polar angle) where the preset allows it.
Preset make_preset(const std::string &name, std::uint64_t seed,
                   std::optional<DatasetFamily> dataset = std::nullopt);

// Preset whose analyses are derived from a bare config (run --config).
Preset preset_from_config(const TrainConfig &cfg);

inline constexpr Eigen::Index cSampleExportCount = 1000;
inline constexpr Eigen::Index cTrajectoryExportCount = 200;
inline constexpr Eigen::Index cSweepSamples = 4096;
inline constexpr int cSweepProjections = 128;
inline constexpr Eigen::Index cProbeSamples = 20000;
inline constexpr int cProbeBins = 10;
inline constexpr Eigen::Index cIntrinsicTriples = 20000;
inline constexpr int cIntrinsicNeighbours = 32;

const std::vector<int> &default_sweep_steps();

struct RunOutcome {
  std::filesystem::path dir;
  std::vector<MetricsRecord> metrics;
  DetectorFlags flags;
};

/*
 * Trains the preset and writes config.json, metrics.csv, samples.csv,
 * trajectories.csv, source_grid.csv, checkpoints/ and plots/, followed by
 * the preset's analyses. On a numeric failure the partial metrics and a
 * state dump go to failure/ before the NumericError propagates.
 */
RunOutcome run_preset(const Preset &preset, const std::filesystem::path &dir,
                      bool verbose = false);

struct LoadedRun {
  TrainConfig config;
  FlowModel flow;
  SourceModel source;
};

// Throws MissingArtifact when config.json or a needed checkpoint is absent.
LoadedRun load_run(const std::filesystem::path &dir,
                   const std::string &flow_checkpoint =
                       "checkpoints/flow_final.bin");

// Distances of generated samples to held-out targets for each step count.
// The same source draws and projection directions are used for every entry.
std::vector<StepsDistance> step_sweep(const LoadedRun &run,
                                      const std::vector<int> &steps);
std::vector<StepsDistance> sweep_steps(const std::filesystem::path &dir,
                                       const std::vector<int> &steps);

GradVarianceProfile probe_gradient_variance(const LoadedRun &run);
std::vector<BinEstimate> estimate_intrinsic_variance(const LoadedRun &run);
// Writes gradvar.csv and intrinsic_variance.csv.
GradVarianceProfile gradvar_analysis(const std::filesystem::path &dir);

struct ReflowOutcome {
  std::vector<StepsDistance> before;
  std::vector<StepsDistance> after;
};
// Fine-tunes the final flow, writing reflow/checkpoints/flow_final.bin,
// reflow/steps_vs_distance_pre.csv and reflow/steps_vs_distance.csv.
ReflowOutcome reflow_analysis(const std::filesystem::path &dir);

} // namespace csfm

#endif // CSFM_EXPERIMENTS_HPP_
