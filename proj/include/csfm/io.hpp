#ifndef CSFM_IO_HPP_
#define CSFM_IO_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "csfm/datasets.hpp"
#include "csfm/flow.hpp"
#include "csfm/metrics.hpp"
#include "csfm/nnet/dense_net.hpp"
#include "csfm/sampler.hpp"
#include "csfm/source.hpp"

namespace csfm {

namespace fs = std::filesystem;

// Shortest round-trip decimal form, independent of the locale.
std::string format_double(double v);
std::string format_optional(const std::optional<double> &v);

nlohmann::ordered_json config_to_json(const TrainConfig &cfg);
TrainConfig config_from_json(const nlohmann::json &j);
TrainConfig read_config(const fs::path &path);
void write_config(const fs::path &path, const TrainConfig &cfg);

void write_text(const fs::path &path, const std::string &text);
std::string read_text(const fs::path &path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a named column; throws ConfigError when absent.
  std::size_t column(const std::string &name) const;
};

CsvTable read_csv(const fs::path &path);

std::string metrics_csv(const std::vector<MetricsRecord> &records);

// kind, c, x, y
std::string dataset_csv(const ConditionedBatch &batch,
                        const std::string &kind);
std::string samples_csv(const ConditionedBatch &targets,
                        const SourceDraw &source, const Eigen::MatrixXd &x1,
                        const Eigen::RowVectorXd &c);
// sample_id, t, x, y, c
std::string trajectories_csv(const TrajectoryBatch &paths,
                             Eigen::Index max_samples);
// c, mu_x, mu_y, sigma2_x, sigma2_y
std::string source_grid_csv(const Eigen::RowVectorXd &c,
                            const SourceDraw &moments);
// t_bin_lo, t_bin_hi, grad_variance, count
std::string gradvar_csv(const GradVarianceProfile &prof);
// t_bin_lo, t_bin_hi, intrinsic_variance, count
std::string intrinsic_variance_csv(const std::vector<BinEstimate> &bins);

struct StepsDistance {
  int steps = 0;
  double sliced_w2 = 0.0;
  double energy_distance = 0.0;
};
// steps, sliced_w2, energy_distance
std::string steps_vs_distance_csv(const std::vector<StepsDistance> &rows);

/*
 * Flat little-endian network checkpoint:
 *   8 bytes   magic "CSFMNET1"
 *   u64       number of layer widths L, then L x u64 widths
 *   u64       embedding flags (bit 0 time, bit 1 condition)
 *   u64       parameter count P, then P x f64 parameters
 * Parameters follow DenseNet's flat layout (per layer: column-major weight,
 * bias; then time and condition projections).
 */
void write_checkpoint(const fs::path &path, const DenseNet<double> &net);
DenseNet<double> read_checkpoint(const fs::path &path);

} // namespace csfm

#endif // CSFM_IO_HPP_
