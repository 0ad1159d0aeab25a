#include <gtest/gtest.h>

#include "csfm/errors.hpp"
#include "csfm/io.hpp"
#include "csfm/plot.hpp"
#include "csfm/sampler.hpp"
#include "support.hpp"

namespace csfm {

using testing::TempDir;
using testing::normal_matrix;

namespace {

TrainConfig random_config(SplitRng &rng) {
  TrainConfig cfg;
  cfg.dataset.family = rng.uniform() < 0.5 ? DatasetFamily::eight_gaussians
                                           : DatasetFamily::two_moons;
  cfg.dataset.condition_mode =
      cfg.dataset.family == DatasetFamily::two_moons
          ? ConditionMode::x_coordinate
          : static_cast<ConditionMode>(rng.below(3));
  cfg.dataset.mode_std = rng.uniform(0.0, 1.0);
  cfg.dataset.moon_noise_std = rng.uniform(0.0, 0.3);
  cfg.dataset.standardize = rng.uniform() < 0.5;
  cfg.source_kind = SourceKind::conditional_gaussian;
  cfg.regularizer = static_cast<RegularizerKind>(rng.below(3));
  cfg.weights.lambda_varreg = rng.uniform(0.0, 10.0);
  cfg.weights.lambda_align = rng.uniform(0.0, 2.0);
  cfg.weights.align_kind = static_cast<AlignKind>(rng.below(3));
  cfg.weights.stop_grad_delta = rng.uniform() < 0.5;
  cfg.condition_injected = rng.uniform() < 0.5;
  cfg.steps = 1 + static_cast<long>(rng.below(100000));
  cfg.batch_size = 2 + static_cast<Eigen::Index>(rng.below(1000));
  cfg.learning_rate = rng.uniform(1e-6, 1e-2);
  cfg.seed = rng.next_u64();
  cfg.log_interval = 1 + static_cast<long>(rng.below(500));
  cfg.checkpoint_interval = static_cast<long>(rng.below(5000));
  cfg.nets.flow_hidden = 1 + static_cast<Eigen::Index>(rng.below(128));
  cfg.nets.source_hidden = {1 + static_cast<Eigen::Index>(rng.below(64))};
  cfg.eval.euler_steps = 1 + static_cast<int>(rng.below(100));
  cfg.reflow.step_fraction = rng.uniform(0.01, 1.0);
  cfg.detector.persistence = 1 + static_cast<int>(rng.below(20));
  return cfg;
}

} // namespace

TEST(format, doubles_round_trip_and_use_dot) {
  SplitRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    const std::string s = format_double(v);
    EXPECT_EQ(std::stod(s), v);
    EXPECT_EQ(s.find(','), std::string::npos);
  }
  EXPECT_EQ(format_optional(std::nullopt), "");
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(config, json_round_trip_property) {
  SplitRng rng(2);
  TempDir dir("config");
  for (int i = 0; i < 200; ++i) {
    const TrainConfig cfg = random_config(rng);
    const auto j = config_to_json(cfg);
    const TrainConfig back = config_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(config_to_json(back).dump(), j.dump());
    write_config(dir.path() / "c.json", cfg);
    EXPECT_EQ(config_to_json(read_config(dir.path() / "c.json")).dump(), j.dump());
  }
}

TEST(config, invalid_json_is_rejected) {
  auto j = nlohmann::json::parse(config_to_json(TrainConfig{}).dump());
  j["source_kind"] = "uniform_disc";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = nlohmann::json::parse(config_to_json(TrainConfig{}).dump());
  j["regularizer"] = "varreg";
  EXPECT_THROW(config_from_json(j), ConfigError);
  EXPECT_THROW(read_config("/nonexistent/config.json"), MissingArtifact);
}

TEST(checkpoint, round_trip_is_bit_exact) {
  SplitRng rng(3);
  TempDir dir("ckpt");
  for (int i = 0; i < 20; ++i) {
    std::vector<Eigen::Index> dims{1 + Eigen::Index(rng.below(4))};
    const auto depth = 1 + rng.below(4);
    for (std::uint64_t l = 0; l < depth; ++l) {
      dims.push_back(1 + Eigen::Index(rng.below(9)));
    }
    DenseNet<double> net(dims, {rng.uniform() < 0.5, rng.uniform() < 0.5});
    net.set_params(normal_matrix(net.num_params(), 1, rng, 1e3).col(0));
    const auto path = dir.path() / ("n" + std::to_string(i) + ".bin");
    write_checkpoint(path, net);
    const auto back = read_checkpoint(path);
    EXPECT_EQ(back.layer_dims(), net.layer_dims());
    EXPECT_EQ(back.has_time(), net.has_time());
    EXPECT_EQ(back.has_condition(), net.has_condition());
    EXPECT_EQ(0, std::memcmp(back.params().data(), net.params().data(),
                             sizeof(double) * net.num_params()));
  }
  write_text(dir.path() / "junk.bin", "not a checkpoint at all");
  EXPECT_THROW(read_checkpoint(dir.path() / "junk.bin"), ConfigError);
}

TEST(csv, metrics_schema_and_missing_cells) {
  MetricsRecord r;
  r.step = 100;
  r.loss_fm = 1.5;
  r.loss_total = 1.5;
  r.sigma2_mean = 0.25;
  r.collapse_flag = true;
  const std::string csv = metrics_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "step,loss_fm,loss_reg,loss_align,loss_total,sigma2_mean,"
            "sigma2_min,sigma2_max,sliced_w2,energy_distance,"
            "straightness_mean,collapse_flag,explosion_flag");
  EXPECT_NE(csv.find("100,1.5,0,0,1.5,0.25,,,,,,1,0"), std::string::npos);
}

TEST(csv, steps_vs_distance_schema) {
  const std::string csv = steps_vs_distance_csv({{2, 0.5, 0.25}});
  EXPECT_EQ(csv, "steps,sliced_w2,energy_distance\n2,0.5,0.25\n");
}

TEST(csv, read_back) {
  TempDir dir("csv");
  write_text(dir.path() / "a.csv", "x,y\n1,2\n3,\n");
  const auto t = read_csv(dir.path() / "a.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "y"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "");
  EXPECT_EQ(t.column("y"), 1u);
  EXPECT_THROW(t.column("z"), ConfigError);
}

TEST(colormap, endpoints_and_linearity) {
  EXPECT_EQ(colormap(-3.0, -3.0, 5.0), (Rgb{68, 1, 84}));
  EXPECT_EQ(colormap(5.0, -3.0, 5.0), (Rgb{253, 231, 37}));
  EXPECT_EQ(colormap(-10.0, -3.0, 5.0), colormap(-3.0, -3.0, 5.0));
  EXPECT_EQ(colormap(1.0, -3.0, 5.0), (Rgb{33, 145, 140}));
  // Affine in the value: same relative position, same color.
  EXPECT_EQ(colormap(0.3, 0.0, 1.0), colormap(13.0, 10.0, 20.0));
  EXPECT_EQ(to_hex(Rgb{255, 0, 16}), "#ff0010");
}

namespace {

void write_fake_run(const fs::path &dir, bool with_paths) {
  SplitRng rng(4);
  ConditionedBatch targets = sample_dataset(20, DatasetSpec{}, rng);
  SourceDraw src;
  src.x0 = normal_matrix(2, 20, rng);
  const Eigen::MatrixXd gen = normal_matrix(2, 20, rng);
  write_text(dir / "samples.csv", samples_csv(targets, src, gen, targets.c));
  if (with_paths) {
    auto field = [](const Eigen::MatrixXd &x, double, const Eigen::RowVectorXd &) {
      return (-x).eval();
    };
    const auto paths = euler_integrate_field(field, src.x0, targets.c, 5);
    write_text(dir / "trajectories.csv", trajectories_csv(paths, 10));
  } else {
    write_text(dir / "trajectories.csv", "");
  }
}

} // namespace

TEST(plots, rendering_is_deterministic) {
  TempDir dir("plots");
  write_fake_run(dir.path(), true);
  const auto first = emit_plots(dir.path());
  ASSERT_EQ(first.written.size(), 2u);
  const std::string s1 = read_text(dir.path() / "plots" / "scatter.svg");
  const std::string t1 = read_text(dir.path() / "plots" / "trajectories.svg");
  emit_plots(dir.path());
  EXPECT_EQ(read_text(dir.path() / "plots" / "scatter.svg"), s1);
  EXPECT_EQ(read_text(dir.path() / "plots" / "trajectories.svg"), t1);
  // Crosses for sources, filled dots for generated, open circles for targets.
  EXPECT_NE(s1.find("<path d=\"M"), std::string::npos);
  EXPECT_NE(s1.find("r=\"2\" fill=\"#"), std::string::npos);
  EXPECT_NE(s1.find("fill=\"none\""), std::string::npos);
  EXPECT_NE(t1.find("<polyline"), std::string::npos);
}

TEST(plots, empty_trajectories_skip_with_notice) {
  TempDir dir("plots_empty");
  write_fake_run(dir.path(), false);
  const auto rep = emit_plots(dir.path());
  EXPECT_EQ(rep.written.size(), 1u);
  EXPECT_EQ(rep.notices.size(), 1u);
  EXPECT_TRUE(fs::exists(dir.path() / "plots" / "scatter.svg"));
  EXPECT_FALSE(fs::exists(dir.path() / "plots" / "trajectories.svg"));
}

TEST(plots, missing_inputs_raise) {
  TempDir dir("plots_missing");
  EXPECT_THROW(emit_plots(dir.path()), MissingArtifact);
}

} // namespace csfm
