#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "csfm/errors.hpp"
#include "csfm/experiments.hpp"
#include "csfm/plot.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  cOk = 0,
  cOther = 1,
  cUsage = 2,
  cNumeric = 3,
  cMissing = 4,
};

fs::path output_root() {
  const char *env = std::getenv("CSFM_OUT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

std::vector<int> parse_steps(const std::string &text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception &) {
      throw csfm::ConfigError("bad step count '" + item + "'");
    }
    if (used != item.size() || v < 1) {
      throw csfm::ConfigError("bad step count '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw csfm::ConfigError("no step counts given");
  }
  return out;
}

template <typename Fn> int guarded(Fn &&fn) {
  try {
    fn();
    return cOk;
  } catch (const csfm::ConfigError &e) {
    std::cerr << "error: " << e.what() << '\n';
    return cUsage;
  } catch (const csfm::NumericError &e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return cNumeric;
  } catch (const csfm::MissingArtifact &e) {
    std::cerr << "missing artifact: " << e.what() << '\n';
    return cMissing;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return cOther;
  }
}

void print_sweep(const std::vector<csfm::StepsDistance> &rows) {
  std::cout << csfm::steps_vs_distance_csv(rows);
}

struct RunRequest {
  csfm::Preset preset;
  fs::path dir;
};

// Runs independent requests on up to `jobs` threads; returns the worst code.
int dispatch(const std::vector<RunRequest> &reqs, int jobs, bool verbose) {
  std::atomic<std::size_t> next{0};
  std::mutex io;
  std::vector<int> codes(reqs.size(), cOk);
  auto worker = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      codes[i] = guarded([&] {
        const auto out = csfm::run_preset(reqs[i].preset, reqs[i].dir,
                                          verbose && jobs == 1);
        std::lock_guard lock(io);
        std::cout << out.dir.string() << " collapse=" << out.flags.collapse
                  << " explosion=" << out.flags.explosion << '\n';
      });
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::min(n, reqs.size()); ++k) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto &t : pool) {
    t.join();
  }
  int worst = cOk;
  for (int c : codes) {
    worst = std::max(worst, c);
  }
  return worst;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Conditional flow matching with a learnable source"};
  app.require_subcommand(1);

  // run
  auto *run = app.add_subcommand("run", "Train a preset or config");
  std::string preset_name;
  std::string config_path;
  std::uint64_t seed = 0;
  int seeds = 1;
  int jobs = 1;
  long steps_override = 0;
  std::string dataset_name;
  std::string out_dir;
  bool quiet = false;
  auto *opt_preset = run->add_option("--preset", preset_name, "Preset name");
  auto *opt_config =
      run->add_option("--config", config_path, "Path to a config.json");
  opt_preset->excludes(opt_config);
  run->add_option("--seed", seed, "First seed");
  run->add_option("--seeds", seeds, "Number of consecutive seeds")
      ->check(CLI::PositiveNumber);
  run->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  run->add_option("--steps", steps_override, "Override training steps")
      ->check(CLI::PositiveNumber);
  run->add_option("--dataset", dataset_name, "eight_gaussians | two_moons");
  run->add_option("--out", out_dir, "Run directory (single run only)");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  auto *sweep = app.add_subcommand("sweep-steps", "Distance vs Euler steps");
  std::string run_dir;
  std::string steps_text = "2,3,5,10,50";
  sweep->add_option("--run", run_dir, "Run directory")->required();
  sweep->add_option("--steps", steps_text, "Comma-separated step counts");

  auto *gradvar = app.add_subcommand("gradvar", "Gradient-variance probe");
  gradvar->add_option("--run", run_dir, "Run directory")->required();

  auto *reflow = app.add_subcommand("reflow", "Reflow fine-tuning analysis");
  reflow->add_option("--run", run_dir, "Run directory")->required();

  auto *plot = app.add_subcommand("plot", "Render SVGs from run CSVs");
  plot->add_option("--run", run_dir, "Run directory")->required();

  auto *list = app.add_subcommand("list", "List presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? cOk : cUsage;
  }

  if (*list) {
    for (const auto &n : csfm::preset_names()) {
      std::cout << n << '\n';
    }
    return cOk;
  }

  if (*run) {
    if (preset_name.empty() && config_path.empty()) {
      std::cerr << "error: run needs --preset or --config\n";
      return cUsage;
    }
    std::vector<RunRequest> reqs;
    const int code = guarded([&] {
      std::optional<csfm::DatasetFamily> family;
      if (!dataset_name.empty()) {
        family = csfm::parse_dataset_family(dataset_name);
      }
      if (!out_dir.empty() && seeds > 1) {
        throw csfm::ConfigError("--out needs a single seed");
      }
      for (int k = 0; k < seeds; ++k) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
        csfm::Preset p;
        if (!config_path.empty()) {
          csfm::TrainConfig cfg = csfm::read_config(config_path);
          if (k > 0 || run->count("--seed") > 0) {
            cfg.seed = s;
          }
          if (family) {
            throw csfm::ConfigError("--dataset conflicts with --config");
          }
          p = csfm::preset_from_config(cfg);
        } else {
          p = csfm::make_preset(preset_name, s, family);
        }
        if (steps_override > 0) {
          p.config.steps = steps_override;
        }
        fs::path dir = out_dir;
        if (dir.empty()) {
          std::string leaf = p.name;
          if (family) {
            leaf += "_" + csfm::to_string(*family);
          }
          dir = output_root() / leaf / ("seed" + std::to_string(p.config.seed));
        }
        reqs.push_back({std::move(p), dir});
      }
    });
    if (code != cOk) {
      return code;
    }
    return dispatch(reqs, jobs, !quiet);
  }

  if (*sweep) {
    return guarded([&] {
      print_sweep(csfm::sweep_steps(run_dir, parse_steps(steps_text)));
    });
  }
  if (*gradvar) {
    return guarded([&] {
      std::cout << csfm::gradvar_csv(csfm::gradvar_analysis(run_dir));
    });
  }
  if (*reflow) {
    return guarded([&] {
      const auto out = csfm::reflow_analysis(run_dir);
      std::cout << "before\n";
      print_sweep(out.before);
      std::cout << "after\n";
      print_sweep(out.after);
    });
  }
  if (*plot) {
    return guarded([&] {
      const auto rep = csfm::emit_plots(run_dir);
      for (const auto &n : rep.notices) {
        std::cerr << n << '\n';
      }
      for (const auto &p : rep.written) {
        std::cout << p.string() << '\n';
      }
    });
  }
  return cUsage;
}
