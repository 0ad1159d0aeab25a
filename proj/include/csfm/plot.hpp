#ifndef CSFM_PLOT_HPP_
#define CSFM_PLOT_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csfm/io.hpp"

namespace csfm {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb &) const = default;
};

// Piecewise-linear viridis-like map; lo and hi land on the end colors.
Rgb colormap(double value, double lo, double hi);
std::string to_hex(Rgb c);

// Sources as crosses, generated points as dots, targets as open circles,
// all colored by condition. Input has columns kind, c, x, y.
std::string scatter_svg(const CsvTable &samples);
// One polyline per sample_id. Input has columns sample_id, t, x, y, c.
std::string trajectory_svg(const CsvTable &trajectories);

struct PlotReport {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> notices;
};

// Renders plots/scatter.svg and plots/trajectories.svg from the run's CSVs.
// Throws MissingArtifact when either CSV is absent.
PlotReport emit_plots(const std::filesystem::path &run_dir);

} // namespace csfm

#endif // CSFM_PLOT_HPP_
