#include "csfm/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "csfm/errors.hpp"

namespace csfm {

namespace {

constexpr std::array<Rgb, 5> cAnchors{{{68, 1, 84},
                                       {59, 82, 139},
                                       {33, 145, 140},
                                       {94, 201, 98},
                                       {253, 231, 37}}};

constexpr double cCanvas = 640.0;
constexpr double cMargin = 32.0;

std::string fixed2(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, 2);
  return std::string(buf.data(), res.ptr);
}

double to_number(const std::string &s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) {
    throw ConfigError("not a number: '" + s + "'");
  }
  return v;
}

struct Frame {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -std::numeric_limits<double>::infinity();
  double ymin = std::numeric_limits<double>::infinity();
  double ymax = -std::numeric_limits<double>::infinity();
  double cmin = std::numeric_limits<double>::infinity();
  double cmax = -std::numeric_limits<double>::infinity();

  void add(double x, double y, double c) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
    cmin = std::min(cmin, c);
    cmax = std::max(cmax, c);
  }

  // Equal scale on both axes.
  double scale() const {
    const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
    return (cCanvas - 2.0 * cMargin) / span;
  }
  double px(double x) const { return cMargin + (x - xmin) * scale(); }
  double py(double y) const { return cCanvas - cMargin - (y - ymin) * scale(); }
};

std::string header() {
  const std::string size = fixed2(cCanvas);
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + size +
         "\" height=\"" + size + "\" viewBox=\"0 0 " + size + ' ' + size +
         "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

} // namespace

Rgb colormap(double value, double lo, double hi) {
  double u = hi > lo ? (value - lo) / (hi - lo) : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  const double pos = u * static_cast<double>(cAnchors.size() - 1);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(pos),
                                       cAnchors.size() - 2);
  const double f = pos - static_cast<double>(k);
  const auto lerp = [f](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(
        std::lround(static_cast<double>(a) + f * (static_cast<double>(b) - a)));
  };
  const Rgb &a = cAnchors[k];
  const Rgb &b = cAnchors[k + 1];
  return {lerp(a.r, b.r), lerp(a.g, b.g), lerp(a.b, b.b)};
}

std::string to_hex(Rgb c) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s = "#";
  for (auto v : {c.r, c.g, c.b}) {
    s.push_back(digits[v >> 4]);
    s.push_back(digits[v & 0xf]);
  }
  return s;
}

std::string scatter_svg(const CsvTable &samples) {
  const auto ik = samples.column("kind");
  const auto ic = samples.column("c");
  const auto ix = samples.column("x");
  const auto iy = samples.column("y");
  Frame fr;
  for (const auto &row : samples.rows) {
    fr.add(to_number(row[ix]), to_number(row[iy]), to_number(row[ic]));
  }
  std::string out = header();
  for (const auto &row : samples.rows) {
    const double x = fr.px(to_number(row[ix]));
    const double y = fr.py(to_number(row[iy]));
    const std::string col =
        to_hex(colormap(to_number(row[ic]), fr.cmin, fr.cmax));
    const std::string &kind = row[ik];
    if (kind == "source") {
      constexpr double r = 3.0;
      out += "<path d=\"M" + fixed2(x - r) + ' ' + fixed2(y - r) + "L" +
             fixed2(x + r) + ' ' + fixed2(y + r) + "M" + fixed2(x - r) + ' ' +
             fixed2(y + r) + "L" + fixed2(x + r) + ' ' + fixed2(y - r) +
             "\" stroke=\"" + col + "\" stroke-width=\"1\"/>\n";
    } else if (kind == "generated") {
      out += "<circle cx=\"" + fixed2(x) + "\" cy=\"" + fixed2(y) +
             "\" r=\"2\" fill=\"" + col + "\"/>\n";
    } else {
      out += "<circle cx=\"" + fixed2(x) + "\" cy=\"" + fixed2(y) +
             "\" r=\"2.5\" fill=\"none\" stroke=\"" + col +
             "\" stroke-width=\"0.6\"/>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

std::string trajectory_svg(const CsvTable &trajectories) {
  const auto is = trajectories.column("sample_id");
  const auto it = trajectories.column("t");
  const auto ix = trajectories.column("x");
  const auto iy = trajectories.column("y");
  const auto ic = trajectories.column("c");
  Frame fr;
  // sample id -> (t, x, y) points; c per sample.
  std::map<long, std::vector<std::array<double, 3>>> paths;
  std::map<long, double> conds;
  for (const auto &row : trajectories.rows) {
    const double x = to_number(row[ix]);
    const double y = to_number(row[iy]);
    const double c = to_number(row[ic]);
    fr.add(x, y, c);
    const auto id = static_cast<long>(to_number(row[is]));
    paths[id].push_back({to_number(row[it]), x, y});
    conds[id] = c;
  }
  std::string out = header();
  for (auto &[id, pts] : paths) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto &a, const auto &b) { return a[0] < b[0]; });
    out += "<polyline fill=\"none\" stroke-width=\"0.8\" stroke=\"" +
           to_hex(colormap(conds[id], fr.cmin, fr.cmax)) + "\" points=\"";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (k > 0) {
        out += ' ';
      }
      out += fixed2(fr.px(pts[k][1])) + ',' + fixed2(fr.py(pts[k][2]));
    }
    out += "\"/>\n";
    const auto &first = pts.front();
    constexpr double r = 2.5;
    const double x = fr.px(first[1]);
    const double y = fr.py(first[2]);
    out += "<path d=\"M" + fixed2(x - r) + ' ' + fixed2(y - r) + "L" +
           fixed2(x + r) + ' ' + fixed2(y + r) + "M" + fixed2(x - r) + ' ' +
           fixed2(y + r) + "L" + fixed2(x + r) + ' ' + fixed2(y - r) +
           "\" stroke=\"black\" stroke-width=\"0.6\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

PlotReport emit_plots(const std::filesystem::path &run_dir) {
  const auto samples_path = run_dir / "samples.csv";
  const auto traj_path = run_dir / "trajectories.csv";
  for (const auto &p : {samples_path, traj_path}) {
    if (!std::filesystem::exists(p)) {
      throw MissingArtifact("missing " + p.string());
    }
  }
  PlotReport rep;
  const auto plots = run_dir / "plots";
  const auto scatter = plots / "scatter.svg";
  write_text(scatter, scatter_svg(read_csv(samples_path)));
  rep.written.push_back(scatter);

  const CsvTable traj = read_csv(traj_path);
  if (traj.header.empty() || traj.rows.empty()) {
    rep.notices.push_back("trajectories.csv is empty; trajectory plot skipped");
  } else {
    const auto path = plots / "trajectories.svg";
    write_text(path, trajectory_svg(traj));
    rep.written.push_back(path);
  }
  return rep;
}

} // namespace csfm
