#include "csfm/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "csfm/errors.hpp"

namespace csfm {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_optional(const std::optional<double> &v) {
  return v ? format_double(*v) : std::string();
}

namespace {

std::vector<Eigen::Index> index_list(const nlohmann::json &j) {
  std::vector<Eigen::Index> out;
  for (const auto &v : j) {
    out.push_back(v.get<Eigen::Index>());
  }
  return out;
}

template <typename T>
T get_or(const nlohmann::json &j, const char *key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace

nlohmann::ordered_json config_to_json(const TrainConfig &cfg) {
  nlohmann::ordered_json j;
  j["dataset"] = {{"family", to_string(cfg.dataset.family)},
                  {"condition_mode", to_string(cfg.dataset.condition_mode)},
                  {"mode_radius", cfg.dataset.mode_radius},
                  {"mode_std", cfg.dataset.mode_std},
                  {"moon_noise_std", cfg.dataset.moon_noise_std},
                  {"standardize", cfg.dataset.standardize}};
  j["source_kind"] = to_string(cfg.source_kind);
  j["regularizer"] = to_string(cfg.regularizer);
  j["loss_weights"] = {{"lambda_varreg", cfg.weights.lambda_varreg},
                       {"lambda_align", cfg.weights.lambda_align},
                       {"align_kind", to_string(cfg.weights.align_kind)},
                       {"stop_grad_delta", cfg.weights.stop_grad_delta}};
  j["condition_injected"] = cfg.condition_injected;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["time_sampler"] = cfg.time_sampler;
  j["seed"] = cfg.seed;
  j["log_interval"] = cfg.log_interval;
  j["checkpoint_interval"] = cfg.checkpoint_interval;
  j["adam"] = {{"beta1", cfg.adam.beta1},
               {"beta2", cfg.adam.beta2},
               {"epsilon", cfg.adam.epsilon}};
  j["networks"] = {{"flow_hidden", cfg.nets.flow_hidden},
                   {"flow_layers", cfg.nets.flow_layers},
                   {"source_hidden", cfg.nets.source_hidden}};
  j["eval"] = {{"interval", cfg.eval.interval},
               {"samples", cfg.eval.samples},
               {"euler_steps", cfg.eval.euler_steps},
               {"projections", cfg.eval.projections}};
  j["reflow"] = {{"step_fraction", cfg.reflow.step_fraction},
                 {"pool_size", cfg.reflow.pool_size},
                 {"pool_refresh", cfg.reflow.pool_refresh},
                 {"euler_steps", cfg.reflow.euler_steps}};
  j["detector"] = {{"collapse_below", cfg.detector.collapse_below},
                   {"explode_above", cfg.detector.explode_above},
                   {"persistence", cfg.detector.persistence}};
  return j;
}

TrainConfig config_from_json(const nlohmann::json &j) {
  TrainConfig cfg;
  try {
    const auto &d = j.at("dataset");
    cfg.dataset.family = parse_dataset_family(d.at("family").get<std::string>());
    cfg.dataset.condition_mode =
        parse_condition_mode(d.at("condition_mode").get<std::string>());
    cfg.dataset.mode_radius = get_or(d, "mode_radius", cfg.dataset.mode_radius);
    cfg.dataset.mode_std = get_or(d, "mode_std", cfg.dataset.mode_std);
    cfg.dataset.moon_noise_std =
        get_or(d, "moon_noise_std", cfg.dataset.moon_noise_std);
    cfg.dataset.standardize = get_or(d, "standardize", cfg.dataset.standardize);
    cfg.source_kind = parse_source_kind(j.at("source_kind").get<std::string>());
    cfg.regularizer =
        parse_regularizer_kind(j.at("regularizer").get<std::string>());
    if (j.contains("loss_weights")) {
      const auto &w = j.at("loss_weights");
      cfg.weights.lambda_varreg = get_or(w, "lambda_varreg", 0.0);
      cfg.weights.lambda_align = get_or(w, "lambda_align", 0.0);
      cfg.weights.align_kind =
          parse_align_kind(get_or<std::string>(w, "align_kind", "none"));
      cfg.weights.stop_grad_delta = get_or(w, "stop_grad_delta", false);
    }
    cfg.condition_injected =
        get_or(j, "condition_injected", cfg.condition_injected);
    cfg.steps = get_or(j, "steps", cfg.steps);
    cfg.batch_size = get_or(j, "batch_size", cfg.batch_size);
    cfg.learning_rate = get_or(j, "learning_rate", cfg.learning_rate);
    cfg.time_sampler = get_or(j, "time_sampler", cfg.time_sampler);
    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.log_interval = get_or(j, "log_interval", cfg.log_interval);
    cfg.checkpoint_interval =
        get_or(j, "checkpoint_interval", cfg.checkpoint_interval);
    if (j.contains("adam")) {
      const auto &a = j.at("adam");
      cfg.adam.beta1 = get_or(a, "beta1", cfg.adam.beta1);
      cfg.adam.beta2 = get_or(a, "beta2", cfg.adam.beta2);
      cfg.adam.epsilon = get_or(a, "epsilon", cfg.adam.epsilon);
    }
    if (j.contains("networks")) {
      const auto &n = j.at("networks");
      cfg.nets.flow_hidden = get_or(n, "flow_hidden", cfg.nets.flow_hidden);
      cfg.nets.flow_layers = get_or(n, "flow_layers", cfg.nets.flow_layers);
      if (n.contains("source_hidden")) {
        cfg.nets.source_hidden = index_list(n.at("source_hidden"));
      }
    }
    if (j.contains("eval")) {
      const auto &e = j.at("eval");
      cfg.eval.interval = get_or(e, "interval", cfg.eval.interval);
      cfg.eval.samples = get_or(e, "samples", cfg.eval.samples);
      cfg.eval.euler_steps = get_or(e, "euler_steps", cfg.eval.euler_steps);
      cfg.eval.projections = get_or(e, "projections", cfg.eval.projections);
    }
    if (j.contains("reflow")) {
      const auto &r = j.at("reflow");
      cfg.reflow.step_fraction =
          get_or(r, "step_fraction", cfg.reflow.step_fraction);
      cfg.reflow.pool_size = get_or(r, "pool_size", cfg.reflow.pool_size);
      cfg.reflow.pool_refresh =
          get_or(r, "pool_refresh", cfg.reflow.pool_refresh);
      cfg.reflow.euler_steps = get_or(r, "euler_steps", cfg.reflow.euler_steps);
    }
    if (j.contains("detector")) {
      const auto &d2 = j.at("detector");
      cfg.detector.collapse_below =
          get_or(d2, "collapse_below", cfg.detector.collapse_below);
      cfg.detector.explode_above =
          get_or(d2, "explode_above", cfg.detector.explode_above);
      cfg.detector.persistence =
          get_or(d2, "persistence", cfg.detector.persistence);
    }
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

TrainConfig read_config(const fs::path &path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void write_config(const fs::path &path, const TrainConfig &cfg) {
  write_text(path, config_to_json(cfg).dump(2) + "\n");
}

void write_text(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << text;
}

std::string read_text(const fs::path &path) {
  if (!fs::is_regular_file(path)) {
    throw MissingArtifact("missing file " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t CsvTable::column(const std::string &name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) {
      return i;
    }
  }
  throw ConfigError("csv has no column '" + name + "'");
}

namespace {
std::vector<std::string> split_line(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}
} // namespace

CsvTable read_csv(const fs::path &path) {
  std::istringstream in(read_text(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    return table;
  }
  table.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty()) {
      table.rows.push_back(split_line(line));
    }
  }
  return table;
}

std::string metrics_csv(const std::vector<MetricsRecord> &records) {
  std::string out = "step,loss_fm,loss_reg,loss_align,loss_total,sigma2_mean,"
                    "sigma2_min,sigma2_max,sliced_w2,energy_distance,"
                    "straightness_mean,collapse_flag,explosion_flag\n";
  for (const auto &r : records) {
    out += std::to_string(r.step) + ',' + format_double(r.loss_fm) + ',' +
           format_double(r.loss_reg) + ',' + format_double(r.loss_align) +
           ',' + format_double(r.loss_total) + ',' +
           format_optional(r.sigma2_mean) + ',' +
           format_optional(r.sigma2_min) + ',' +
           format_optional(r.sigma2_max) + ',' + format_optional(r.sliced_w2) +
           ',' + format_optional(r.energy_distance) + ',' +
           format_optional(r.straightness_mean) + ',' +
           (r.collapse_flag ? "1" : "0") + ',' +
           (r.explosion_flag ? "1" : "0") + '\n';
  }
  return out;
}

namespace {
void append_points(std::string &out, const std::string &kind,
                   const Eigen::RowVectorXd &c, const Eigen::MatrixXd &x) {
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    out += kind + ',' + format_double(c(i)) + ',' + format_double(x(0, i)) +
           ',' + format_double(x(1, i)) + '\n';
  }
}
} // namespace

std::string dataset_csv(const ConditionedBatch &batch,
                        const std::string &kind) {
  std::string out = "kind,c,x,y\n";
  append_points(out, kind, batch.c, batch.x1);
  return out;
}

std::string samples_csv(const ConditionedBatch &targets,
                        const SourceDraw &source, const Eigen::MatrixXd &x1,
                        const Eigen::RowVectorXd &c) {
  std::string out = "kind,c,x,y\n";
  append_points(out, "target", targets.c, targets.x1);
  append_points(out, "source", c, source.x0);
  append_points(out, "generated", c, x1);
  return out;
}

std::string trajectories_csv(const TrajectoryBatch &paths,
                             Eigen::Index max_samples) {
  std::string out = "sample_id,t,x,y,c\n";
  const Eigen::Index n = std::min(max_samples, paths.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < paths.states.size(); ++k) {
      out += std::to_string(i) + ',' + format_double(paths.times[k]) + ',' +
             format_double(paths.states[k](0, i)) + ',' +
             format_double(paths.states[k](1, i)) + ',' +
             format_double(paths.c(i)) + '\n';
    }
  }
  return out;
}

std::string source_grid_csv(const Eigen::RowVectorXd &c,
                            const SourceDraw &moments) {
  std::string out = "c,mu_x,mu_y,sigma2_x,sigma2_y\n";
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    out += format_double(c(i)) + ',' + format_double(moments.mu(0, i)) + ',' +
           format_double(moments.mu(1, i)) + ',' +
           format_double(moments.sigma2(0, i)) + ',' +
           format_double(moments.sigma2(1, i)) + '\n';
  }
  return out;
}

std::string gradvar_csv(const GradVarianceProfile &prof) {
  std::string out = "t_bin_lo,t_bin_hi,grad_variance,count\n";
  for (std::size_t b = 0; b < prof.variance.size(); ++b) {
    out += format_double(prof.edges[b]) + ',' +
           format_double(prof.edges[b + 1]) + ',' +
           format_optional(prof.variance[b]) + ',' +
           std::to_string(prof.counts[b]) + '\n';
  }
  return out;
}

std::string intrinsic_variance_csv(const std::vector<BinEstimate> &bins) {
  std::string out = "t_bin_lo,t_bin_hi,intrinsic_variance,count\n";
  for (const auto &b : bins) {
    out += format_double(b.lo) + ',' + format_double(b.hi) + ',' +
           format_optional(b.value) + ',' + std::to_string(b.count) + '\n';
  }
  return out;
}

std::string steps_vs_distance_csv(const std::vector<StepsDistance> &rows) {
  std::string out = "steps,sliced_w2,energy_distance\n";
  for (const auto &r : rows) {
    out += std::to_string(r.steps) + ',' + format_double(r.sliced_w2) + ',' +
           format_double(r.energy_distance) + '\n';
  }
  return out;
}

namespace {

constexpr char cMagic[8] = {'C', 'S', 'F', 'M', 'N', 'E', 'T', '1'};

void put_u64(std::string &buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

std::uint64_t get_u64(const std::string &buf, std::size_t &pos) {
  if (pos + 8 > buf.size()) {
    throw ConfigError("checkpoint is truncated");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
         << (8 * i);
  }
  pos += 8;
  return v;
}

} // namespace

void write_checkpoint(const fs::path &path, const DenseNet<double> &net) {
  std::string buf(cMagic, sizeof(cMagic));
  put_u64(buf, net.layer_dims().size());
  for (auto d : net.layer_dims()) {
    put_u64(buf, static_cast<std::uint64_t>(d));
  }
  put_u64(buf, (net.has_time() ? 1u : 0u) | (net.has_condition() ? 2u : 0u));
  put_u64(buf, static_cast<std::uint64_t>(net.num_params()));
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    put_u64(buf, std::bit_cast<std::uint64_t>(net.params()(i)));
  }
  write_text(path, buf);
}

DenseNet<double> read_checkpoint(const fs::path &path) {
  const std::string buf = read_text(path);
  if (buf.size() < sizeof(cMagic) ||
      std::memcmp(buf.data(), cMagic, sizeof(cMagic)) != 0) {
    throw ConfigError(path.string() + " is not a network checkpoint");
  }
  std::size_t pos = sizeof(cMagic);
  const auto ndims = get_u64(buf, pos);
  if (ndims < 2 || ndims > 1024) {
    throw ConfigError("checkpoint has an implausible layer count");
  }
  std::vector<Eigen::Index> dims;
  for (std::uint64_t i = 0; i < ndims; ++i) {
    dims.push_back(static_cast<Eigen::Index>(get_u64(buf, pos)));
  }
  const auto flags = get_u64(buf, pos);
  DenseNet<double> net(dims, {(flags & 1u) != 0, (flags & 2u) != 0});
  const auto count = get_u64(buf, pos);
  if (count != static_cast<std::uint64_t>(net.num_params())) {
    throw ConfigError("checkpoint parameter count does not match its header");
  }
  Eigen::VectorXd p(net.num_params());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = std::bit_cast<double>(get_u64(buf, pos));
  }
  net.set_params(p);
  return net;
}

} // namespace csfm
