#pragma once

// File formats: JSON for configs, scenario features, solver results and
// models; CSV for datasets, plans and tables. Every write goes through a
// temporary file and a rename so readers never see partial output.

#include "ipmc/core.hpp"
#include "ipmc/kinematics.hpp"
#include "ipmc/lto.hpp"
#include "ipmc/solver.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ipmc {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Files

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) {
      std::filesystem::remove(tmp);
      throw Error(ErrorKind::io, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "corrupt " + what + ": " + e.what());
  }
}

/// Pretty JSON with a trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Shortest text that reads back to the same double.
inline std::string fmt(double x) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), r.ptr);
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + '\n';
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Matrices

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(ErrorKind::io, name + " must be a non-empty array of rows");
  const std::size_t cols = j.front().size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorKind::io, name + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw Error(ErrorKind::io, name + " entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Config

namespace detail {

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "num_modalities", "num_subdurations", "frames_per_subduration", "frame_period_s", "bandwidths_hz",
      "total_bandwidth_hz", "noise_power_w", "power_budget_w", "data_volumes_bits", "d_min", "c_min", "delta_d",
      "delta_c", "alpha", "curvature_threshold_per_m", "wheelbase_m", "sci_floor", "rng_seed",
      "curvature_aggregation"};
  return keys;
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::invalid_argument, std::string("config field ") + key + " has the wrong type");
  }
}

}  // namespace detail

inline json config_to_json(const SystemConfig& c) {
  return json{{"num_modalities", c.num_modalities},
              {"num_subdurations", c.num_subdurations},
              {"frames_per_subduration", c.frames_per_subduration},
              {"frame_period_s", c.frame_period},
              {"bandwidths_hz", c.bandwidths},
              {"total_bandwidth_hz", c.total_bandwidth},
              {"noise_power_w", c.noise_power},
              {"power_budget_w", c.power_budget},
              {"data_volumes_bits", c.data_volumes},
              {"d_min", c.d_min},
              {"c_min", c.c_min},
              {"delta_d", c.delta_d},
              {"delta_c", c.delta_c},
              {"alpha", c.alpha},
              {"curvature_threshold_per_m", c.curvature_threshold},
              {"wheelbase_m", c.wheelbase},
              {"sci_floor", c.sci_floor},
              {"rng_seed", c.rng_seed},
              {"curvature_aggregation", c.curvature_aggregation == CurvatureAggregation::max ? "max" : "mean"}};
}

/// Missing keys keep their defaults; unknown keys and invalid values are
/// rejected.
inline SystemConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::invalid_argument, "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!detail::config_keys().count(key)) throw Error(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
  SystemConfig c;
  detail::read_key(j, "num_modalities", c.num_modalities);
  detail::read_key(j, "num_subdurations", c.num_subdurations);
  detail::read_key(j, "frames_per_subduration", c.frames_per_subduration);
  detail::read_key(j, "frame_period_s", c.frame_period);
  detail::read_key(j, "bandwidths_hz", c.bandwidths);
  detail::read_key(j, "total_bandwidth_hz", c.total_bandwidth);
  detail::read_key(j, "noise_power_w", c.noise_power);
  detail::read_key(j, "power_budget_w", c.power_budget);
  detail::read_key(j, "data_volumes_bits", c.data_volumes);
  detail::read_key(j, "d_min", c.d_min);
  detail::read_key(j, "c_min", c.c_min);
  detail::read_key(j, "delta_d", c.delta_d);
  detail::read_key(j, "delta_c", c.delta_c);
  detail::read_key(j, "alpha", c.alpha);
  detail::read_key(j, "curvature_threshold_per_m", c.curvature_threshold);
  detail::read_key(j, "wheelbase_m", c.wheelbase);
  detail::read_key(j, "sci_floor", c.sci_floor);
  detail::read_key(j, "rng_seed", c.rng_seed);
  std::string agg = "mean";
  detail::read_key(j, "curvature_aggregation", agg);
  if (agg == "max") c.curvature_aggregation = CurvatureAggregation::max;
  else if (agg != "mean") throw Error(ErrorKind::invalid_argument, "curvature_aggregation must be 'mean' or 'max'");
  require_valid(c);
  return c;
}

inline SystemConfig load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_text(path), "config " + path.string()));
}

inline std::string config_hash(const SystemConfig& c) { return fnv1a_hex(config_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Scenario features

inline json features_to_json(const ScenarioFeatures& f) {
  return json{{"volumes_bits", std::vector<double>(f.volumes.data(), f.volumes.data() + f.volumes.size())},
              {"sci_norm", matrix_to_json(f.sci_norm)},
              {"motion", f.motion},
              {"gains", matrix_to_json(f.gains)}};
}

inline ScenarioFeatures features_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::io, "features must be a JSON object");
  for (const char* key : {"volumes_bits", "sci_norm", "motion", "gains"})
    if (!j.contains(key)) throw Error(ErrorKind::io, std::string("features missing '") + key + "'");
  ScenarioFeatures f;
  try {
    const auto v = j.at("volumes_bits").get<std::vector<double>>();
    f.volumes = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    f.motion = j.at("motion").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("corrupt features: ") + e.what());
  }
  f.sci_norm = matrix_from_json(j.at("sci_norm"), "sci_norm");
  f.gains = matrix_from_json(j.at("gains"), "gains");
  validate_features(f);
  return f;
}

inline ScenarioFeatures load_features(const std::filesystem::path& path) {
  return features_from_json(parse_json(read_text(path), "features " + path.string()));
}

// ---------------------------------------------------------------------------
// Results

inline json allocation_to_json(const Allocation& a) {
  return json{{"d", matrix_to_json(a.d)}, {"c", matrix_to_json(a.c)}, {"p_w", matrix_to_json(a.p)}};
}

inline Allocation allocation_from_json(const json& j) {
  for (const char* key : {"d", "c", "p_w"})
    if (!j.contains(key)) throw Error(ErrorKind::io, std::string("allocation missing '") + key + "'");
  Allocation a{matrix_from_json(j.at("d"), "d"), matrix_from_json(j.at("c"), "c"), matrix_from_json(j.at("p_w"), "p_w")};
  if (a.d.rows() != a.c.rows() || a.d.cols() != a.c.cols() || a.d.rows() != a.p.rows() || a.d.cols() != a.p.cols())
    throw Error(ErrorKind::dimension, "dimension mismatch in allocation");
  return a;
}

/// Solver output without wall-clock time (that goes to a sidecar).
inline json result_to_json(const SolveResult& r) {
  return json{{"solver", r.solver},
              {"objective", r.objective},
              {"epigraph", r.epigraph},
              {"iterations", r.iterations},
              {"residuals", {{"max_rate_violation", r.max_rate_violation}, {"power_violation", r.power_violation}}},
              {"allocation", allocation_to_json(r.allocation)}};
}

// ---------------------------------------------------------------------------
// Model

inline constexpr const char* kModelFormat = "ipmc-mlp";
inline constexpr int kModelVersion = 1;

inline std::string widths_text(const std::vector<int>& w) {
  std::string s = "[";
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? ", " : "") + std::to_string(w[i]);
  return s + "]";
}

inline json model_to_json(const MlpModel& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layers.push_back({{"weight", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return json{{"format", kModelFormat},
              {"version", kModelVersion},
              {"num_modalities", m.num_modalities},
              {"gain_features", m.gain_features},
              {"widths", m.widths()},
              {"input_mean", vec(m.input_mean)},
              {"input_scale", vec(m.input_scale)},
              {"target_mean", vec(m.target_mean)},
              {"target_scale", vec(m.target_scale)},
              {"layers", layers}};
}

inline MlpModel model_from_json(const json& j) {
  MlpModel m;
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw Error(ErrorKind::io, "not a model file");
    if (j.at("version").get<int>() != kModelVersion)
      throw Error(ErrorKind::io, "unsupported model version " + std::to_string(j.at("version").get<int>()));
    m.num_modalities = j.at("num_modalities").get<int>();
    m.gain_features = j.at("gain_features").get<bool>();
    const auto widths = j.at("widths").get<std::vector<int>>();
    const auto expected = expected_widths(m.num_modalities, m.gain_features);
    if (widths != expected)
      throw Error(ErrorKind::dimension,
                  "width mismatch: expected " + widths_text(expected) + ", file has " + widths_text(widths));
    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.size() + 1 != expected.size())
      throw Error(ErrorKind::io, "corrupt model: layer count");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto w = layers[i].at("weight").get<std::vector<double>>();
      const auto b = layers[i].at("bias").get<std::vector<double>>();
      const int in = expected[i], out = expected[i + 1];
      if (w.size() != static_cast<std::size_t>(in) * out || b.size() != static_cast<std::size_t>(out))
        throw Error(ErrorKind::io, "corrupt model: layer " + std::to_string(i) + " size");
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::Map<const Vector>(b.data(), out)};
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.weight(r, c) = w[static_cast<std::size_t>(r) * in + c];
      m.layers.push_back(std::move(layer));
    }
    auto vec = [&](const char* key, int n) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (static_cast<int>(v.size()) != n) throw Error(ErrorKind::io, std::string("corrupt model: ") + key);
      return Vector(Eigen::Map<const Vector>(v.data(), n));
    };
    m.input_mean = vec("input_mean", expected.front());
    m.input_scale = vec("input_scale", expected.front());
    m.target_mean = vec("target_mean", expected.back());
    m.target_scale = vec("target_scale", expected.back());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("corrupt model: ") + e.what());
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const MlpModel& m) { atomic_write(path, dump(model_to_json(m))); }

inline MlpModel load_model(const std::filesystem::path& path) {
  return model_from_json(parse_json(read_text(path), "model " + path.string()));
}

// ---------------------------------------------------------------------------
// Dataset

inline std::vector<std::string> dataset_header(int num_modalities, bool gain_features) {
  std::vector<std::string> h;
  const auto idx = [](const char* p, int m) { return std::string(p) + std::to_string(m + 1); };
  for (int m = 0; m < num_modalities; ++m) h.push_back(idx("z_mbit_", m));
  for (int m = 0; m < num_modalities; ++m) h.push_back(idx("q_norm_", m));
  h.push_back("psi");
  if (gain_features)
    for (int m = 0; m < num_modalities; ++m) h.push_back(idx("gain_db_", m));
  for (const char* t : {"ln_d_", "ln_c_", "ln_p_"})
    for (int m = 0; m < num_modalities; ++m) h.push_back(idx(t, m));
  return h;
}

inline std::string dataset_to_csv(const Dataset& ds) {
  std::string out = csv_line(dataset_header(ds.num_modalities, ds.gain_features));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    std::vector<std::string> cells;
    for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) cells.push_back(fmt(ds.inputs(r, i)));
    for (Eigen::Index r = 0; r < ds.targets.rows(); ++r) cells.push_back(fmt(ds.targets(r, i)));
    out += csv_line(cells);
  }
  return out;
}

inline Dataset dataset_from_csv(const std::string& text, int num_modalities, bool gain_features) {
  Dataset ds;
  ds.num_modalities = num_modalities;
  ds.gain_features = gain_features;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line + "\n" != csv_line(dataset_header(num_modalities, gain_features)))
    throw Error(ErrorKind::io, "dataset header does not match the manifest");
  const int nx = feature_dim(num_modalities, gain_features);
  const int ny = target_dim(num_modalities);
  std::vector<double> values;
  long rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t start = 0;
    int count = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      double v = 0.0;
      const auto r = std::from_chars(line.data() + start, line.data() + end, v);
      if (r.ec != std::errc() || r.ptr != line.data() + end)
        throw Error(ErrorKind::io, "bad number in dataset row " + std::to_string(rows + 1));
      values.push_back(v);
      ++count;
      start = end + 1;
    }
    if (count != nx + ny) throw Error(ErrorKind::io, "wrong column count in dataset row " + std::to_string(rows + 1));
    ++rows;
  }
  ds.inputs.resize(nx, rows);
  ds.targets.resize(ny, rows);
  for (long i = 0; i < rows; ++i)
    for (int k = 0; k < nx + ny; ++k) {
      const double v = values[static_cast<std::size_t>(i) * (nx + ny) + k];
      if (k < nx) ds.inputs(k, i) = v;
      else ds.targets(k - nx, i) = v;
    }
  return ds;
}

struct DatasetManifest {
  int num_modalities = 2;
  bool gain_features = false;
  long samples = 0;
  long train_size = 0;
  int scenarios = 0;
  int skipped_scenarios = 0;
  std::uint64_t seed = 0;
  std::string csv_file;
};

inline json manifest_to_json(const DatasetManifest& m) {
  return json{{"num_modalities", m.num_modalities},
              {"gain_features", m.gain_features},
              {"feature_dim", feature_dim(m.num_modalities, m.gain_features)},
              {"target_dim", target_dim(m.num_modalities)},
              {"samples", m.samples},
              {"train_size", m.train_size},
              {"test_size", m.samples - m.train_size},
              {"scenarios", m.scenarios},
              {"skipped_scenarios", m.skipped_scenarios},
              {"seed", m.seed},
              {"csv_file", m.csv_file}};
}

inline DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.num_modalities = j.at("num_modalities").get<int>();
    m.gain_features = j.at("gain_features").get<bool>();
    m.samples = j.at("samples").get<long>();
    m.train_size = j.at("train_size").get<long>();
    m.scenarios = j.at("scenarios").get<int>();
    m.skipped_scenarios = j.at("skipped_scenarios").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.csv_file = j.at("csv_file").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("corrupt dataset manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Plans

inline std::string plan_to_csv(const TrajectoryPlan& plan) {
  std::string out = csv_line({"l", "a", "e", "omega", "v", "delta"});
  for (std::size_t l = 0; l < plan.controls.size(); ++l) {
    const auto& s = plan.states[l];
    const auto& u = plan.controls[l];
    out += csv_line({std::to_string(l + 1), fmt(s.a), fmt(s.e), fmt(s.omega), fmt(u.v), fmt(u.delta)});
  }
  return out;
}

inline std::vector<RobotState> waypoints_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "l,a,e,omega") throw Error(ErrorKind::io, "waypoint header must be l,a,e,omega");
  std::vector<RobotState> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 4> v{};
    std::size_t start = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      const auto r = std::from_chars(line.data() + start, line.data() + end, v[k]);
      if (r.ec != std::errc()) throw Error(ErrorKind::io, "bad waypoint row: " + line);
      start = end + 1;
    }
    out.push_back({v[1], v[2], v[3]});
  }
  return out;
}

}  // namespace ipmc
