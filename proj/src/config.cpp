#include "difiv/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>

#include "difiv/errors.hpp"
#include "difiv/io.hpp"

namespace difiv {
namespace {

using nlohmann::json;

// Strict reader over one JSON object: rejects keys that no field claims.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValueError("config: section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    claimed_.insert(key);
    if (!j_.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        out = number(j_.at(key));
      } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        const json& v = j_.at(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
          throw ValueError("expected a nonnegative integer");
        }
        out = j_.at(key).get<T>();
      } else {
        out = j_.at(key).get<T>();
      }
    } catch (const json::exception& e) {
      throw ValueError("config: " + name_ + "." + key + ": " + e.what());
    } catch (const ValueError& e) {
      throw ValueError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    claimed_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!claimed_.count(key)) throw ValueError("config: unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  static double number(const json& v) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      throw ValueError("expected a number or \"inf\", got \"" + s + "\"");
    }
    if (!v.is_number()) throw ValueError("expected a number");
    return v.get<double>();
  }

  const json& j_;
  std::string name_;
  std::set<std::string> claimed_;
};

json number_or_inf(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

json parse_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace

Preset parse_preset(const std::string& name) {
  if (name == "moderate") return Preset::kModerate;
  if (name == "significant") return Preset::kSignificant;
  throw ValueError("unknown preset '" + name + "' (expected moderate or significant)");
}

std::string preset_name(Preset p) { return p == Preset::kModerate ? "moderate" : "significant"; }

FusionConfig preset_config(Preset p) {
  return p == Preset::kModerate ? FusionConfig::moderate() : FusionConfig::significant();
}

void RunConfig::validate() const {
  fusion.validate();
  train.validate();
  if (subspace_dim == 0) throw ValueError("config: train.subspace_dim must be positive");
  if (sensor.kernel_size == 0 || !(sensor.kernel_sigma > 0.0)) {
    throw ValueError("config: sensor kernel size and sigma must be positive");
  }
  if (sensor.decim_factor == 0 || sensor.decim_offset >= sensor.decim_factor) {
    throw ValueError("config: sensor decimation needs factor > 0 and offset < factor");
  }
  if (sensor.msi_bands == 0) throw ValueError("config: sensor.msi_bands must be positive");
  if (std::isnan(simulation.snr_db)) throw ValueError("config: simulation.snr_db is NaN");
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "config");
  std::string preset = preset_name(c.preset);
  top.get("preset", preset);
  c.preset = parse_preset(preset);
  c.fusion = preset_config(c.preset);
  top.get("seed", c.seed);
  c.fusion.seed = c.seed;
  c.train.seed = c.seed;

  if (const json* f = top.sub("fusion")) {
    Section s(*f, "fusion");
    s.get("p", c.fusion.p);
    s.get("lambda", c.fusion.lambda);
    s.get("lambda_h", c.fusion.lambda_h);
    s.get("lambda_m", c.fusion.lambda_m);
    s.get("rho", c.fusion.rho);
    s.get("epsilon", c.fusion.epsilon);
    s.get("bcd_iters", c.fusion.bcd_iters);
    s.get("cg_iters", c.fusion.cg_iters);
    s.get("cg_tol", c.fusion.cg_tol);
    s.get("red_steps", c.fusion.red_steps);
    s.get("stop_tol", c.fusion.stop_tol);
    s.finish();
  }
  if (const json* f = top.sub("sensor")) {
    Section s(*f, "sensor");
    s.get("kernel_size", c.sensor.kernel_size);
    s.get("kernel_sigma", c.sensor.kernel_sigma);
    s.get("decim_factor", c.sensor.decim_factor);
    s.get("decim_offset", c.sensor.decim_offset);
    s.get("msi_bands", c.sensor.msi_bands);
    s.finish();
  }
  if (const json* f = top.sub("train")) {
    Section s(*f, "train");
    s.get("lr", c.train.lr);
    s.get("epochs_initial", c.train.epochs_initial);
    s.get("epochs_finetune", c.train.epochs_finetune);
    s.get("resample_noise", c.train.resample_noise);
    s.get("subspace_dim", c.subspace_dim);
    s.finish();
  }
  if (const json* f = top.sub("simulation")) {
    Section s(*f, "simulation");
    s.get("snr_db", c.simulation.snr_db);
    s.get("scaling_amplitude", c.simulation.variability.scaling_amplitude);
    s.get("patch_amplitude", c.simulation.variability.patch_amplitude);
    s.get("patch_radius", c.simulation.variability.patch_radius);
    s.get("rows", c.simulation.scene.rows);
    s.get("cols", c.simulation.scene.cols);
    s.get("bands", c.simulation.scene.bands);
    s.get("endmembers", c.simulation.scene.endmembers);
    s.finish();
  }
  if (const json* f = top.sub("paths")) {
    Section s(*f, "paths");
    s.get("input", c.paths.input);
    s.get("input_m", c.paths.input_m);
    s.get("y_h", c.paths.y_h);
    s.get("y_m", c.paths.y_m);
    s.get("manifest", c.paths.manifest);
    s.get("out_dir", c.paths.out_dir);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  const auto& f = c.fusion;
  const auto& v = c.simulation.variability;
  const auto& sc = c.simulation.scene;
  return json{
      {"preset", preset_name(c.preset)},
      {"seed", c.seed},
      {"fusion",
       {{"p", f.p},
        {"lambda", f.lambda},
        {"lambda_h", f.lambda_h},
        {"lambda_m", f.lambda_m},
        {"rho", f.rho},
        {"epsilon", f.epsilon},
        {"bcd_iters", f.bcd_iters},
        {"cg_iters", f.cg_iters},
        {"cg_tol", f.cg_tol},
        {"red_steps", f.red_steps},
        {"stop_tol", f.stop_tol}}},
      {"sensor",
       {{"kernel_size", c.sensor.kernel_size},
        {"kernel_sigma", c.sensor.kernel_sigma},
        {"decim_factor", c.sensor.decim_factor},
        {"decim_offset", c.sensor.decim_offset},
        {"msi_bands", c.sensor.msi_bands}}},
      {"train",
       {{"lr", c.train.lr},
        {"epochs_initial", c.train.epochs_initial},
        {"epochs_finetune", c.train.epochs_finetune},
        {"resample_noise", c.train.resample_noise},
        {"subspace_dim", c.subspace_dim}}},
      {"simulation",
       {{"snr_db", number_or_inf(c.simulation.snr_db)},
        {"scaling_amplitude", v.scaling_amplitude},
        {"patch_amplitude", v.patch_amplitude},
        {"patch_radius", v.patch_radius},
        {"rows", sc.rows},
        {"cols", sc.cols},
        {"bands", sc.bands},
        {"endmembers", sc.endmembers}}},
      {"paths",
       {{"input", c.paths.input},
        {"input_m", c.paths.input_m},
        {"y_h", c.paths.y_h},
        {"y_m", c.paths.y_m},
        {"manifest", c.paths.manifest},
        {"out_dir", c.paths.out_dir}}},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_json(parse_json_file(path));
  } catch (const ValueError& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
}

json manifest_to_json(const SensorManifest& m) {
  const auto& s = m.sensor;
  json srf = json::array();
  for (Eigen::Index r = 0; r < s.srf.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < s.srf.cols(); ++c) row.push_back(s.srf(r, c));
    srf.push_back(row);
  }
  return json{{"kernel", {{"size", s.blur.size}, {"weights", s.blur.weights}}},
              {"boundary", "circular"},
              {"decim_factor", s.decim_factor},
              {"decim_offset", s.decim_offset},
              {"srf", srf},
              {"seed", m.seed},
              {"snr_db", number_or_inf(m.snr_db)},
              {"hr_rows", m.hr_rows},
              {"hr_cols", m.hr_cols}};
}

SensorManifest manifest_from_json(const json& j) {
  SensorManifest m;
  Section top(j, "manifest");
  std::string boundary = "circular";
  top.get("boundary", boundary);
  if (boundary != "circular") throw ValueError("manifest: unsupported boundary '" + boundary + "'");
  top.get("decim_factor", m.sensor.decim_factor);
  top.get("decim_offset", m.sensor.decim_offset);
  top.get("seed", m.seed);
  top.get("snr_db", m.snr_db);
  top.get("hr_rows", m.hr_rows);
  top.get("hr_cols", m.hr_cols);
  const json* kernel = top.sub("kernel");
  if (!kernel) throw ValueError("manifest: missing kernel");
  {
    Section k(*kernel, "kernel");
    k.get("size", m.sensor.blur.size);
    k.get("weights", m.sensor.blur.weights);
    k.finish();
    if (m.sensor.blur.weights.size() != m.sensor.blur.size * m.sensor.blur.size) {
      throw ValueError("manifest: kernel weight count does not match size");
    }
  }
  const json* srf = top.sub("srf");
  if (!srf || !srf->is_array() || srf->empty()) throw ValueError("manifest: missing srf matrix");
  try {
    const auto rows = srf->get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.front().size();
    m.sensor.srf.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols) throw ValueError("manifest: ragged srf matrix");
      for (std::size_t c = 0; c < cols; ++c) {
        m.sensor.srf(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
  } catch (const json::exception& e) {
    throw ValueError(std::string("manifest: srf: ") + e.what());
  }
  top.finish();
  m.sensor.validate();
  return m;
}

void save_manifest(const SensorManifest& m, const std::filesystem::path& path) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

SensorManifest load_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(parse_json_file(path));
  } catch (const ValueError& e) {
    throw ValueError(path.string() + ": " + e.what());
  }
}

}  // namespace difiv
