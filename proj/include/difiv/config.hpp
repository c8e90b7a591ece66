#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "difiv/denoiser.hpp"
#include "difiv/optimizer.hpp"
#include "difiv/scene.hpp"
#include "difiv/sensor.hpp"

namespace difiv {

enum class Preset { kModerate, kSignificant };

Preset parse_preset(const std::string& name);
std::string preset_name(Preset p);
FusionConfig preset_config(Preset p);

struct SimulationConfig {
  double snr_db = 35.0;  // +inf disables noise
  VariabilityParams variability;
  SceneParams scene;
};

struct PathsConfig {
  std::string input;     // reference HRI for the hyperspectral side
  std::string input_m;   // optional distinct reference for the multispectral side
  std::string y_h = "Y_h.hsc";
  std::string y_m = "Y_m.hsc";
  std::string manifest = "sensor.json";
  std::string out_dir = ".";
};

/// Everything a run needs. Loaded from a JSON document whose sections are
/// "preset", "seed", "fusion", "sensor", "train", "simulation" and "paths".
/// Unknown keys are rejected; missing keys keep the defaults, with the
/// fusion section defaulting to the selected preset.
struct RunConfig {
  Preset preset = Preset::kModerate;
  std::uint64_t seed = 0;
  FusionConfig fusion = FusionConfig::moderate();
  SensorParams sensor;
  TrainConfig train;
  std::size_t subspace_dim = kDefaultSubspaceDim;
  SimulationConfig simulation;
  PathsConfig paths;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Sidecar written by the simulator: the exact sensor plus the seed and SNR used.
struct SensorManifest {
  SensorModel sensor;
  std::uint64_t seed = 0;
  double snr_db = 35.0;
  std::size_t hr_rows = 0;
  std::size_t hr_cols = 0;
};

nlohmann::json manifest_to_json(const SensorManifest& m);
SensorManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const SensorManifest& m, const std::filesystem::path& path);
SensorManifest load_manifest(const std::filesystem::path& path);

}  // namespace difiv
