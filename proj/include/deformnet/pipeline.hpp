#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deformnet/eval.hpp"
#include "deformnet/fem.hpp"
#include "deformnet/mesh.hpp"
#include "deformnet/nn.hpp"
#include "deformnet/sampling.hpp"
#include "json.hpp"

namespace deformnet {

enum class MeshSource { kRpp, kLiverLike, kFile };

/// Declarative description of one pipeline run. See README "Config file"
/// for the JSON schema; `from_json` rejects unknown keys.
struct PipelineConfig {
  std::string name = "custom";
  ScaleConvention scale;

  MeshSource mesh_source = MeshSource::kRpp;
  RppSpec rpp = default_rpp_spec();
  double warp_bend = 0.0;
  double warp_taper = 0.0;
  std::string mesh_path;

  MaterialParams material;
  int n_steps = 1000;
  std::vector<RegionSampling> sampling;

  TrainConfig train;
  int hidden1 = 90;
  int hidden2 = 90;

  int eval_k = 5;
  int eval_repeats = 1;
  uint64_t eval_seed = 1;
  RmseMode rmse_mode = RmseMode::kComponent;
  bool save_predictions = false;

  /// 0 means one worker per hardware thread.
  int workers = 0;
  std::string out_dir;

  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Cross-field checks (regions exist, numeric ranges).
  void validate() const;
  int resolved_workers() const;
};

PipelineConfig load_config(const std::string& path);
/// Shipped profile by name ("rpp1-desk", "rpp1-full", ...). Looks in
/// $DEFORMNET_PROFILE_DIR, then in the source tree's profiles/ directory.
PipelineConfig load_profile(const std::string& name);
std::vector<std::string> profile_names();

/// Output root when neither --out nor the config names one:
/// $DEFORMNET_OUT/<config name>, else ./deformnet_out/<config name>.
std::string default_out_dir(const PipelineConfig& cfg);

TetMesh build_mesh(const PipelineConfig& cfg);

// Subcommands. Each writes its artifacts under cfg.out_dir together with a
// manifest_<command>.json and returns the artifact paths.
std::vector<std::string> cmd_mesh(const PipelineConfig& cfg);
std::vector<std::string> cmd_sample(const PipelineConfig& cfg, bool write_csv = false);
std::vector<std::string> cmd_train(const PipelineConfig& cfg, const std::string& dataset_path);
std::vector<std::string> cmd_eval(const PipelineConfig& cfg, const std::string& dataset_path);
std::vector<std::string> cmd_predict(const std::string& model_path, const std::string& obs_csv,
                                     const std::string& mesh_path, const std::string& out_dir);
std::vector<std::string> cmd_repro(const PipelineConfig& cfg);

/// Observation CSV: one "x,y,z" row per observation vertex, in millimeters,
/// optional header line.
Field read_observation_csv(const std::string& path);

}  // namespace deformnet
