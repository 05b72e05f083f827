#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "deformnet/error.hpp"
#include "deformnet/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string profile;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--profile", f.profile, "Shipped profile name (see `deformnet profiles`)");
  cmd->add_option("--seed", f.seed, "Overrides the training and fold seeds");
  cmd->add_option("--workers", f.workers, "Worker threads (0 = one per hardware thread)");
  cmd->add_option("--out", f.out, "Output directory (default: $DEFORMNET_OUT/<name>)");
}

deformnet::PipelineConfig resolve(const CommonFlags& f) {
  using deformnet::ValidationError;
  if (!f.config.empty() && !f.profile.empty())
    throw ValidationError("--config and --profile are mutually exclusive");
  if (f.config.empty() && f.profile.empty())
    throw ValidationError("one of --config or --profile is required");
  deformnet::PipelineConfig cfg =
      f.config.empty() ? deformnet::load_profile(f.profile) : deformnet::load_config(f.config);
  if (f.seed) {
    cfg.train.seed = *f.seed;
    cfg.eval_seed = *f.seed;
  }
  if (f.workers) cfg.workers = *f.workers;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (cfg.out_dir.empty()) cfg.out_dir = deformnet::default_out_dir(cfg);
  cfg.validate();
  return cfg;
}

void print_paths(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::cout << p << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deformnet: FEM-trained neural estimation of soft-body deformation"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* mesh = app.add_subcommand("mesh", "Generate the tetrahedral mesh");
  auto* sample = app.add_subcommand("sample", "Run the FEM over all targets and write a dataset");
  auto* train = app.add_subcommand("train", "Train one network on a whole dataset");
  auto* eval = app.add_subcommand("eval", "Repeated k-fold evaluation of a dataset");
  auto* predict = app.add_subcommand("predict", "Estimate a full field from observations");
  auto* repro = app.add_subcommand("repro", "sample, train and eval in one run");
  auto* profiles = app.add_subcommand("profiles", "List shipped profiles");
  for (auto* c : {mesh, sample, train, eval, repro}) add_common(c, flags);

  bool csv = false;
  sample->add_flag("--csv", csv, "Also write dataset.csv");
  std::string dataset;
  train->add_option("--dataset", dataset, "Dataset file (default: <out>/dataset.bin)");
  eval->add_option("--dataset", dataset, "Dataset file (default: <out>/dataset.bin)");

  std::string model_path, obs_path, mesh_path, predict_out;
  predict->add_option("--model", model_path, "model.json from `train`")->required();
  predict->add_option("--obs", obs_path, "Observation CSV (x,y,z in mm per row)")->required();
  predict->add_option("--mesh", mesh_path, "Mesh file; enables field.vtk output");
  predict->add_option("--out", predict_out, "Output directory")->required();
  // Accepted for a uniform interface; predict is deterministic and serial.
  std::optional<uint64_t> unused_seed;
  std::optional<int> unused_workers;
  predict->add_option("--seed", unused_seed, "Ignored");
  predict->add_option("--workers", unused_workers, "Ignored");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto dataset_or_default = [&](const deformnet::PipelineConfig& cfg) {
      return dataset.empty() ? cfg.out_dir + "/dataset.bin" : dataset;
    };
    if (*profiles) {
      for (const auto& n : deformnet::profile_names()) std::cout << n << '\n';
    } else if (*mesh) {
      print_paths(deformnet::cmd_mesh(resolve(flags)));
    } else if (*sample) {
      print_paths(deformnet::cmd_sample(resolve(flags), csv));
    } else if (*train) {
      const auto cfg = resolve(flags);
      print_paths(deformnet::cmd_train(cfg, dataset_or_default(cfg)));
    } else if (*eval) {
      const auto cfg = resolve(flags);
      print_paths(deformnet::cmd_eval(cfg, dataset_or_default(cfg)));
    } else if (*predict) {
      print_paths(deformnet::cmd_predict(model_path, obs_path, mesh_path, predict_out));
    } else if (*repro) {
      print_paths(deformnet::cmd_repro(resolve(flags)));
    }
  } catch (const deformnet::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const deformnet::SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
