#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deformnet/mesh.hpp"
#include "deformnet/nn.hpp"
#include "deformnet/sampling.hpp"

namespace deformnet {

struct FoldPlan {
  int k = 0;
  uint64_t seed = 0;
  std::vector<int> permutation;
  std::vector<std::vector<int>> test_folds;

  /// All indices outside test fold `fold`, in permutation order.
  std::vector<int> train_indices(int fold) const;
};

/// Seeded shuffle of 0..n-1 followed by contiguous chunking; the first
/// n % k folds get one extra index.
FoldPlan kfold(int n, int k, uint64_t seed);

enum class RmseMode {
  kComponent,   // mean over all 3 N m scalar components
  kVertexNorm,  // mean over N m squared vertex error norms
};

/// RMSE in millimeters of 3N x m displacement matrices (simulation units).
double rmse_mm(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
               const ScaleConvention& scale, RmseMode mode = RmseMode::kComponent);

struct LpeResult {
  std::vector<double> per_vertex_mm;
  double mean_mm = 0.0;
  double max_mm = 0.0;
  int argmax = 0;  // free-vertex index of the largest error
  double argmax_true_disp_mm = 0.0;
};

/// Per-vertex Euclidean error of one sample's 3N displacement vectors.
LpeResult local_positional_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                                 const ScaleConvention& scale);

struct SessionConfig {
  TrainConfig train;
  int hidden1 = 90;
  int hidden2 = 90;
  int k = 5;
  int repeats = 1;
  uint64_t seed = 1;
  int workers = 1;
  RmseMode rmse_mode = RmseMode::kComponent;
  bool keep_predictions = false;

  void validate() const;
};

struct TrialReport {
  int repeat = 0;
  int fold = 0;
  uint64_t train_seed = 0;
  int n_train = 0;
  int n_test = 0;
  double rmse_mm = 0.0;
  double rmse_pct = 0.0;
  double mean_lpe_mm = 0.0;
  double mean_max_lpe_mm = 0.0;
  double final_epoch_cost = 0.0;
  std::vector<int> test_indices;
  std::vector<double> max_lpe_mm;           // per test sample
  std::vector<double> max_lpe_true_disp_mm; // true displacement at the worst vertex
  std::vector<CurvePoint> curve;            // test_rmse in simulation units
  std::optional<Eigen::MatrixXd> predictions;  // 3N x n_test, simulation units
};

struct SessionReport {
  std::vector<TrialReport> trials;  // ordered by (repeat, fold)
  double mean_rmse_mm = 0.0;        // mean of per-trial RMSE
  double mean_rmse_pct = 0.0;
  double mean_lpe_mm = 0.0;
  double mean_max_lpe_mm = 0.0;     // per-sample max LPE averaged over all test samples
  double mean_max_lpe_pct = 0.0;
  double max_displacement_mm = 0.0;
  int n_free = 0;
  int n_obs = 0;
  double observation_pct = 0.0;
  int sample_count = 0;
  RmseMode rmse_mode = RmseMode::kComponent;
  /// Test RMSE (mm) at each logged iteration, averaged over all trials.
  std::vector<std::pair<int64_t, double>> mean_curve_mm;
};

/// Repeated k-fold cross-validation. Repeat r uses seed + r for its fold
/// plan; each trial trains a fresh network. Results do not depend on
/// `workers`.
SessionReport run_session(const Dataset& dataset, const SessionConfig& config);

// Report exports.
std::string session_json(const SessionReport& report);
std::string trials_csv(const SessionReport& report);
std::string curve_csv(const SessionReport& report);
std::string max_lpe_csv(const SessionReport& report);

/// Legacy ASCII VTK unstructured grid of the deformed mesh. `u_free` holds
/// 3N free-vertex displacements (simulation units); fixed vertices stay put.
/// `lpe_mm`, when non-empty, is a per-free-vertex scalar.
std::string deformed_vtk(const TetMesh& mesh, const Eigen::VectorXd& u_free,
                         const std::vector<double>& lpe_mm, const std::string& title);

}  // namespace deformnet
