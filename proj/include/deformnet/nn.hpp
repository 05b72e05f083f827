#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deformnet/mesh.hpp"

namespace deformnet {

struct Dataset;

/// Node counts from the input side: M1 = 3 N_o, M2 and M3 hidden, M4 = 3 N.
struct LayerSizes {
  int input = 0;
  int hidden1 = 0;
  int hidden2 = 0;
  int output = 0;
};

/// Two-hidden-layer ReLU network with a linear output layer. Each weight
/// matrix has the bias weights in column 0 (the bias node always emits 1).
struct MlpModel {
  LayerSizes sizes;
  Eigen::MatrixXd w_ih;  // M2 x (M1 + 1)
  Eigen::MatrixXd w_ji;  // M3 x (M2 + 1)
  Eigen::MatrixXd w_kj;  // M4 x (M3 + 1)

  static MlpModel zeros(const LayerSizes& sizes);
  /// Every entry uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], where fan_in
  /// is the number of non-bias inputs of the layer.
  static MlpModel random(const LayerSizes& sizes, uint64_t seed);

  /// Throws ValidationError on wrong shapes or non-finite weights.
  void validate() const;
};

/// Batched forward pass; column d of every matrix belongs to sample d.
struct ForwardCache {
  Eigen::MatrixXd z_i, a_i, z_j, a_j, a_k;
};

ForwardCache forward(const MlpModel& model, const Eigen::MatrixXd& x);
Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x);

struct Lambdas {
  double ih = 0.1;
  double ji = 0.1;
  double kj = 0.1;
};

/// J = (1/m) sum_d sum_k (a_k - y_k)^2 / 2 + sum_l lambda_l / (2 n_l) sum w^2,
/// with n_l the number of non-bias weights of layer l. Bias columns are not
/// regularized.
double cost(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
            const Lambdas& lambdas);

struct Gradients {
  Eigen::MatrixXd d_ih, d_ji, d_kj;
};

/// Exact backprop gradient of `cost`. The ReLU derivative at 0 is taken as 0.
/// When `cost_out` is set it receives J at the current weights.
Gradients gradients(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const Lambdas& lambdas, double* cost_out = nullptr);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::MatrixXd m_ih, m_ji, m_kj;
  Eigen::MatrixXd v_ih, v_ji, v_kj;
  int64_t t = 0;

  static AdamState for_model(const MlpModel& model);
};

/// One Adam update of all three weight matrices. Increments t first, then
/// applies theta -= alpha * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, MlpModel& model, const Gradients& grads, double alpha,
               const AdamParams& params = {});

/// alpha = 1 / (gamma * epoch), epoch counted from 1.
double alpha_schedule(int epoch, double gamma);

struct TrainConfig {
  int epochs = 5;
  int batch_size = 1000;
  int inner_iters = 10;
  double gamma = 50.0;
  Lambdas lambdas;
  AdamParams adam;
  uint64_t seed = 1;
  /// Record a curve point every this many updates (0 disables the curve).
  int eval_every = 0;

  void validate() const;
};

struct CurvePoint {
  int64_t iteration = 0;
  int epoch = 0;
  double batch_cost = 0.0;
  /// Component RMSE on the held-out set in simulation units, if one was given.
  std::optional<double> test_rmse;
};

struct TrainLog {
  std::vector<CurvePoint> curve;
  std::vector<double> epoch_mean_cost;
  int batches_per_epoch = 0;
  int64_t updates = 0;
};

struct TrainResult {
  MlpModel model;
  AdamState adam;
  TrainLog log;
};

/// Held-out data evaluated at every curve point.
struct HeldOut {
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& y;
};

/// Mini-batch Adam training on the columns `train_idx` of (x, y).
///
/// Each epoch shuffles the training indices with the seeded generator, cuts
/// them into floor(m / batch_size) batches (the remainder is skipped for
/// that epoch), and runs `inner_iters` consecutive updates on each batch.
/// Adam moments persist across batches and epochs.
TrainResult train(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  std::span<const int> train_idx, const TrainConfig& config, int hidden1,
                  int hidden2, const std::optional<HeldOut>& held_out = std::nullopt);

TrainResult train(const Dataset& dataset, std::span<const int> train_idx,
                  const TrainConfig& config, int hidden1, int hidden2);

/// Square root of the mean squared component error, in the units of the
/// inputs.
double component_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

using Field = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Observation displacements (N_o x 3, training observation order) to the
/// estimated free-vertex field (N x 3). Rows are flattened vertex-major.
Field predict(const MlpModel& model, const Field& observations);

/// Everything persisted with a trained network.
struct ModelFile {
  MlpModel model;
  std::vector<int> observation_ids;
  std::vector<int> free_vertex_ids;
  std::string mesh_hash;
  ScaleConvention scale;
  TrainConfig config;
  std::vector<std::pair<std::string, double>> metrics;
};

std::string serialize_model(const ModelFile& file);
ModelFile parse_model(const std::string& text);
void save_model(const ModelFile& file, const std::string& path);
ModelFile load_model(const std::string& path);

}  // namespace deformnet
