#include "deformnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "deformnet/error.hpp"
#include "deformnet/sampling.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace deformnet {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// g'(z) with g'(0) = 0.
Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

// W [1; a] for every column of a.
Eigen::MatrixXd affine(const Eigen::MatrixXd& w, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd z = w.rightCols(w.cols() - 1) * a;
  z.colwise() += w.col(0);
  return z;
}

// (1/m) delta [1; a]^T, bias gradient in column 0.
Eigen::MatrixXd layer_grad(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& a, double inv_m) {
  Eigen::MatrixXd g(delta.rows(), a.rows() + 1);
  g.col(0) = delta.rowwise().sum() * inv_m;
  g.rightCols(a.rows()).noalias() = (delta * a.transpose()) * inv_m;
  return g;
}

double reg_term(const Eigen::MatrixXd& w, double lambda) {
  if (lambda == 0.0) return 0.0;
  const double n = static_cast<double>(w.rows() * (w.cols() - 1));
  return lambda / (2.0 * n) * w.rightCols(w.cols() - 1).squaredNorm();
}

void add_reg_grad(Eigen::MatrixXd& g, const Eigen::MatrixXd& w, double lambda) {
  if (lambda == 0.0) return;
  const double n = static_cast<double>(w.rows() * (w.cols() - 1));
  g.rightCols(w.cols() - 1) += (lambda / n) * w.rightCols(w.cols() - 1);
}

void check_batch(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != model.sizes.input)
    throw ValidationError("nn: input has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(model.sizes.input));
  if (y.rows() != model.sizes.output)
    throw ValidationError("nn: target has " + std::to_string(y.rows()) + " rows, expected " +
                          std::to_string(model.sizes.output));
  if (x.cols() != y.cols() || x.cols() == 0)
    throw ValidationError("nn: batch must be non-empty with matching input/target columns");
}

Eigen::MatrixXd uniform_matrix(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so the draw sequence matches the file layout.
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

}  // namespace

MlpModel MlpModel::zeros(const LayerSizes& s) {
  if (s.input < 1 || s.hidden1 < 1 || s.hidden2 < 1 || s.output < 1)
    throw ValidationError("nn: every layer needs at least one node");
  MlpModel m;
  m.sizes = s;
  m.w_ih = Eigen::MatrixXd::Zero(s.hidden1, s.input + 1);
  m.w_ji = Eigen::MatrixXd::Zero(s.hidden2, s.hidden1 + 1);
  m.w_kj = Eigen::MatrixXd::Zero(s.output, s.hidden2 + 1);
  return m;
}

MlpModel MlpModel::random(const LayerSizes& s, uint64_t seed) {
  MlpModel m = zeros(s);
  std::mt19937_64 rng(seed);
  m.w_ih = uniform_matrix(s.hidden1, s.input + 1, 1.0 / std::sqrt(double(s.input)), rng);
  m.w_ji = uniform_matrix(s.hidden2, s.hidden1 + 1, 1.0 / std::sqrt(double(s.hidden1)), rng);
  m.w_kj = uniform_matrix(s.output, s.hidden2 + 1, 1.0 / std::sqrt(double(s.hidden2)), rng);
  return m;
}

void MlpModel::validate() const {
  auto check = [](const Eigen::MatrixXd& w, int rows, int cols, const char* name) {
    if (w.rows() != rows || w.cols() != cols)
      throw ValidationError(std::string("nn: ") + name + " has shape " + std::to_string(w.rows()) +
                            "x" + std::to_string(w.cols()) + ", expected " +
                            std::to_string(rows) + "x" + std::to_string(cols));
    if (!w.allFinite()) throw ValidationError(std::string("nn: ") + name + " is not finite");
  };
  check(w_ih, sizes.hidden1, sizes.input + 1, "w_ih");
  check(w_ji, sizes.hidden2, sizes.hidden1 + 1, "w_ji");
  check(w_kj, sizes.output, sizes.hidden2 + 1, "w_kj");
}

ForwardCache forward(const MlpModel& model, const Eigen::MatrixXd& x) {
  if (x.rows() != model.sizes.input)
    throw ValidationError("nn: input has " + std::to_string(x.rows()) + " rows, expected " +
                          std::to_string(model.sizes.input));
  ForwardCache c;
  c.z_i = affine(model.w_ih, x);
  c.a_i = relu(c.z_i);
  c.z_j = affine(model.w_ji, c.a_i);
  c.a_j = relu(c.z_j);
  c.a_k = affine(model.w_kj, c.a_j);
  return c;
}

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x) {
  return forward(model, Eigen::MatrixXd(x)).a_k.col(0);
}

double cost(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
            const Lambdas& lambdas) {
  check_batch(model, x, y);
  const ForwardCache c = forward(model, x);
  const double data = 0.5 * (c.a_k - y).squaredNorm() / static_cast<double>(x.cols());
  return data + reg_term(model.w_ih, lambdas.ih) + reg_term(model.w_ji, lambdas.ji) +
         reg_term(model.w_kj, lambdas.kj);
}

Gradients gradients(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const Lambdas& lambdas, double* cost_out) {
  check_batch(model, x, y);
  const double inv_m = 1.0 / static_cast<double>(x.cols());
  const ForwardCache c = forward(model, x);

  const Eigen::MatrixXd delta_k = c.a_k - y;
  const Eigen::MatrixXd delta_j =
      (model.w_kj.rightCols(model.sizes.hidden2).transpose() * delta_k).cwiseProduct(relu_mask(c.z_j));
  const Eigen::MatrixXd delta_i =
      (model.w_ji.rightCols(model.sizes.hidden1).transpose() * delta_j).cwiseProduct(relu_mask(c.z_i));

  Gradients g;
  g.d_kj = layer_grad(delta_k, c.a_j, inv_m);
  g.d_ji = layer_grad(delta_j, c.a_i, inv_m);
  g.d_ih = layer_grad(delta_i, x, inv_m);
  add_reg_grad(g.d_kj, model.w_kj, lambdas.kj);
  add_reg_grad(g.d_ji, model.w_ji, lambdas.ji);
  add_reg_grad(g.d_ih, model.w_ih, lambdas.ih);

  if (cost_out) {
    *cost_out = 0.5 * delta_k.squaredNorm() * inv_m + reg_term(model.w_ih, lambdas.ih) +
                reg_term(model.w_ji, lambdas.ji) + reg_term(model.w_kj, lambdas.kj);
  }
  return g;
}

AdamState AdamState::for_model(const MlpModel& model) {
  AdamState s;
  s.m_ih = s.v_ih = Eigen::MatrixXd::Zero(model.w_ih.rows(), model.w_ih.cols());
  s.m_ji = s.v_ji = Eigen::MatrixXd::Zero(model.w_ji.rows(), model.w_ji.cols());
  s.m_kj = s.v_kj = Eigen::MatrixXd::Zero(model.w_kj.rows(), model.w_kj.cols());
  return s;
}

void adam_step(AdamState& state, MlpModel& model, const Gradients& grads, double alpha,
               const AdamParams& p) {
  auto same = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  if (!same(grads.d_ih, model.w_ih) || !same(grads.d_ji, model.w_ji) ||
      !same(grads.d_kj, model.w_kj) || !same(state.m_ih, model.w_ih) ||
      !same(state.m_ji, model.w_ji) || !same(state.m_kj, model.w_kj))
    throw ValidationError("adam: gradient/state shapes do not match the model");

  ++state.t;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.t));
  auto update = [&](Eigen::MatrixXd& w, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                    const Eigen::MatrixXd& g) {
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
    w.array() -= alpha * (m.array() / c1) / ((v.array() / c2).sqrt() + p.epsilon);
  };
  update(model.w_ih, state.m_ih, state.v_ih, grads.d_ih);
  update(model.w_ji, state.m_ji, state.v_ji, grads.d_ji);
  update(model.w_kj, state.m_kj, state.v_kj, grads.d_kj);
}

double alpha_schedule(int epoch, double gamma) {
  if (epoch < 1) throw ValidationError("alpha_schedule: epoch numbers start at 1");
  if (!(gamma > 0.0)) throw ValidationError("alpha_schedule: gamma must be positive");
  return 1.0 / (gamma * epoch);
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || inner_iters < 1)
    throw ValidationError("train: epochs, batch_size and inner_iters must be >= 1");
  if (!(gamma > 0.0)) throw ValidationError("train: gamma must be positive");
  if (!(lambdas.ih >= 0.0 && lambdas.ji >= 0.0 && lambdas.kj >= 0.0))
    throw ValidationError("train: lambdas must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ValidationError("train: Adam betas must be in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ValidationError("train: Adam epsilon must be positive");
  if (eval_every < 0) throw ValidationError("train: eval_every must be >= 0");
}

double component_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ValidationError("rmse: shape mismatch");
  if (pred.size() == 0) throw ValidationError("rmse: empty input");
  return std::sqrt((pred - target).squaredNorm() / static_cast<double>(pred.size()));
}

TrainResult train(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                  std::span<const int> train_idx, const TrainConfig& config, int hidden1,
                  int hidden2, const std::optional<HeldOut>& held_out) {
  config.validate();
  if (hidden1 < 1 || hidden2 < 1) throw ValidationError("train: hidden sizes must be >= 1");
  if (x.cols() != y.cols()) throw ValidationError("train: input/target sample counts differ");
  for (int i : train_idx)
    if (i < 0 || i >= x.cols()) throw ValidationError("train: sample index out of range");
  const int m = static_cast<int>(train_idx.size());
  const int n_batches = m / config.batch_size;
  if (n_batches == 0)
    throw ValidationError("train: " + std::to_string(m) + " training samples cannot fill a batch of " +
                          std::to_string(config.batch_size));

  const LayerSizes sizes{static_cast<int>(x.rows()), hidden1, hidden2, static_cast<int>(y.rows())};
  TrainResult out;
  out.model = MlpModel::random(sizes, config.seed);
  out.adam = AdamState::for_model(out.model);
  out.log.batches_per_epoch = n_batches;
  // Separate stream for shuffling so init and ordering can be varied apart.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<int> order(train_idx.begin(), train_idx.end());
  Eigen::MatrixXd xb(x.rows(), config.batch_size), yb(y.rows(), config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double alpha = alpha_schedule(epoch, config.gamma);
    std::shuffle(order.begin(), order.end(), rng);
    double cost_sum = 0.0;
    for (int b = 0; b < n_batches; ++b) {
      for (int c = 0; c < config.batch_size; ++c) {
        const int d = order[b * config.batch_size + c];
        xb.col(c) = x.col(d);
        yb.col(c) = y.col(d);
      }
      for (int it = 0; it < config.inner_iters; ++it) {
        double j = 0.0;
        const Gradients g = gradients(out.model, xb, yb, config.lambdas, &j);
        adam_step(out.adam, out.model, g, alpha, config.adam);
        cost_sum += j;
        if (config.eval_every > 0 && out.adam.t % config.eval_every == 0) {
          CurvePoint pt{out.adam.t, epoch, j, std::nullopt};
          if (held_out) pt.test_rmse = component_rmse(forward(out.model, held_out->x).a_k, held_out->y);
          out.log.curve.push_back(pt);
        }
      }
    }
    out.log.epoch_mean_cost.push_back(cost_sum / (n_batches * config.inner_iters));
  }
  out.log.updates = out.adam.t;
  return out;
}

TrainResult train(const Dataset& dataset, std::span<const int> train_idx,
                  const TrainConfig& config, int hidden1, int hidden2) {
  return train(dataset.inputs(), dataset.targets(), train_idx, config, hidden1, hidden2);
}

Field predict(const MlpModel& model, const Field& observations) {
  if (observations.rows() * 3 != model.sizes.input)
    throw ValidationError("predict: model expects " + std::to_string(model.sizes.input / 3) +
                          " observation vertices, got " + std::to_string(observations.rows()));
  if (model.sizes.output % 3 != 0) throw ValidationError("predict: output size is not 3N");
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(observations.data(), observations.size());
  const Eigen::VectorXd out = forward(model, x);
  return Eigen::Map<const Field>(out.data(), out.size() / 3, 3);
}

// ---------------------------------------------------------------------------
// Model file (JSON).

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& w) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    std::vector<double> row(w.cols());
    for (Eigen::Index c = 0; c < w.cols(); ++c) row[c] = w(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int rows, int cols, const char* name) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw ValidationError(std::string("model: ") + name + " has the wrong row count");
  Eigen::MatrixXd w(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != cols)
      throw ValidationError(std::string("model: ") + name + " row " + std::to_string(r) +
                            " has the wrong length");
    for (int c = 0; c < cols; ++c) w(r, c) = row[c];
  }
  return w;
}

}  // namespace

std::string serialize_model(const ModelFile& f) {
  f.model.validate();
  nlohmann::ordered_json j;
  j["format"] = "deformnet-model";
  j["version"] = 1;
  j["layer_sizes"] = {f.model.sizes.input, f.model.sizes.hidden1, f.model.sizes.hidden2,
                      f.model.sizes.output};
  j["mesh_hash"] = f.mesh_hash;
  j["observation_ids"] = f.observation_ids;
  j["free_vertex_ids"] = f.free_vertex_ids;
  j["mm_per_unit"] = f.scale.mm_per_unit;
  j["train_config"] = {{"epochs", f.config.epochs},
                       {"batch_size", f.config.batch_size},
                       {"inner_iters", f.config.inner_iters},
                       {"gamma", f.config.gamma},
                       {"lambdas", {f.config.lambdas.ih, f.config.lambdas.ji, f.config.lambdas.kj}},
                       {"beta1", f.config.adam.beta1},
                       {"beta2", f.config.adam.beta2},
                       {"epsilon", f.config.adam.epsilon},
                       {"seed", f.config.seed},
                       {"eval_every", f.config.eval_every}};
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [k, v] : f.metrics) metrics[k] = v;
  j["metrics"] = metrics;
  j["w_ih"] = matrix_json(f.model.w_ih);
  j["w_ji"] = matrix_json(f.model.w_ji);
  j["w_kj"] = matrix_json(f.model.w_kj);
  return j.dump(1) + "\n";
}

ModelFile parse_model(const std::string& text) {
  ModelFile f;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    if (j.at("format") != "deformnet-model" || j.at("version") != 1)
      throw ValidationError("model: unsupported format/version");
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    if (sizes.size() != 4) throw ValidationError("model: layer_sizes needs 4 entries");
    f.model = MlpModel::zeros({sizes[0], sizes[1], sizes[2], sizes[3]});
    f.model.w_ih = matrix_from_json(j.at("w_ih"), sizes[1], sizes[0] + 1, "w_ih");
    f.model.w_ji = matrix_from_json(j.at("w_ji"), sizes[2], sizes[1] + 1, "w_ji");
    f.model.w_kj = matrix_from_json(j.at("w_kj"), sizes[3], sizes[2] + 1, "w_kj");
    f.mesh_hash = j.at("mesh_hash").get<std::string>();
    f.observation_ids = j.at("observation_ids").get<std::vector<int>>();
    f.free_vertex_ids = j.at("free_vertex_ids").get<std::vector<int>>();
    f.scale.mm_per_unit = j.at("mm_per_unit").get<double>();
    const auto& tc = j.at("train_config");
    f.config.epochs = tc.at("epochs");
    f.config.batch_size = tc.at("batch_size");
    f.config.inner_iters = tc.at("inner_iters");
    f.config.gamma = tc.at("gamma");
    const auto lam = tc.at("lambdas").get<std::vector<double>>();
    if (lam.size() != 3) throw ValidationError("model: lambdas needs 3 entries");
    f.config.lambdas = {lam[0], lam[1], lam[2]};
    f.config.adam = {tc.at("beta1"), tc.at("beta2"), tc.at("epsilon")};
    f.config.seed = tc.at("seed");
    f.config.eval_every = tc.at("eval_every");
    for (const auto& [k, v] : j.at("metrics").items()) f.metrics.emplace_back(k, v.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model: malformed file: ") + e.what());
  }
  f.model.validate();
  if (3 * static_cast<int>(f.observation_ids.size()) != f.model.sizes.input ||
      3 * static_cast<int>(f.free_vertex_ids.size()) != f.model.sizes.output)
    throw ValidationError("model: vertex lists do not match the layer sizes");
  f.scale.validate();
  return f;
}

void save_model(const ModelFile& file, const std::string& path) {
  detail::write_file(path, serialize_model(file));
}

ModelFile load_model(const std::string& path) { return parse_model(detail::read_file(path)); }

}  // namespace deformnet
