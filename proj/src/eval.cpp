#include "deformnet/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "deformnet/error.hpp"

namespace deformnet {

std::vector<int> FoldPlan::train_indices(int fold) const {
  if (fold < 0 || fold >= k) throw ValidationError("fold index out of range");
  std::vector<int> out;
  for (int f = 0; f < k; ++f)
    if (f != fold) out.insert(out.end(), test_folds[f].begin(), test_folds[f].end());
  return out;
}

FoldPlan kfold(int n, int k, uint64_t seed) {
  if (k < 2) throw ValidationError("kfold: k must be >= 2");
  if (n < k) throw ValidationError("kfold: " + std::to_string(n) + " samples cannot fill " +
                                   std::to_string(k) + " folds");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.permutation.resize(n);
  std::iota(plan.permutation.begin(), plan.permutation.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(plan.permutation.begin(), plan.permutation.end(), rng);
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    plan.test_folds.emplace_back(plan.permutation.begin() + pos,
                                 plan.permutation.begin() + pos + size);
    pos += size;
  }
  return plan;
}

double rmse_mm(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
               const ScaleConvention& scale, RmseMode mode) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ValidationError("rmse: shape mismatch");
  if (pred.size() == 0 || pred.rows() % 3 != 0)
    throw ValidationError("rmse: expected a non-empty 3N x m matrix");
  const double sq = (pred - target).squaredNorm();
  const double count = mode == RmseMode::kComponent ? static_cast<double>(pred.size())
                                                    : static_cast<double>(pred.size() / 3);
  return scale.to_mm(std::sqrt(sq / count));
}

LpeResult local_positional_error(const Eigen::VectorXd& pred, const Eigen::VectorXd& target,
                                 const ScaleConvention& scale) {
  if (pred.size() != target.size() || pred.size() == 0 || pred.size() % 3 != 0)
    throw ValidationError("lpe: expected two 3N vectors of equal length");
  const int n = static_cast<int>(pred.size() / 3);
  LpeResult r;
  r.per_vertex_mm.resize(n);
  double sum = 0.0;
  for (int v = 0; v < n; ++v) {
    const double e = scale.to_mm((pred.segment<3>(3 * v) - target.segment<3>(3 * v)).norm());
    r.per_vertex_mm[v] = e;
    sum += e;
    if (e > r.max_mm) {
      r.max_mm = e;
      r.argmax = v;
    }
  }
  r.mean_mm = sum / n;
  r.argmax_true_disp_mm = scale.to_mm(target.segment<3>(3 * r.argmax).norm());
  return r;
}

void SessionConfig::validate() const {
  train.validate();
  if (hidden1 < 1 || hidden2 < 1) throw ValidationError("session: hidden sizes must be >= 1");
  if (k < 2) throw ValidationError("session: k must be >= 2");
  if (repeats < 1) throw ValidationError("session: repeats must be >= 1");
}

namespace {

TrialReport run_trial(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const FoldPlan& plan,
                      int repeat, int fold, uint64_t repeat_seed, const SessionConfig& cfg,
                      const ScaleConvention& scale, double max_disp_mm) {
  TrialReport t;
  t.repeat = repeat;
  t.fold = fold;
  t.test_indices = plan.test_folds[fold];
  const std::vector<int> train_idx = plan.train_indices(fold);
  t.n_train = static_cast<int>(train_idx.size());
  t.n_test = static_cast<int>(t.test_indices.size());

  Eigen::MatrixXd x_test(x.rows(), t.n_test), y_test(y.rows(), t.n_test);
  for (int c = 0; c < t.n_test; ++c) {
    x_test.col(c) = x.col(t.test_indices[c]);
    y_test.col(c) = y.col(t.test_indices[c]);
  }

  TrainConfig tc = cfg.train;
  tc.seed = repeat_seed * 1000003ULL + static_cast<uint64_t>(fold);
  t.train_seed = tc.seed;
  TrainResult tr = train(x, y, train_idx, tc, cfg.hidden1, cfg.hidden2, HeldOut{x_test, y_test});
  t.curve = std::move(tr.log.curve);
  t.final_epoch_cost = tr.log.epoch_mean_cost.back();

  const Eigen::MatrixXd pred = forward(tr.model, x_test).a_k;
  t.rmse_mm = rmse_mm(pred, y_test, scale, cfg.rmse_mode);
  t.rmse_pct = max_disp_mm > 0.0 ? t.rmse_mm / max_disp_mm * 100.0 : 0.0;
  double lpe_sum = 0.0, max_sum = 0.0;
  for (int c = 0; c < t.n_test; ++c) {
    const LpeResult lpe = local_positional_error(pred.col(c), y_test.col(c), scale);
    lpe_sum += lpe.mean_mm;
    max_sum += lpe.max_mm;
    t.max_lpe_mm.push_back(lpe.max_mm);
    t.max_lpe_true_disp_mm.push_back(lpe.argmax_true_disp_mm);
  }
  t.mean_lpe_mm = lpe_sum / t.n_test;
  t.mean_max_lpe_mm = max_sum / t.n_test;
  if (cfg.keep_predictions) t.predictions = pred;
  return t;
}

}  // namespace

SessionReport run_session(const Dataset& dataset, const SessionConfig& config) {
  config.validate();
  const Eigen::MatrixXd x = dataset.inputs();
  const Eigen::MatrixXd y = dataset.targets();
  const ScaleConvention scale = dataset.scale;

  SessionReport rep;
  rep.rmse_mode = config.rmse_mode;
  rep.n_free = dataset.num_free();
  rep.n_obs = dataset.num_observed();
  rep.observation_pct = 100.0 * rep.n_obs / rep.n_free;
  rep.sample_count = dataset.size();
  rep.max_displacement_mm = scale.to_mm(dataset.max_contact_displacement());

  std::vector<FoldPlan> plans;
  for (int r = 0; r < config.repeats; ++r)
    plans.push_back(kfold(dataset.size(), config.k, config.seed + static_cast<uint64_t>(r)));

  const int n_trials = config.repeats * config.k;
  std::vector<std::optional<TrialReport>> trials(n_trials);
  std::atomic<int> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto work = [&] {
    for (int i = next++; i < n_trials; i = next++) {
      const int r = i / config.k, f = i % config.k;
      try {
        trials[i] = run_trial(x, y, plans[r], r, f, config.seed + static_cast<uint64_t>(r), config,
                              scale, rep.max_displacement_mm);
      } catch (const std::exception& e) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) {
          try {
            throw;
          } catch (const ValidationError&) {
            fatal = std::make_exception_ptr(ValidationError(
                "repeat " + std::to_string(r) + " fold " + std::to_string(f) + ": " + e.what()));
          } catch (...) {
            fatal = std::make_exception_ptr(SolverError(
                "repeat " + std::to_string(r) + " fold " + std::to_string(f) + ": " + e.what()));
          }
        }
        next = n_trials;
      }
    }
  };
  const int n_threads = std::clamp(config.workers, 1, n_trials);
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);

  double rmse_sum = 0.0, lpe_sum = 0.0, max_sum = 0.0;
  size_t n_samples = 0;
  std::map<int64_t, std::pair<double, int>> curve;
  for (auto& t : trials) {
    rmse_sum += t->rmse_mm;
    for (double m : t->max_lpe_mm) max_sum += m;
    lpe_sum += t->mean_lpe_mm * t->n_test;
    n_samples += t->max_lpe_mm.size();
    for (const auto& pt : t->curve) {
      if (!pt.test_rmse) continue;
      auto& acc = curve[pt.iteration];
      acc.first += scale.to_mm(*pt.test_rmse);
      ++acc.second;
    }
    rep.trials.push_back(std::move(*t));
  }
  rep.mean_rmse_mm = rmse_sum / n_trials;
  rep.mean_lpe_mm = lpe_sum / static_cast<double>(n_samples);
  rep.mean_max_lpe_mm = max_sum / static_cast<double>(n_samples);
  if (rep.max_displacement_mm > 0.0) {
    rep.mean_rmse_pct = rep.mean_rmse_mm / rep.max_displacement_mm * 100.0;
    rep.mean_max_lpe_pct = rep.mean_max_lpe_mm / rep.max_displacement_mm * 100.0;
  }
  for (const auto& [it, acc] : curve) rep.mean_curve_mm.emplace_back(it, acc.first / acc.second);
  return rep;
}

}  // namespace deformnet
