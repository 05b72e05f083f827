#include "deformnet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "deformnet/error.hpp"
#include "deformnet/hash.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace deformnet {

namespace {

using json = nlohmann::json;

// Reads a JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& at(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ValidationError(where_ + ": missing key '" + key + "'");
    return j_.at(key);
  }
  template <typename T>
  T get(const std::string& key) {
    try {
      return at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }
  template <typename T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

LatticeIndex lattice_index(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(where + ": expected [i, j, k]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

std::vector<LatticeBox> lattice_boxes(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected a list of [[i,j,k],[i,j,k]] boxes");
  std::vector<LatticeBox> boxes;
  for (const auto& b : j) {
    if (!b.is_array() || b.size() != 2) throw ValidationError(where + ": box needs [lo, hi]");
    boxes.push_back({lattice_index(b[0], where), lattice_index(b[1], where)});
  }
  return boxes;
}

json index_json(const LatticeIndex& p) { return json::array({p.i, p.j, p.k}); }

json boxes_json(const std::vector<LatticeBox>& boxes) {
  json out = json::array();
  for (const auto& b : boxes) out.push_back(json::array({index_json(b.lo), index_json(b.hi)}));
  return out;
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

// Records what a command read and wrote. Timing and timestamp fields are
// the only non-deterministic content.
class Manifest {
 public:
  Manifest(std::string command, const PipelineConfig* cfg) : command_(std::move(command)) {
    j_["command"] = command_;
    if (cfg) j_["config"] = cfg->to_json();
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
    j_["timings_s"] = json::object();
  }
  void input(const std::string& path) { j_["inputs"][path] = sha256_file(path); }
  void output(const std::string& path) {
    j_["outputs"][path] = sha256_file(path);
    written_.push_back(path);
  }
  void timing(const std::string& stage, double s) { j_["timings_s"][stage] = s; }
  void note(const std::string& key, json value) { j_[key] = std::move(value); }
  std::vector<std::string> write(const std::string& dir) {
    j_["created_utc"] = utc_now();
    const std::string path = join(dir, "manifest_" + command_ + ".json");
    detail::write_file(path, j_.dump(1) + "\n");
    written_.push_back(path);
    return written_;
  }

 private:
  std::string command_;
  json j_;
  std::vector<std::string> written_;
};

std::string rmse_mode_name(RmseMode m) {
  return m == RmseMode::kComponent ? "component" : "vertex_norm";
}

SessionConfig session_config(const PipelineConfig& cfg) {
  SessionConfig s;
  s.train = cfg.train;
  s.hidden1 = cfg.hidden1;
  s.hidden2 = cfg.hidden2;
  s.k = cfg.eval_k;
  s.repeats = cfg.eval_repeats;
  s.seed = cfg.eval_seed;
  s.workers = cfg.resolved_workers();
  s.rmse_mode = cfg.rmse_mode;
  s.keep_predictions = true;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config.

PipelineConfig PipelineConfig::from_json(const json& root) {
  PipelineConfig c;
  Fields top(root, "config");
  c.name = top.get_or<std::string>("name", c.name);
  c.workers = top.get_or<int>("workers", 0);
  c.out_dir = top.get_or<std::string>("out", "");

  if (top.has("scale")) {
    Fields s(top.at("scale"), "scale");
    c.scale.mm_per_unit = s.get<double>("mm_per_unit");
  }
  c.rpp.scale = c.scale;

  {
    Fields m(top.at("mesh"), "mesh");
    const auto gen = m.get<std::string>("generator");
    if (gen == "file") {
      c.mesh_source = MeshSource::kFile;
      c.mesh_path = m.get<std::string>("path");
    } else if (gen == "rpp" || gen == "liver_like") {
      c.mesh_source = gen == "rpp" ? MeshSource::kRpp : MeshSource::kLiverLike;
      c.rpp.long_side_mm = m.get_or<double>("long_side_mm", c.rpp.long_side_mm);
      c.rpp.short_side_mm = m.get_or<double>("short_side_mm", c.rpp.short_side_mm);
      c.rpp.spacing_mm = m.get_or<double>("spacing_mm", c.rpp.spacing_mm);
      if (m.has("fixed")) c.rpp.fixed = lattice_boxes(m.at("fixed"), m.path("fixed"));
      if (m.has("regions")) {
        c.rpp.regions.clear();
        for (const auto& r : m.at("regions")) {
          Fields rf(r, m.path("regions"));
          c.rpp.regions.push_back(
              {rf.get<std::string>("name"), lattice_boxes(rf.at("boxes"), rf.path("boxes"))});
        }
      }
      if (m.has("observations")) {
        c.rpp.observations.clear();
        for (const auto& p : m.at("observations"))
          c.rpp.observations.push_back(lattice_index(p, m.path("observations")));
      }
      if (gen == "liver_like") {
        c.warp_bend = m.get<double>("bend");
        c.warp_taper = m.get<double>("taper");
      }
    } else {
      throw ValidationError("mesh.generator must be 'rpp', 'liver_like' or 'file'");
    }
  }

  if (top.has("material")) {
    Fields m(top.at("material"), "material");
    c.material.young_modulus = m.get_or<double>("young_modulus_pa", c.material.young_modulus);
    c.material.poisson_ratio = m.get_or<double>("poisson_ratio", c.material.poisson_ratio);
  }
  if (top.has("fem")) {
    Fields f(top.at("fem"), "fem");
    c.n_steps = f.get_or<int>("n_steps", c.n_steps);
  }

  for (const auto& s : top.at("sampling")) {
    Fields sf(s, "sampling");
    RegionSampling rs;
    rs.region = sf.get<std::string>("region");
    const auto mode = sf.get<std::string>("mode");
    const double mm = c.scale.mm_per_unit;
    if (mode == "box") {
      rs.spec.mode = SamplingMode::kBoxGrid;
      rs.spec.extents = vec3(sf.at("extents_mm"), sf.path("extents_mm")) / mm;
      rs.spec.spacing = sf.get<double>("spacing_mm") / mm;
    } else if (mode == "ellipsoid") {
      rs.spec.mode = SamplingMode::kEllipsoid;
      rs.spec.relative_to_reference = sf.get_or<bool>("relative", false);
      // Relative lengths are fractions of l; absolute ones are millimeters.
      const double unit = rs.spec.relative_to_reference ? 1.0 : 1.0 / mm;
      rs.spec.r_para = sf.get<double>("r_para") * unit;
      rs.spec.r_perp = sf.get<double>("r_perp") * unit;
      rs.spec.spacing = sf.get<double>("spacing") * unit;
      rs.spec.normal_filter = sf.get_or<bool>("normal_filter", false);
      if (sf.has("normal_override"))
        rs.spec.normal_override = vec3(sf.at("normal_override"), sf.path("normal_override")).normalized();
      if (sf.has("reference_length_mm"))
        rs.spec.reference_length = sf.get<double>("reference_length_mm") / mm;
    } else {
      throw ValidationError("sampling.mode must be 'box' or 'ellipsoid'");
    }
    c.sampling.push_back(rs);
  }

  if (top.has("train")) {
    Fields t(top.at("train"), "train");
    c.train.epochs = t.get_or<int>("epochs", c.train.epochs);
    c.train.batch_size = t.get_or<int>("batch_size", c.train.batch_size);
    c.train.inner_iters = t.get_or<int>("inner_iters", c.train.inner_iters);
    c.train.gamma = t.get_or<double>("gamma", c.train.gamma);
    if (t.has("lambdas")) {
      const auto l = t.get<std::vector<double>>("lambdas");
      if (l.size() != 3) throw ValidationError("train.lambdas needs 3 values");
      c.train.lambdas = {l[0], l[1], l[2]};
    }
    c.train.adam.beta1 = t.get_or<double>("beta1", c.train.adam.beta1);
    c.train.adam.beta2 = t.get_or<double>("beta2", c.train.adam.beta2);
    c.train.adam.epsilon = t.get_or<double>("epsilon", c.train.adam.epsilon);
    c.train.seed = t.get_or<uint64_t>("seed", c.train.seed);
    c.train.eval_every = t.get_or<int>("eval_every", c.train.eval_every);
  }
  if (top.has("hidden")) {
    const auto h = top.get<std::vector<int>>("hidden");
    if (h.size() != 2) throw ValidationError("hidden needs [M2, M3]");
    c.hidden1 = h[0];
    c.hidden2 = h[1];
  }
  if (top.has("eval")) {
    Fields e(top.at("eval"), "eval");
    c.eval_k = e.get_or<int>("k", c.eval_k);
    c.eval_repeats = e.get_or<int>("repeats", c.eval_repeats);
    c.eval_seed = e.get_or<uint64_t>("seed", c.eval_seed);
    c.save_predictions = e.get_or<bool>("save_predictions", c.save_predictions);
    const auto mode = e.get_or<std::string>("rmse_mode", "component");
    if (mode == "component") {
      c.rmse_mode = RmseMode::kComponent;
    } else if (mode == "vertex_norm") {
      c.rmse_mode = RmseMode::kVertexNorm;
    } else {
      throw ValidationError("eval.rmse_mode must be 'component' or 'vertex_norm'");
    }
  }
  c.validate();
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["name"] = name;
  j["scale"] = {{"mm_per_unit", scale.mm_per_unit}};
  json m;
  if (mesh_source == MeshSource::kFile) {
    m["generator"] = "file";
    m["path"] = mesh_path;
  } else {
    m["generator"] = mesh_source == MeshSource::kRpp ? "rpp" : "liver_like";
    m["long_side_mm"] = rpp.long_side_mm;
    m["short_side_mm"] = rpp.short_side_mm;
    m["spacing_mm"] = rpp.spacing_mm;
    m["fixed"] = boxes_json(rpp.fixed);
    json regions = json::array();
    for (const auto& r : rpp.regions) regions.push_back({{"name", r.name}, {"boxes", boxes_json(r.boxes)}});
    m["regions"] = regions;
    json obs = json::array();
    for (const auto& p : rpp.observations) obs.push_back(index_json(p));
    m["observations"] = obs;
    if (mesh_source == MeshSource::kLiverLike) {
      m["bend"] = warp_bend;
      m["taper"] = warp_taper;
    }
  }
  j["mesh"] = m;
  j["material"] = {{"young_modulus_pa", material.young_modulus},
                   {"poisson_ratio", material.poisson_ratio}};
  j["fem"] = {{"n_steps", n_steps}};
  json sampling_j = json::array();
  const double mm = scale.mm_per_unit;
  for (const auto& rs : sampling) {
    json s;
    s["region"] = rs.region;
    if (rs.spec.mode == SamplingMode::kBoxGrid) {
      s["mode"] = "box";
      s["extents_mm"] = vec_json(rs.spec.extents * mm);
      s["spacing_mm"] = rs.spec.spacing * mm;
    } else {
      s["mode"] = "ellipsoid";
      s["relative"] = rs.spec.relative_to_reference;
      const double unit = rs.spec.relative_to_reference ? 1.0 : mm;
      s["r_para"] = rs.spec.r_para * unit;
      s["r_perp"] = rs.spec.r_perp * unit;
      s["spacing"] = rs.spec.spacing * unit;
      s["normal_filter"] = rs.spec.normal_filter;
      if (rs.spec.normal_override) s["normal_override"] = vec_json(*rs.spec.normal_override);
      if (rs.spec.reference_length) s["reference_length_mm"] = *rs.spec.reference_length * mm;
    }
    sampling_j.push_back(s);
  }
  j["sampling"] = sampling_j;
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"inner_iters", train.inner_iters},
                {"gamma", train.gamma},
                {"lambdas", {train.lambdas.ih, train.lambdas.ji, train.lambdas.kj}},
                {"beta1", train.adam.beta1},
                {"beta2", train.adam.beta2},
                {"epsilon", train.adam.epsilon},
                {"seed", train.seed},
                {"eval_every", train.eval_every}};
  j["hidden"] = {hidden1, hidden2};
  j["eval"] = {{"k", eval_k},
               {"repeats", eval_repeats},
               {"seed", eval_seed},
               {"rmse_mode", rmse_mode_name(rmse_mode)},
               {"save_predictions", save_predictions}};
  j["workers"] = workers;
  j["out"] = out_dir;
  return j;
}

void PipelineConfig::validate() const {
  scale.validate();
  material.validate();
  if (n_steps < 1) throw ValidationError("fem.n_steps must be >= 1");
  if (sampling.empty()) throw ValidationError("sampling: at least one region is required");
  for (const auto& rs : sampling) rs.spec.validate();
  train.validate();
  if (hidden1 < 1 || hidden2 < 1) throw ValidationError("hidden sizes must be >= 1");
  if (eval_k < 2) throw ValidationError("eval.k must be >= 2");
  if (eval_repeats < 1) throw ValidationError("eval.repeats must be >= 1");
  if (workers < 0) throw ValidationError("workers must be >= 0");
  if (mesh_source == MeshSource::kFile && mesh_path.empty())
    throw ValidationError("mesh.path is required for generator 'file'");
  if (mesh_source != MeshSource::kFile) {
    std::set<std::string> names;
    for (const auto& r : rpp.regions) names.insert(r.name);
    for (const auto& rs : sampling)
      if (!names.count(rs.region))
        throw ValidationError("sampling references unknown region '" + rs.region + "'");
  }
}

int PipelineConfig::resolved_workers() const {
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

PipelineConfig load_config(const std::string& path) {
  const std::string text = detail::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  PipelineConfig cfg = PipelineConfig::from_json(j);
  // Relative mesh paths are resolved against the config's directory.
  if (cfg.mesh_source == MeshSource::kFile && fs::path(cfg.mesh_path).is_relative())
    cfg.mesh_path = (fs::path(path).parent_path() / cfg.mesh_path).string();
  return cfg;
}

namespace {

std::vector<fs::path> profile_dirs() {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("DEFORMNET_PROFILE_DIR")) dirs.emplace_back(env);
#ifdef DEFORMNET_PROFILE_DIR
  dirs.emplace_back(DEFORMNET_PROFILE_DIR);
#endif
  return dirs;
}

}  // namespace

PipelineConfig load_profile(const std::string& name) {
  for (const auto& dir : profile_dirs()) {
    const fs::path p = dir / (name + ".json");
    if (fs::exists(p)) return load_config(p.string());
  }
  throw ValidationError("unknown profile '" + name + "'");
}

std::vector<std::string> profile_names() {
  std::set<std::string> names;
  for (const auto& dir : profile_dirs()) {
    if (!fs::is_directory(dir)) continue;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") names.insert(e.path().stem().string());
  }
  return {names.begin(), names.end()};
}

std::string default_out_dir(const PipelineConfig& cfg) {
  const char* env = std::getenv("DEFORMNET_OUT");
  const fs::path root = env && *env ? fs::path(env) : fs::path("deformnet_out");
  return (root / cfg.name).string();
}

TetMesh build_mesh(const PipelineConfig& cfg) {
  switch (cfg.mesh_source) {
    case MeshSource::kFile:
      return load_mesh(cfg.mesh_path);
    case MeshSource::kLiverLike:
      return warp_liver_like(generate_rpp(cfg.rpp), cfg.warp_bend, cfg.warp_taper);
    case MeshSource::kRpp:
      break;
  }
  return generate_rpp(cfg.rpp);
}

// ---------------------------------------------------------------------------
// Commands.

namespace {

const std::string& out_dir_of(const PipelineConfig& cfg) {
  if (cfg.out_dir.empty()) throw ValidationError("no output directory configured");
  return cfg.out_dir;
}

}  // namespace

std::vector<std::string> cmd_mesh(const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string& dir = out_dir_of(cfg);
  Manifest manifest("mesh", &cfg);
  if (cfg.mesh_source == MeshSource::kFile) manifest.input(cfg.mesh_path);
  const TetMesh mesh = build_mesh(cfg);
  const std::string path = join(dir, "mesh.tet");
  save_mesh(mesh, path);
  manifest.output(path);
  manifest.note("mesh_hash", mesh.content_hash());
  manifest.note("counts", {{"vertices", mesh.num_vertices()},
                           {"tets", mesh.tets().size()},
                           {"fixed", mesh.fixed_ids().size()},
                           {"free", mesh.num_free()},
                           {"observed", mesh.observation_ids().size()}});
  manifest.timing("total", seconds_since(t0));
  return manifest.write(dir);
}

std::vector<std::string> cmd_sample(const PipelineConfig& cfg, bool write_csv) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string& dir = out_dir_of(cfg);
  Manifest manifest("sample", &cfg);
  if (cfg.mesh_source == MeshSource::kFile) manifest.input(cfg.mesh_path);
  const TetMesh mesh = build_mesh(cfg);
  const std::string mesh_path = join(dir, "mesh.tet");
  save_mesh(mesh, mesh_path);
  manifest.output(mesh_path);

  const BuildResult built = build_dataset(mesh, elasticity_matrix(cfg.material), cfg.sampling,
                                          cfg.n_steps, cfg.scale, cfg.resolved_workers());
  if (built.dataset.samples.empty())
    throw SolverError("every sample failed; first reason: " +
                      (built.failures.empty() ? std::string("none") : built.failures[0].reason));
  const std::string ds_path = join(dir, "dataset.bin");
  save_dataset(built.dataset, ds_path);
  manifest.output(ds_path);

  std::ostringstream failures;
  failures << "index,region,tx,ty,tz,reason\n";
  for (const auto& f : built.failures)
    failures << f.index << ',' << built.dataset.region_names[f.region_id] << ','
             << detail::format_double(f.target_disp.x()) << ','
             << detail::format_double(f.target_disp.y()) << ','
             << detail::format_double(f.target_disp.z()) << ",\"" << f.reason << "\"\n";
  const std::string fail_path = join(dir, "failures.csv");
  detail::write_file(fail_path, failures.str());
  manifest.output(fail_path);
  if (write_csv) {
    const std::string csv_path = join(dir, "dataset.csv");
    detail::write_file(csv_path, dataset_csv(built.dataset));
    manifest.output(csv_path);
  }
  manifest.note("mesh_hash", mesh.content_hash());
  manifest.note("samples", built.dataset.size());
  manifest.note("failed_samples", built.failures.size());
  manifest.timing("total", seconds_since(t0));
  return manifest.write(dir);
}

std::vector<std::string> cmd_train(const PipelineConfig& cfg, const std::string& dataset_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string& dir = out_dir_of(cfg);
  Manifest manifest("train", &cfg);
  manifest.input(dataset_path);
  const Dataset ds = load_dataset(dataset_path);
  require_same_mesh(ds, build_mesh(cfg));

  std::vector<int> all(ds.size());
  for (int i = 0; i < ds.size(); ++i) all[i] = i;
  const Eigen::MatrixXd x = ds.inputs(), y = ds.targets();
  const TrainResult tr = train(x, y, all, cfg.train, cfg.hidden1, cfg.hidden2);

  ModelFile mf;
  mf.model = tr.model;
  mf.observation_ids = ds.observation_ids;
  mf.free_vertex_ids = ds.free_vertex_ids;
  mf.mesh_hash = ds.mesh_hash;
  mf.scale = ds.scale;
  mf.config = cfg.train;
  mf.metrics = {{"train_rmse_mm", rmse_mm(forward(tr.model, x).a_k, y, ds.scale, cfg.rmse_mode)},
                {"final_epoch_cost", tr.log.epoch_mean_cost.back()},
                {"updates", static_cast<double>(tr.log.updates)}};
  const std::string path = join(dir, "model.json");
  save_model(mf, path);
  manifest.output(path);
  manifest.note("seed", cfg.train.seed);
  manifest.timing("total", seconds_since(t0));
  return manifest.write(dir);
}

std::vector<std::string> cmd_eval(const PipelineConfig& cfg, const std::string& dataset_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string& dir = out_dir_of(cfg);
  Manifest manifest("eval", &cfg);
  manifest.input(dataset_path);
  const Dataset ds = load_dataset(dataset_path);
  const TetMesh mesh = build_mesh(cfg);
  require_same_mesh(ds, mesh);

  const SessionReport rep = run_session(ds, session_config(cfg));
  auto emit = [&](const std::string& name, const std::string& body) {
    const std::string path = join(dir, name);
    detail::write_file(path, body);
    manifest.output(path);
  };
  emit("report.json", session_json(rep));
  emit("trials.csv", trials_csv(rep));
  emit("curve.csv", curve_csv(rep));
  emit("max_lpe.csv", max_lpe_csv(rep));

  // Deformed shape of the first test sample of the first trial.
  const TrialReport& first = rep.trials.front();
  const Eigen::VectorXd pred = first.predictions->col(0);
  const Eigen::VectorXd truth = ds.samples[first.test_indices[0]].u_all;
  const LpeResult lpe = local_positional_error(pred, truth, ds.scale);
  emit("shape_estimated.vtk", deformed_vtk(mesh, pred, lpe.per_vertex_mm, "estimated deformation"));
  emit("shape_true.vtk", deformed_vtk(mesh, truth, {}, "simulated deformation"));

  if (cfg.save_predictions) {
    for (const auto& t : rep.trials) {
      std::ostringstream csv;
      csv << "sample";
      for (int v : ds.free_vertex_ids) csv << ",u" << v << "x,u" << v << "y,u" << v << "z";
      csv << '\n';
      for (int c = 0; c < t.n_test; ++c) {
        csv << t.test_indices[c];
        for (Eigen::Index i = 0; i < t.predictions->rows(); ++i)
          csv << ',' << detail::format_double((*t.predictions)(i, c));
        csv << '\n';
      }
      emit("predictions/trial_" + std::to_string(t.repeat) + "_" + std::to_string(t.fold) + ".csv",
           csv.str());
    }
  }
  manifest.note("mesh_hash", ds.mesh_hash);
  manifest.note("seed", cfg.eval_seed);
  manifest.note("mean_rmse_mm", rep.mean_rmse_mm);
  manifest.note("mean_rmse_pct", rep.mean_rmse_pct);
  manifest.timing("total", seconds_since(t0));
  return manifest.write(dir);
}

Field read_observation_csv(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::vector<Vec3> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto tok = detail::split_ws(line);
    if (line_no == 1 && !tok.empty() && (tok[0] == "x" || tok[0] == "ux")) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    if (tok.size() != 3) throw ValidationError(where + ": expected x,y,z");
    rows.emplace_back(detail::parse_double(tok[0], where), detail::parse_double(tok[1], where),
                      detail::parse_double(tok[2], where));
  }
  Field f(rows.size(), 3);
  for (size_t i = 0; i < rows.size(); ++i) f.row(i) = rows[i].transpose();
  return f;
}

std::vector<std::string> cmd_predict(const std::string& model_path, const std::string& obs_csv,
                                     const std::string& mesh_path, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  Manifest manifest("predict", nullptr);
  manifest.input(model_path);
  manifest.input(obs_csv);
  const ModelFile mf = load_model(model_path);
  const Field obs_mm = read_observation_csv(obs_csv);
  const Field field = predict(mf.model, obs_mm / mf.scale.mm_per_unit);

  std::ostringstream csv;
  csv << "vertex,ux_mm,uy_mm,uz_mm\n";
  for (Eigen::Index r = 0; r < field.rows(); ++r)
    csv << mf.free_vertex_ids[r] << ',' << detail::format_double(mf.scale.to_mm(field(r, 0))) << ','
        << detail::format_double(mf.scale.to_mm(field(r, 1))) << ','
        << detail::format_double(mf.scale.to_mm(field(r, 2))) << '\n';
  const std::string csv_path = join(out_dir, "field.csv");
  detail::write_file(csv_path, csv.str());
  manifest.output(csv_path);

  if (!mesh_path.empty()) {
    manifest.input(mesh_path);
    const TetMesh mesh = load_mesh(mesh_path);
    if (mesh.content_hash() != mf.mesh_hash)
      throw ValidationError("mesh hash mismatch: model " + mf.mesh_hash + ", mesh " +
                            mesh.content_hash());
    const Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(field.data(), field.size());
    const std::string vtk_path = join(out_dir, "field.vtk");
    detail::write_file(vtk_path, deformed_vtk(mesh, u, {}, "estimated deformation"));
    manifest.output(vtk_path);
  }
  manifest.timing("total", seconds_since(t0));
  return manifest.write(out_dir);
}

std::vector<std::string> cmd_repro(const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string& dir = out_dir_of(cfg);
  Manifest manifest("repro", &cfg);
  std::vector<std::string> written;
  auto add = [&](std::vector<std::string> files) {
    written.insert(written.end(), files.begin(), files.end());
  };
  const auto t_sample = std::chrono::steady_clock::now();
  add(cmd_sample(cfg));
  manifest.timing("sample", seconds_since(t_sample));
  const std::string ds_path = join(dir, "dataset.bin");
  const auto t_train = std::chrono::steady_clock::now();
  add(cmd_train(cfg, ds_path));
  manifest.timing("train", seconds_since(t_train));
  const auto t_eval = std::chrono::steady_clock::now();
  add(cmd_eval(cfg, ds_path));
  manifest.timing("eval", seconds_since(t_eval));
  for (const auto& f : written)
    if (fs::path(f).filename().string().rfind("manifest_", 0) != 0) manifest.output(f);
  manifest.timing("total", seconds_since(t0));
  written.push_back(manifest.write(dir).back());
  return written;
}

}  // namespace deformnet
