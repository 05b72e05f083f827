#include "deformnet/sampling.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "deformnet/error.hpp"

namespace deformnet {

void SamplingSpec::validate() const {
  if (!(spacing > 0.0)) throw ValidationError("sampling: spacing must be positive");
  if (mode == SamplingMode::kBoxGrid) {
    if (!extents.allFinite() || (extents.array() < 0.0).any())
      throw ValidationError("sampling: box extents must be >= 0");
  } else {
    if (!(r_para > 0.0) || !(r_perp > 0.0))
      throw ValidationError("sampling: ellipsoid radii must be positive");
    if (normal_override && std::abs(normal_override->norm() - 1.0) > 1e-9)
      throw ValidationError("sampling: normal override must be a unit vector");
  }
  if (reference_length && !(*reference_length > 0.0))
    throw ValidationError("sampling: reference length must be positive");
}

std::vector<Vec3> grid_points(const Vec3& center, const Vec3& extents, double spacing) {
  if (!(spacing > 0.0)) throw ValidationError("grid: spacing must be positive");
  std::array<int, 3> counts{};
  for (int a = 0; a < 3; ++a) {
    if (!(extents[a] >= 0.0)) throw ValidationError("grid: extents must be >= 0");
    const double cells = extents[a] / spacing;
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 * std::max(1.0, rounded))
      throw ValidationError("grid: extent " + std::to_string(a) +
                            " is not an integer multiple of the spacing");
    counts[a] = static_cast<int>(rounded) + 1;
  }
  const Vec3 origin = center - 0.5 * extents;
  std::vector<Vec3> points;
  points.reserve(static_cast<size_t>(counts[0]) * counts[1] * counts[2]);
  for (int i = 0; i < counts[0]; ++i)
    for (int j = 0; j < counts[1]; ++j)
      for (int k = 0; k < counts[2]; ++k)
        points.push_back(origin + Vec3(i * spacing, j * spacing, k * spacing));
  return points;
}

Eigen::Matrix3d sampling_frame(const Vec3& v_fc) {
  const double len = v_fc.norm();
  if (!(len > 0.0) || !std::isfinite(len))
    throw ValidationError("sampling: v_fc has zero length");
  const Vec3 e1 = v_fc / len;
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(e1[a]) < std::abs(e1[axis])) axis = a;
  Vec3 e2 = Vec3::Unit(axis) - e1[axis] * e1;
  e2.normalize();
  Eigen::Matrix3d frame;
  frame.col(0) = e1;
  frame.col(1) = e2;
  frame.col(2) = e1.cross(e2);
  return frame;
}

std::vector<Vec3> ellipsoid_points(const SamplingSpec& spec, const Vec3& contact_centroid,
                                   const Vec3& v_fc, const Vec3& v_nv) {
  if (spec.mode != SamplingMode::kEllipsoid)
    throw ValidationError("ellipsoid_points: spec is not in ellipsoid mode");
  spec.validate();
  const Eigen::Matrix3d frame = sampling_frame(v_fc);
  const double s = spec.spacing;
  const int n_para = static_cast<int>(std::ceil(spec.r_para / s));
  const int n_perp = static_cast<int>(std::ceil(spec.r_perp / s));
  const double nv_norm = v_nv.norm();
  if (spec.normal_filter && !(nv_norm > 0.0))
    throw ValidationError("ellipsoid_points: normal filter needs a non-zero v_nv");

  std::vector<Vec3> points;
  for (int a = -n_para; a <= n_para; ++a) {
    const double q_para = a * s / spec.r_para;
    for (int b = -n_perp; b <= n_perp; ++b)
      for (int c = -n_perp; c <= n_perp; ++c) {
        const double q_perp2 = (double(b) * b + double(c) * c) * s * s / (spec.r_perp * spec.r_perp);
        if (q_para * q_para + q_perp2 > 1.0 + 1e-12) continue;
        const Vec3 offset = s * (a * frame.col(0) + b * frame.col(1) + c * frame.col(2));
        // Strictly acute; the tolerance keeps perpendicular offsets out.
        if (spec.normal_filter && !(offset.dot(v_nv) > 1e-12 * offset.norm() * nv_norm)) continue;
        points.push_back(contact_centroid + offset);
      }
  }
  return points;
}

RegionGeometry region_geometry(const TetMesh& mesh, const std::string& region,
                               const std::optional<Vec3>& normal_override) {
  const ContactRegion& r = mesh.region(region);
  RegionGeometry g;
  g.contact_centroid = mesh.centroid(r.vertex_ids);
  g.fixed_centroid = mesh.fixed_ids().empty() ? g.contact_centroid : mesh.centroid(mesh.fixed_ids());
  g.v_fc = g.contact_centroid - g.fixed_centroid;
  g.distance = g.v_fc.norm();
  if (normal_override) {
    g.v_nv = normal_override->normalized();
  } else {
    const auto normals = vertex_normals(mesh);
    Vec3 sum = Vec3::Zero();
    for (int v : r.vertex_ids) {
      auto it = normals.find(v);
      if (it != normals.end()) sum += it->second;
    }
    g.v_nv = sum.norm() > 0.0 ? Vec3(sum.normalized()) : Vec3::Zero();
  }
  return g;
}

std::vector<Vec3> sample_targets(const TetMesh& mesh, const RegionSampling& rs) {
  rs.spec.validate();
  const bool ellipsoid = rs.spec.mode == SamplingMode::kEllipsoid;
  const RegionGeometry g = region_geometry(mesh, rs.region, rs.spec.normal_override);
  SamplingSpec spec = rs.spec;
  if (spec.relative_to_reference) {
    const double l = spec.reference_length.value_or(g.distance);
    if (!(l > 0.0)) throw ValidationError("sampling: reference length is zero");
    spec.r_para *= l;
    spec.r_perp *= l;
    spec.spacing *= l;
    spec.extents *= l;
  }
  std::vector<Vec3> points;
  if (ellipsoid) {
    if (spec.normal_filter && !(g.v_nv.norm() > 0.0))
      throw ValidationError("sampling: region '" + rs.region + "' has no boundary normal");
    points = ellipsoid_points(spec, g.contact_centroid, g.v_fc, g.v_nv);
  } else {
    points = grid_points(g.contact_centroid, spec.extents, spec.spacing);
  }
  for (auto& p : points) p -= g.contact_centroid;
  return points;
}

// ---------------------------------------------------------------------------

std::vector<int> Dataset::observation_free_indices() const {
  std::vector<int> out;
  for (int v : observation_ids) {
    auto it = std::lower_bound(free_vertex_ids.begin(), free_vertex_ids.end(), v);
    if (it == free_vertex_ids.end() || *it != v)
      throw ValidationError("dataset: observation vertex " + std::to_string(v) + " is not free");
    out.push_back(static_cast<int>(it - free_vertex_ids.begin()));
  }
  return out;
}

Eigen::MatrixXd Dataset::inputs() const {
  const auto obs = observation_free_indices();
  Eigen::MatrixXd X(3 * obs.size(), samples.size());
  for (size_t d = 0; d < samples.size(); ++d)
    for (size_t o = 0; o < obs.size(); ++o)
      X.col(d).segment<3>(3 * o) = samples[d].u_all.segment<3>(3 * obs[o]);
  return X;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd Y(3 * num_free(), samples.size());
  for (size_t d = 0; d < samples.size(); ++d) Y.col(d) = samples[d].u_all;
  return Y;
}

double Dataset::max_contact_displacement() const {
  double m = 0.0;
  for (const auto& s : samples) m = std::max(m, s.target_disp.norm());
  return m;
}

BuildResult build_dataset(const TetMesh& mesh, const Matrix6& D,
                          const std::vector<RegionSampling>& regions, int n_steps,
                          const ScaleConvention& scale, int workers) {
  if (regions.empty()) throw ValidationError("build_dataset: no regions to sample");
  if (n_steps < 1) throw ValidationError("build_dataset: n_steps must be >= 1");
  scale.validate();

  struct Job {
    int region_id;
    Vec3 target;
  };
  std::vector<Job> jobs;
  Dataset ds;
  ds.mesh_hash = mesh.content_hash();
  ds.observation_ids = mesh.observation_ids();
  ds.free_vertex_ids = mesh.free_vertex_ids();
  ds.scale = scale;
  for (size_t r = 0; r < regions.size(); ++r) {
    mesh.region(regions[r].region);
    ds.region_names.push_back(regions[r].region);
    for (const Vec3& t : sample_targets(mesh, regions[r])) jobs.push_back({static_cast<int>(r), t});
  }

  std::vector<std::optional<DeformationSample>> done(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto work = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& job = jobs[i];
        DeformResult res = deform(mesh, D, regions[job.region_id].region, job.target, n_steps);
        DeformationSample s;
        s.region_id = job.region_id;
        s.target_disp = job.target;
        s.u_all = res.flattened();
        s.contact_forces = std::move(res.contact_forces);
        done[i] = std::move(s);
      } catch (const SolverError& e) {
        errors[i] = e.what();
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);

  BuildResult out;
  for (size_t i = 0; i < jobs.size(); ++i) {
    if (done[i]) {
      ds.samples.push_back(std::move(*done[i]));
    } else {
      out.failures.push_back({static_cast<int>(i), jobs[i].region_id, jobs[i].target, errors[i]});
    }
  }
  out.dataset = std::move(ds);
  return out;
}

}  // namespace deformnet
