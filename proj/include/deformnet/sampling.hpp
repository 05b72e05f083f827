#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "deformnet/fem.hpp"
#include "deformnet/mesh.hpp"

namespace deformnet {

enum class SamplingMode { kBoxGrid, kEllipsoid };

/// Where the contact centroid of one region is sent. All lengths are in
/// simulation units.
///
/// Box grid: an axis-aligned lattice of `extents` centered on the contact
/// centroid. Ellipsoid: lattice points in a frame whose first axis is v_fc
/// (fixed centroid -> contact centroid), kept when
/// (d_para / r_para)^2 + (d_perp / r_perp)^2 <= 1 and, with a normal filter,
/// when the offset has a strictly positive dot product with v_nv.
struct SamplingSpec {
  SamplingMode mode = SamplingMode::kBoxGrid;
  Vec3 extents = Vec3::Zero();
  double r_para = 0.0;
  double r_perp = 0.0;
  double spacing = 0.0;
  /// Ellipsoid only. When `normal_filter` is set without `normal_override`,
  /// v_nv is the mean surface normal of the contact vertices.
  bool normal_filter = false;
  std::optional<Vec3> normal_override;
  /// When set, r_para, r_perp and spacing are fractions of a reference
  /// length l: `reference_length` if given, else the fixed-to-contact
  /// centroid distance.
  bool relative_to_reference = false;
  std::optional<double> reference_length;

  void validate() const;
};

/// Axis-aligned inclusive lattice, (extent_i / spacing + 1) points per axis,
/// in lexicographic (x outermost) order. Throws ValidationError for extents
/// that are not integer multiples of the spacing.
std::vector<Vec3> grid_points(const Vec3& center, const Vec3& extents, double spacing);

/// Orthonormal frame with first column along v_fc. The second column is the
/// global axis least parallel to v_fc, orthogonalized.
Eigen::Matrix3d sampling_frame(const Vec3& v_fc);

/// Ellipsoid lattice points around `contact_centroid`, in lexicographic
/// order of their integer frame coordinates. `v_nv` is consulted only when
/// spec.normal_filter is set. Throws ValidationError for a zero v_fc.
std::vector<Vec3> ellipsoid_points(const SamplingSpec& spec, const Vec3& contact_centroid,
                                   const Vec3& v_fc, const Vec3& v_nv = Vec3::Zero());

/// Per-region sampling request.
struct RegionSampling {
  std::string region;
  SamplingSpec spec;
};

/// Geometry derived from a mesh for one region.
struct RegionGeometry {
  Vec3 contact_centroid;
  Vec3 fixed_centroid;
  Vec3 v_fc;        // unnormalized contact - fixed
  Vec3 v_nv;        // unit mean normal of contact vertices (or override)
  double distance;  // |v_fc|, the reference length l of the ellipsoid study
};

RegionGeometry region_geometry(const TetMesh& mesh, const std::string& region,
                               const std::optional<Vec3>& normal_override = std::nullopt);

/// Target displacements (point - contact centroid) for one region.
std::vector<Vec3> sample_targets(const TetMesh& mesh, const RegionSampling& rs);

struct DeformationSample {
  int region_id = 0;
  Vec3 target_disp = Vec3::Zero();
  /// 3N free-vertex displacements, vertex-major.
  Eigen::VectorXd u_all;
  std::optional<std::vector<Vec3>> contact_forces;
};

struct FailedSample {
  int index = 0;
  int region_id = 0;
  Vec3 target_disp = Vec3::Zero();
  std::string reason;
};

struct Dataset {
  std::string mesh_hash;
  std::vector<int> observation_ids;
  std::vector<int> free_vertex_ids;
  std::vector<std::string> region_names;
  ScaleConvention scale;
  std::vector<DeformationSample> samples;

  int num_free() const { return static_cast<int>(free_vertex_ids.size()); }
  int num_observed() const { return static_cast<int>(observation_ids.size()); }
  int size() const { return static_cast<int>(samples.size()); }

  /// Free-vertex positions of the observation vertices.
  std::vector<int> observation_free_indices() const;
  /// 3*N_o x m network inputs sliced from u_all at the observation vertices.
  Eigen::MatrixXd inputs() const;
  /// 3*N x m network targets.
  Eigen::MatrixXd targets() const;
  /// Largest |target_disp| over samples, in simulation units.
  double max_contact_displacement() const;
};

struct BuildResult {
  Dataset dataset;
  std::vector<FailedSample> failures;
};

/// Runs the FEM for every (region, target) pair. Samples are ordered by
/// region (declaration order), then lattice order, independently of
/// `workers`. A sample whose FEM run fails is reported in `failures` and
/// left out of the dataset.
BuildResult build_dataset(const TetMesh& mesh, const Matrix6& D,
                          const std::vector<RegionSampling>& regions, int n_steps,
                          const ScaleConvention& scale, int workers = 1);

/// Binary dataset container, see README "Dataset file".
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
/// Throws ValidationError("mesh hash mismatch ...") when `ds` was not built
/// from `mesh`.
void require_same_mesh(const Dataset& ds, const TetMesh& mesh);
/// One row per sample: region, target, then u_all.
std::string dataset_csv(const Dataset& ds);

}  // namespace deformnet
