#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace deformnet {

using Vec3 = Eigen::Vector3d;
using Tet = std::array<int, 4>;

/// Millimeters per simulation unit. The default maps 256 mm to 1.0.
struct ScaleConvention {
  double mm_per_unit = 256.0;

  double to_mm(double units) const { return units * mm_per_unit; }
  double to_units(double mm) const { return mm / mm_per_unit; }
  void validate() const;
};

struct ContactRegion {
  std::string name;
  std::vector<int> vertex_ids;
};

/// Signed volume of a tetrahedron, positive when (p1-p0, p2-p0, p3-p0) is a
/// right-handed frame.
double signed_volume(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3);

/// Tetrahedral mesh with vertex roles. Coordinates are in simulation units.
///
/// The constructor validates every invariant and throws ValidationError
/// naming the offending index and rule:
///   - all role and tet indices are in range
///   - every tet has strictly positive signed volume
///   - fixed vertices are disjoint from contact regions and observations
///
/// Free vertices are the non-fixed vertices in ascending index order; their
/// position in that order is the "free index" used by every displacement
/// vector (3 DOFs per free vertex, x/y/z interleaved).
class TetMesh {
 public:
  TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets, std::vector<int> fixed_ids,
          std::vector<ContactRegion> contact_regions, std::vector<int> observation_ids);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Tet>& tets() const { return tets_; }
  const std::vector<int>& fixed_ids() const { return fixed_ids_; }
  const std::vector<ContactRegion>& contact_regions() const { return regions_; }
  const std::vector<int>& observation_ids() const { return observation_ids_; }
  const std::vector<int>& free_vertex_ids() const { return free_ids_; }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_free() const { return static_cast<int>(free_ids_.size()); }
  bool is_fixed(int v) const { return free_index_[v] < 0; }
  /// Position of vertex v among free vertices, or -1 for fixed vertices.
  int free_index(int v) const { return free_index_[v]; }

  /// Throws ValidationError if no region has this name.
  const ContactRegion& region(const std::string& name) const;
  int region_index(const std::string& name) const;

  Vec3 centroid(const std::vector<int>& ids) const;

  /// SHA-256 of the canonical text serialization.
  const std::string& content_hash() const { return hash_; }

 private:
  std::vector<Vec3> vertices_;
  std::vector<Tet> tets_;
  std::vector<int> fixed_ids_;
  std::vector<ContactRegion> regions_;
  std::vector<int> observation_ids_;
  std::vector<int> free_ids_;
  std::vector<int> free_index_;
  std::string hash_;
};

// ---------------------------------------------------------------------------
// Rectangular parallelepiped generator.

/// Lattice coordinate (i along the long x axis, j along y, k along z).
struct LatticeIndex {
  int i = 0, j = 0, k = 0;
};

/// Inclusive box of lattice coordinates.
struct LatticeBox {
  LatticeIndex lo, hi;
};

struct LatticeRegion {
  std::string name;
  std::vector<LatticeBox> boxes;
};

/// Rectangular parallelepiped, long side along x, square cross-section in y/z.
/// Lengths are in millimeters and converted with `scale`.
struct RppSpec {
  double long_side_mm = 256.0;
  double short_side_mm = 51.2;
  double spacing_mm = 25.6;
  ScaleConvention scale;
  std::vector<LatticeBox> fixed;
  std::vector<LatticeRegion> regions;
  std::vector<LatticeIndex> observations;
};

/// Default roles on the 11x3x3 lattice:
///   fixed: the 9 vertices of the x = 0 end face
///   regions: "tip" (the 9 vertices of the x = long end face) followed by five
///     3-vertex lines across the top, bottom and side faces
///   observations: three edge vertices, (5,0,2), (5,2,0), (8,2,2)
/// The original fixed/observation indices are not published; these are a
/// documented choice.
RppSpec default_rpp_spec();

/// Builds the regular lattice and splits each cube into 6 tetrahedra that all
/// share the cube's (0,0,0)-(1,1,1) diagonal (Kuhn split), so neighbouring
/// cells conform. Vertex index = i*(ny*nz) + j*nz + k.
TetMesh generate_rpp(const RppSpec& spec);

/// Irregular liver-like object: every vertex of `block` pushed through a
/// smooth taper-and-bend warp. Topology and roles are kept. The warp's
/// Jacobian determinant is the squared taper factor, so elements stay
/// positively oriented while `taper` * max x < 1.
TetMesh warp_liver_like(const TetMesh& block, double bend, double taper);

// ---------------------------------------------------------------------------

/// Boundary faces (faces owned by exactly one tet), oriented so that the
/// cross product (b-a)x(c-a) points out of the mesh.
std::vector<std::array<int, 3>> boundary_faces(const TetMesh& mesh);

/// Area-weighted unit normal at every boundary vertex. Interior vertices are
/// absent. Throws ValidationError naming a zero-area boundary face.
std::map<int, Vec3> vertex_normals(const TetMesh& mesh);

/// Text mesh format, see README "Mesh file". Positions are written with
/// shortest round-trip decimal representation.
std::string serialize_mesh(const TetMesh& mesh);
TetMesh parse_mesh(const std::string& text);
void save_mesh(const TetMesh& mesh, const std::string& path);
TetMesh load_mesh(const std::string& path);

}  // namespace deformnet
