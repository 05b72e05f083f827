#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <span>
#include <string>
#include <vector>

#include "deformnet/mesh.hpp"

namespace deformnet {

/// Isotropic linear-elastic material. Young's modulus in Pa.
struct MaterialParams {
  double young_modulus = 1.0e6;
  double poisson_ratio = 0.40;

  void validate() const;
};

using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Matrix12 = Eigen::Matrix<double, 12, 12>;
using Matrix6x12 = Eigen::Matrix<double, 6, 12>;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Constitutive matrix in Voigt order (xx, yy, zz, xy, yz, zx) acting on
/// engineering shear strains. Throws ValidationError for nu >= 0.5.
Matrix6 elasticity_matrix(const MaterialParams& mat);

/// Constant strain-displacement matrix of a linear tetrahedron, with the
/// 12 nodal DOFs ordered (x0, y0, z0, x1, ..., z3). Also returns the volume.
/// Throws SolverError if the signed volume is not positive.
Matrix6x12 strain_displacement(std::span<const Vec3, 4> x, double* volume = nullptr);

/// K_e = volume * B^T D B.
Matrix12 element_stiffness(std::span<const Vec3, 4> x, const Matrix6& D);

enum class Elimination {
  kFixedDofs,  // drop rows/columns of fixed vertices (production path)
  kNone,       // keep all 3*N_a DOFs (floating body, tests)
};

/// Global stiffness over a DOF set. With kFixedDofs, DOF 3*f+a belongs to free
/// vertex f (see TetMesh::free_index); with kNone, to vertex f directly.
struct StiffnessSystem {
  SparseMatrix K;
  /// vertex -> first DOF index, or -1 when eliminated
  std::vector<int> dof_of_vertex;

  int num_dofs() const { return static_cast<int>(K.rows()); }
};

/// Sums scattered element blocks at `positions` (index-aligned with the
/// mesh vertices). `step` is only used in error messages. Throws SolverError
/// naming the tet when an element is degenerate or inverted.
StiffnessSystem assemble(const TetMesh& mesh, std::span<const Vec3> positions, const Matrix6& D,
                         Elimination elimination = Elimination::kFixedDofs, int step = 0);

/// Solution of K u = f with u prescribed on the contact DOFs and f = 0 on all
/// remaining DOFs:
///   u_n = -K_nn^{-1} K_nc u_c,  f_c = K_cc u_c + K_cn u_n.
struct ForcedDisplacementSolution {
  Eigen::VectorXd f_c;           // ordered like contact_dofs
  Eigen::VectorXd u_n;           // ordered like other_dofs
  std::vector<int> other_dofs;   // ascending DOFs not in contact_dofs
  double residual = 0.0;         // ||K_nn u_n + K_nc u_c||
};

/// Throws ValidationError for bad DOF lists or non-finite u_c and SolverError
/// if K_nn cannot be factorized.
ForcedDisplacementSolution solve_forced_displacement(const StiffnessSystem& sys,
                                                     std::span<const int> contact_dofs,
                                                     const Eigen::VectorXd& u_c);

struct DeformResult {
  /// Cumulative displacement of every free vertex, in free-index order.
  std::vector<Vec3> displacements;
  /// Total force on each contact vertex (sum of the per-step increments),
  /// ordered like the region's vertex list.
  std::vector<Vec3> contact_forces;
  /// Force increment of the last step only.
  std::vector<Vec3> final_step_forces;
  int steps = 0;
  std::vector<double> step_residuals;

  /// Displacements flattened vertex-major, 3 * N values.
  Eigen::VectorXd flattened() const;
};

/// Moves every vertex of `region` rigidly by `target_disp` in `n_steps`
/// equal increments. Each step re-assembles K from the current positions,
/// solves the forced-displacement problem for the increment and advances the
/// positions. Throws SolverError on element inversion or a singular system.
DeformResult deform(const TetMesh& mesh, const Matrix6& D, const std::string& region,
                    const Vec3& target_disp, int n_steps);

}  // namespace deformnet
