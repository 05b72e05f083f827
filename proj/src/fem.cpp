#include "deformnet/fem.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

#include "deformnet/error.hpp"

namespace deformnet {

void MaterialParams::validate() const {
  if (!(young_modulus > 0.0) || !std::isfinite(young_modulus))
    throw ValidationError("material: young_modulus must be positive");
  if (!(poisson_ratio >= 0.0))
    throw ValidationError("material: poisson_ratio must be >= 0");
  if (!(poisson_ratio < 0.5))
    throw ValidationError("material: poisson_ratio >= 0.5 gives a singular elasticity matrix");
}

Matrix6 elasticity_matrix(const MaterialParams& mat) {
  mat.validate();
  const double E = mat.young_modulus;
  const double nu = mat.poisson_ratio;
  const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  Matrix6 D = Matrix6::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) D(a, b) = lambda;
    D(a, a) = lambda + 2.0 * mu;
    D(a + 3, a + 3) = mu;
  }
  return D;
}

Matrix6x12 strain_displacement(std::span<const Vec3, 4> x, double* volume) {
  Eigen::Matrix3d edges;
  edges.col(0) = x[1] - x[0];
  edges.col(1) = x[2] - x[0];
  edges.col(2) = x[3] - x[0];
  const double vol = edges.determinant() / 6.0;
  if (!(vol > 0.0)) throw SolverError("degenerate or inverted element (volume <= 0)");
  if (volume) *volume = vol;

  // Rows of edges^{-1} are the gradients of the shape functions of nodes 1..3.
  const Eigen::Matrix3d inv = edges.inverse();
  Eigen::Matrix<double, 4, 3> grad;
  grad.row(0) = -inv.colwise().sum();
  grad.bottomRows<3>() = inv;

  Matrix6x12 B = Matrix6x12::Zero();
  for (int a = 0; a < 4; ++a) {
    const double dx = grad(a, 0), dy = grad(a, 1), dz = grad(a, 2);
    const int c = 3 * a;
    B(0, c) = dx;
    B(1, c + 1) = dy;
    B(2, c + 2) = dz;
    B(3, c) = dy;
    B(3, c + 1) = dx;
    B(4, c + 1) = dz;
    B(4, c + 2) = dy;
    B(5, c) = dz;
    B(5, c + 2) = dx;
  }
  return B;
}

Matrix12 element_stiffness(std::span<const Vec3, 4> x, const Matrix6& D) {
  double vol = 0.0;
  const Matrix6x12 B = strain_displacement(x, &vol);
  Matrix12 Ke = vol * (B.transpose() * D * B);
  // Symmetrize away the rounding asymmetry of the triple product.
  return 0.5 * (Ke + Ke.transpose());
}

StiffnessSystem assemble(const TetMesh& mesh, std::span<const Vec3> positions, const Matrix6& D,
                         Elimination elimination, int step) {
  if (static_cast<int>(positions.size()) != mesh.num_vertices())
    throw ValidationError("assemble: position count does not match the mesh");

  StiffnessSystem sys;
  sys.dof_of_vertex.resize(mesh.num_vertices());
  int n_dofs = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (elimination == Elimination::kFixedDofs && mesh.is_fixed(v)) {
      sys.dof_of_vertex[v] = -1;
    } else {
      sys.dof_of_vertex[v] = n_dofs;
      n_dofs += 3;
    }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(mesh.tets().size() * 144);
  const auto& tets = mesh.tets();
  for (size_t t = 0; t < tets.size(); ++t) {
    const Tet& tet = tets[t];
    const std::array<Vec3, 4> x = {positions[tet[0]], positions[tet[1]], positions[tet[2]],
                                   positions[tet[3]]};
    Matrix12 Ke;
    try {
      Ke = element_stiffness(x, D);
    } catch (const SolverError&) {
      throw SolverError("element inverted: tet " + std::to_string(t) + " (vertices " +
                        std::to_string(tet[0]) + " " + std::to_string(tet[1]) + " " +
                        std::to_string(tet[2]) + " " + std::to_string(tet[3]) + ") at step " +
                        std::to_string(step));
    }
    for (int a = 0; a < 4; ++a) {
      const int ra = sys.dof_of_vertex[tet[a]];
      if (ra < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int cb = sys.dof_of_vertex[tet[b]];
        if (cb < 0) continue;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            triplets.emplace_back(ra + i, cb + j, Ke(3 * a + i, 3 * b + j));
      }
    }
  }
  sys.K.resize(n_dofs, n_dofs);
  sys.K.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

ForcedDisplacementSolution solve_forced_displacement(const StiffnessSystem& sys,
                                                     std::span<const int> contact_dofs,
                                                     const Eigen::VectorXd& u_c) {
  const int n = sys.num_dofs();
  if (contact_dofs.empty()) throw ValidationError("forced displacement: no contact DOFs");
  if (static_cast<size_t>(u_c.size()) != contact_dofs.size())
    throw ValidationError("forced displacement: u_c length does not match contact DOFs");
  if (!u_c.allFinite()) throw ValidationError("forced displacement: non-finite u_c");

  // slot[d] >= 0: position among contact DOFs; slot[d] < 0: -(1 + position among others)
  std::vector<int> slot(n, 0);
  std::vector<bool> is_contact(n, false);
  for (size_t i = 0; i < contact_dofs.size(); ++i) {
    const int d = contact_dofs[i];
    if (d < 0 || d >= n)
      throw ValidationError("forced displacement: contact DOF " + std::to_string(d) +
                            " out of range");
    if (is_contact[d])
      throw ValidationError("forced displacement: duplicate contact DOF " + std::to_string(d));
    is_contact[d] = true;
    slot[d] = static_cast<int>(i);
  }
  ForcedDisplacementSolution sol;
  for (int d = 0; d < n; ++d) {
    if (is_contact[d]) continue;
    slot[d] = -1 - static_cast<int>(sol.other_dofs.size());
    sol.other_dofs.push_back(d);
  }
  const int nc = static_cast<int>(contact_dofs.size());
  const int nn = static_cast<int>(sol.other_dofs.size());

  std::vector<Eigen::Triplet<double>> t_nn;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nn);  // K_nc u_c
  sol.f_c = Eigen::VectorXd::Zero(nc);              // K_cc u_c (+ K_cn u_n below)
  for (int col = 0; col < sys.K.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(sys.K, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (!is_contact[r] && !is_contact[c]) {
        t_nn.emplace_back(-1 - slot[r], -1 - slot[c], it.value());
      } else if (!is_contact[r] && is_contact[c]) {
        rhs[-1 - slot[r]] += it.value() * u_c[slot[c]];
      } else if (is_contact[r] && is_contact[c]) {
        sol.f_c[slot[r]] += it.value() * u_c[slot[c]];
      }
    }
  }

  sol.u_n = Eigen::VectorXd::Zero(nn);
  if (nn > 0) {
    SparseMatrix K_nn(nn, nn);
    K_nn.setFromTriplets(t_nn.begin(), t_nn.end());
    Eigen::SimplicialLLT<SparseMatrix> llt(K_nn);
    if (llt.info() != Eigen::Success)
      throw SolverError("stiffness matrix of the unconstrained DOFs is singular");
    sol.u_n = -llt.solve(rhs);
    if (llt.info() != Eigen::Success || !sol.u_n.allFinite())
      throw SolverError("forced displacement solve failed");
    sol.residual = (K_nn * sol.u_n + rhs).norm();

    for (int col = 0; col < sys.K.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(sys.K, col); it; ++it) {
        const int r = static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        if (is_contact[r] && !is_contact[c]) sol.f_c[slot[r]] += it.value() * sol.u_n[-1 - slot[c]];
      }
  }
  return sol;
}

Eigen::VectorXd DeformResult::flattened() const {
  Eigen::VectorXd out(3 * displacements.size());
  for (size_t i = 0; i < displacements.size(); ++i) out.segment<3>(3 * i) = displacements[i];
  return out;
}

DeformResult deform(const TetMesh& mesh, const Matrix6& D, const std::string& region,
                    const Vec3& target_disp, int n_steps) {
  if (n_steps < 1) throw ValidationError("deform: n_steps must be >= 1");
  if (!target_disp.allFinite()) throw ValidationError("deform: non-finite target displacement");
  const ContactRegion& contact = mesh.region(region);

  std::vector<int> contact_dofs;
  for (int v : contact.vertex_ids)
    for (int a = 0; a < 3; ++a) contact_dofs.push_back(3 * mesh.free_index(v) + a);
  const Vec3 step_disp = target_disp / static_cast<double>(n_steps);
  Eigen::VectorXd du_c(contact_dofs.size());
  for (size_t i = 0; i < contact.vertex_ids.size(); ++i) du_c.segment<3>(3 * i) = step_disp;

  std::vector<Vec3> positions = mesh.vertices();
  const auto& free_ids = mesh.free_vertex_ids();

  DeformResult result;
  result.displacements.assign(free_ids.size(), Vec3::Zero());
  result.contact_forces.assign(contact.vertex_ids.size(), Vec3::Zero());
  result.final_step_forces.assign(contact.vertex_ids.size(), Vec3::Zero());
  result.step_residuals.reserve(n_steps);

  Eigen::VectorXd du(3 * free_ids.size());
  for (int step = 0; step < n_steps; ++step) {
    const StiffnessSystem sys = assemble(mesh, positions, D, Elimination::kFixedDofs, step);
    const ForcedDisplacementSolution sol = solve_forced_displacement(sys, contact_dofs, du_c);
    for (size_t i = 0; i < contact_dofs.size(); ++i) du[contact_dofs[i]] = du_c[i];
    for (size_t i = 0; i < sol.other_dofs.size(); ++i) du[sol.other_dofs[i]] = sol.u_n[i];

    for (size_t f = 0; f < free_ids.size(); ++f) {
      const Vec3 d = du.segment<3>(3 * f);
      result.displacements[f] += d;
      positions[free_ids[f]] += d;
    }
    for (size_t i = 0; i < contact.vertex_ids.size(); ++i) {
      const Vec3 df = sol.f_c.segment<3>(3 * i);
      result.contact_forces[i] += df;
      result.final_step_forces[i] = df;
    }
    result.step_residuals.push_back(sol.residual);
  }
  result.steps = n_steps;
  return result;
}

}  // namespace deformnet
