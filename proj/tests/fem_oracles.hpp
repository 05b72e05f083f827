#pragma once

// Measurements shared by the FEM unit tests and the acceptance binary. Each
// function returns an error figure computed against an oracle that does not
// reuse the library's B-matrix or partitioning code.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "deformnet/fem.hpp"
#include "deformnet/mesh.hpp"
#include "gen.hpp"

namespace oracles {

using deformnet::Vec3;

inline deformnet::RppSpec lattice(double long_mm, double short_mm, double spacing_mm) {
  deformnet::RppSpec s;
  s.long_side_mm = long_mm;
  s.short_side_mm = short_mm;
  s.spacing_mm = spacing_mm;
  return s;
}

// Linear strain energy of a tet from its nodal displacements, computed from
// the displacement gradient G = U X^{-1} rather than a B matrix.
inline double strain_energy(const std::array<Vec3, 4>& x, const Eigen::Matrix<double, 12, 1>& u,
                            const deformnet::Matrix6& D) {
  Eigen::Matrix3d X, U;
  for (int c = 0; c < 3; ++c) {
    X.col(c) = x[c + 1] - x[0];
    U.col(c) = u.segment<3>(3 * (c + 1)) - u.segment<3>(0);
  }
  const Eigen::Matrix3d G = U * X.inverse();
  const Eigen::Matrix3d e = 0.5 * (G + G.transpose());
  Eigen::Matrix<double, 6, 1> eps;
  eps << e(0, 0), e(1, 1), e(2, 2), 2 * e(0, 1), 2 * e(1, 2), 2 * e(2, 0);
  const double vol = std::abs(X.determinant()) / 6.0;
  return 0.5 * vol * eps.dot(D * eps);
}

// Max |K_e - H| / max|H| where H is the central-difference Hessian of the
// strain energy with step h.
inline double fd_hessian_error(const std::array<Vec3, 4>& x, const deformnet::Matrix6& D,
                               double h = 1e-6) {
  const deformnet::Matrix12 K = deformnet::element_stiffness(x, D);
  Eigen::Matrix<double, 12, 12> H;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) {
      auto energy = [&](double si, double sj) {
        Eigen::Matrix<double, 12, 1> u = Eigen::Matrix<double, 12, 1>::Zero();
        u[i] += si * h;
        u[j] += sj * h;
        return strain_energy(x, u, D);
      };
      H(i, j) = (energy(1, 1) - energy(1, -1) - energy(-1, 1) + energy(-1, -1)) / (4 * h * h);
    }
  return (K - H).cwiseAbs().maxCoeff() / H.cwiseAbs().maxCoeff();
}

inline std::array<Vec3, 4> random_tet(testgen::SplitMix& rng) {
  while (true) {
    std::array<Vec3, 4> x = {rng.vec(-1, 1), rng.vec(-1, 1), rng.vec(-1, 1), rng.vec(-1, 1)};
    const double v = deformnet::signed_volume(x[0], x[1], x[2], x[3]);
    if (std::abs(v) < 0.02) continue;
    if (v < 0) std::swap(x[1], x[2]);
    return x;
  }
}

// Worst relative force ||K_e t|| / (||K_e|| ||t||) for rigid translations t
// over random elements and materials.
inline double translation_error(uint64_t seed, int trials = 50) {
  testgen::SplitMix rng(seed);
  double worst = 0.0;
  for (int n = 0; n < trials; ++n) {
    const auto x = random_tet(rng);
    const auto D = deformnet::elasticity_matrix({rng.uniform(1e3, 1e7), rng.uniform(0.0, 0.49)});
    const deformnet::Matrix12 K = deformnet::element_stiffness(x, D);
    const Vec3 t = rng.vec(-1, 1);
    Eigen::Matrix<double, 12, 1> u;
    for (int a = 0; a < 4; ++a) u.segment<3>(3 * a) = t;
    worst = std::max(worst, (K * u).norm() / (K.norm() * u.norm()));
  }
  return worst;
}

// ||K - K^T|| / ||K|| of the assembled default RPP system.
inline double symmetry_error(const deformnet::TetMesh& mesh, const deformnet::Matrix6& D) {
  const auto sys = deformnet::assemble(mesh, mesh.vertices(), D);
  const Eigen::MatrixXd K(sys.K);
  return (K - K.transpose()).norm() / K.norm();
}

// Nullspace dimension of the unconstrained stiffness of a 2-cube mesh,
// counted from singular values below 1e-10 of the largest.
inline int floating_nullity() {
  const deformnet::TetMesh m = deformnet::generate_rpp(lattice(51.2, 25.6, 25.6));
  const auto D = deformnet::elasticity_matrix({1.0, 0.3});
  const auto sys = deformnet::assemble(m, m.vertices(), D, deformnet::Elimination::kNone);
  const Eigen::MatrixXd K(sys.K);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
  const auto& s = svd.singularValues();
  int nullity = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) nullity += s[i] < 1e-10 * s[0];
  return nullity;
}

// Affine field u = A x + b prescribed on the boundary of a 3x3x3-cell block;
// returns the worst interior deviation from the affine field.
inline double patch_test_error(uint64_t seed) {
  testgen::SplitMix rng(seed);
  const deformnet::TetMesh m = deformnet::generate_rpp(lattice(76.8, 76.8, 25.6));
  const auto D = deformnet::elasticity_matrix({rng.uniform(1e3, 1e6), rng.uniform(0.0, 0.45)});
  const Eigen::Matrix3d A = rng.matrix(3, 3, -0.01, 0.01);
  const Vec3 b = rng.vec(-0.01, 0.01);
  const auto sys = deformnet::assemble(m, m.vertices(), D, deformnet::Elimination::kNone);

  const double hi = 0.3;
  auto on_boundary = [&](const Vec3& p) {
    for (int a = 0; a < 3; ++a)
      if (std::abs(p[a]) < 1e-12 || std::abs(p[a] - hi) < 1e-12) return true;
    return false;
  };
  std::vector<int> dofs;
  std::vector<double> vals;
  for (int v = 0; v < m.num_vertices(); ++v) {
    const Vec3& p = m.vertices()[v];
    if (!on_boundary(p)) continue;
    const Vec3 u = A * p + b;
    for (int a = 0; a < 3; ++a) {
      dofs.push_back(3 * v + a);
      vals.push_back(u[a]);
    }
  }
  const Eigen::VectorXd u_c = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
  const auto sol = deformnet::solve_forced_displacement(sys, dofs, u_c);
  if (sol.other_dofs.size() != 8 * 3) return 1e300;
  double worst = 0.0;
  for (size_t i = 0; i < sol.other_dofs.size(); ++i) {
    const int d = sol.other_dofs[i];
    const Vec3 u = A * m.vertices()[d / 3] + b;
    worst = std::max(worst, std::abs(sol.u_n[i] - u[d % 3]));
  }
  return worst;
}

// Solution by the inverse ("L-form"): with f_n = 0, u_c = L_cc f_c, so
// f_c = L_cc^{-1} u_c and u_n = L_nc f_c.
struct LFormSolution {
  Eigen::VectorXd f_c, u_n;
};

inline LFormSolution lform_solve(const Eigen::MatrixXd& K, const std::vector<int>& contact,
                                 const std::vector<int>& other, const Eigen::VectorXd& u_c) {
  const Eigen::MatrixXd L = K.inverse();
  const int nc = static_cast<int>(contact.size()), nn = static_cast<int>(other.size());
  Eigen::MatrixXd L_cc(nc, nc), L_nc(nn, nc);
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < nc; ++j) L_cc(i, j) = L(contact[i], contact[j]);
  for (int i = 0; i < nn; ++i)
    for (int j = 0; j < nc; ++j) L_nc(i, j) = L(other[i], contact[j]);
  LFormSolution s;
  s.f_c = L_cc.partialPivLu().solve(u_c);
  s.u_n = L_nc * s.f_c;
  return s;
}

inline deformnet::StiffnessSystem dense_system(const Eigen::MatrixXd& K) {
  deformnet::StiffnessSystem sys;
  sys.K = K.sparseView();
  return sys;
}

// Worst relative disagreement between the library's partitioned solve and
// the L-form on random SPD 30-DOF systems.
inline double lform_error(uint64_t seed, int systems = 20) {
  testgen::SplitMix rng(seed);
  double worst = 0.0;
  for (int s = 0; s < systems; ++s) {
    const int n = 30;
    const Eigen::MatrixXd R = rng.matrix(n, n, -1, 1);
    const Eigen::MatrixXd K = R * R.transpose() + n * Eigen::MatrixXd::Identity(n, n);
    std::vector<int> all(n), contact, other;
    for (int i = 0; i < n; ++i) all[i] = i;
    for (int i = 0; i < n; ++i) (rng.unit() < 0.3 ? contact : other).push_back(i);
    if (contact.empty()) contact.push_back(other.back()), other.pop_back();
    const Eigen::VectorXd u_c = rng.matrix(static_cast<int>(contact.size()), 1, -1, 1);
    const auto got = deformnet::solve_forced_displacement(dense_system(K), contact, u_c);
    const auto want = lform_solve(K, contact, other, u_c);
    worst = std::max(worst, (got.f_c - want.f_c).norm() / want.f_c.norm());
    worst = std::max(worst, (got.u_n - want.u_n).norm() / want.u_n.norm());
  }
  return worst;
}

struct ScalingErrors {
  double displacement = 0.0;
  double force = 0.0;
};

// Runs the same deformation with E and 10 E.
inline ScalingErrors modulus_scaling(const deformnet::TetMesh& mesh, const std::string& region,
                                     const Vec3& target, int n_steps) {
  const auto D1 = deformnet::elasticity_matrix({1e6, 0.4});
  const auto D10 = deformnet::elasticity_matrix({1e7, 0.4});
  const auto r1 = deformnet::deform(mesh, D1, region, target, n_steps);
  const auto r10 = deformnet::deform(mesh, D10, region, target, n_steps);
  ScalingErrors e;
  e.displacement = (r10.flattened() - r1.flattened()).norm() / r1.flattened().norm();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < r1.contact_forces.size(); ++i) {
    num += (r10.contact_forces[i] - 10.0 * r1.contact_forces[i]).squaredNorm();
    den += (10.0 * r1.contact_forces[i]).squaredNorm();
  }
  e.force = std::sqrt(num / den);
  return e;
}

// Relative difference between 100 incremental steps and one linear solve
// at a contact displacement of 1e-4 of the object's long side.
inline double incremental_vs_linear(const deformnet::TetMesh& mesh, const std::string& region) {
  const auto D = deformnet::elasticity_matrix({1e6, 0.4});
  const Vec3 target = Vec3(0.3, -0.5, 0.8).normalized() * 1e-4;
  const auto one = deformnet::deform(mesh, D, region, target, 1);
  const auto many = deformnet::deform(mesh, D, region, target, 100);
  return (many.flattened() - one.flattened()).norm() / one.flattened().norm();
}

}  // namespace oracles
