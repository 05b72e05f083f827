#include <cmath>

#include "deformnet/error.hpp"
#include "deformnet/sampling.hpp"
#include "doctest.h"
#include "gen.hpp"
#include "sampling_oracles.hpp"

using namespace deformnet;

TEST_CASE("RPP1 box grid has 35,301 points reaching 153.6 mm") {
  const ScaleConvention sc;
  const Vec3 c(1.0, 0.1, 0.1);
  const auto pts = grid_points(c, Vec3(204.8, 204.8, 102.4) / 256.0, 5.12 / 256.0);
  CHECK(pts.size() == 41u * 41u * 21u);
  CHECK(pts.size() == 35301u);
  double far = 0.0;
  for (const auto& p : pts) far = std::max(far, sc.to_mm((p - c).norm()));
  CHECK(std::abs(far - 153.6) <= 1e-9);
  CHECK(std::abs(far - std::sqrt(102.4 * 102.4 + 102.4 * 102.4 + 51.2 * 51.2)) <= 1e-9);
}

TEST_CASE("grid count formula and lexicographic order") {
  testgen::SplitMix rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const double s = rng.uniform(0.01, 0.2);
    const int nx = rng.integer(0, 7), ny = rng.integer(0, 7), nz = rng.integer(0, 7);
    const Vec3 c = rng.vec(-1, 1);
    const auto pts = grid_points(c, Vec3(nx * s, ny * s, nz * s), s);
    REQUIRE(pts.size() == static_cast<size_t>((nx + 1) * (ny + 1) * (nz + 1)));
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    CHECK((mean / pts.size() - c).norm() < 1e-12);
    for (size_t i = 1; i < pts.size(); ++i) {
      const Vec3 d = pts[i] - pts[i - 1];
      const bool lex = d.x() > 1e-12 || (std::abs(d.x()) < 1e-12 && d.y() > 1e-12) ||
                       (std::abs(d.x()) < 1e-12 && std::abs(d.y()) < 1e-12 && d.z() > 1e-12);
      CHECK(lex);
    }
  }
}

TEST_CASE("zero extents yield the centre only") {
  const Vec3 c(0.3, -0.2, 0.5);
  const auto pts = grid_points(c, Vec3::Zero(), 0.1);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == c);
  CHECK_THROWS_AS(grid_points(c, Vec3(0.25, 0, 0), 0.1), ValidationError);
  CHECK_THROWS_AS(grid_points(c, Vec3(0.2, 0, 0), 0.0), ValidationError);
}

TEST_CASE("sampling frame is orthonormal and right-handed") {
  testgen::SplitMix rng(43);
  for (int n = 0; n < 100; ++n) {
    const Vec3 v = rng.vec(-1, 1);
    const Eigen::Matrix3d F = sampling_frame(v);
    CHECK((F.transpose() * F - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(F.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((F.col(0) - v.normalized()).norm() < 1e-12);
  }
  CHECK_THROWS_AS(sampling_frame(Vec3::Zero()), ValidationError);
}

TEST_CASE("tiny ellipsoid keeps only the centroid") {
  SamplingSpec s;
  s.mode = SamplingMode::kEllipsoid;
  s.spacing = 0.01;
  s.r_para = s.r_perp = 0.4 * s.spacing;
  const Vec3 c(1, 2, 3);
  const auto pts = ellipsoid_points(s, c, Vec3(1, 0, 0));
  REQUIRE(pts.size() == 1);
  CHECK(pts[0] == c);
}

TEST_CASE("sphere of five spacings matches the integer lattice scan") {
  SamplingSpec s;
  s.mode = SamplingMode::kEllipsoid;
  s.spacing = 0.02;
  s.r_para = s.r_perp = 5 * s.spacing;
  const auto pts = ellipsoid_points(s, Vec3::Zero(), Vec3(0.3, 0.4, 0.5));
  int expected = 0;
  for (int a = -6; a <= 6; ++a)
    for (int b = -6; b <= 6; ++b)
      for (int c = -6; c <= 6; ++c) expected += a * a + b * b + c * c <= 25;
  CHECK(pts.size() == static_cast<size_t>(expected));
  for (const auto& p : pts) CHECK(p.norm() <= 0.1 + 1e-12);
}

TEST_CASE("random ellipsoids match brute-force enumeration") {
  testgen::SplitMix rng(47);
  for (int n = 0; n < 20; ++n) {
    const auto c = oracles::random_ellipsoid_case(rng);
    CHECK(ellipsoid_points(c.spec, c.centroid, c.v_fc, c.v_nv).size() ==
          oracles::brute_force_ellipsoid_count(c));
  }
}

TEST_CASE("normal filter keeps strictly acute offsets") {
  SamplingSpec s;
  s.mode = SamplingMode::kEllipsoid;
  s.spacing = 0.1;
  s.r_para = s.r_perp = 0.35;
  s.normal_filter = true;
  const Vec3 v_fc(1, 0, 0), v_nv(0, 0, 1);
  const auto pts = ellipsoid_points(s, Vec3::Zero(), v_fc, v_nv);
  for (const auto& p : pts) CHECK(p.dot(v_nv) > 0.0);
  // The offset opposite the normal, the centroid and in-plane points are gone.
  for (const auto& p : pts) {
    CHECK((p - Vec3(0, 0, -0.1)).norm() > 1e-9);
    CHECK(p.norm() > 1e-9);
  }
  SamplingSpec unf = s;
  unf.normal_filter = false;
  const auto all = ellipsoid_points(unf, Vec3::Zero(), v_fc, v_nv);
  size_t above = 0;
  for (const auto& p : all) above += p.z() > 1e-12;
  CHECK(pts.size() == above);
}

TEST_CASE("sample targets resolve relative lengths against |v_fc|") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  const RegionGeometry g = region_geometry(m, "tip");
  CHECK(g.distance == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.v_nv.x() > 0.95);
  CHECK(g.v_nv.norm() == doctest::Approx(1.0));

  RegionSampling rel{"tip", {}};
  rel.spec.mode = SamplingMode::kEllipsoid;
  rel.spec.relative_to_reference = true;
  rel.spec.r_para = 0.05;
  rel.spec.r_perp = 0.2;
  rel.spec.spacing = 0.04;
  RegionSampling abs_ = rel;
  abs_.spec.relative_to_reference = false;
  abs_.spec.r_para *= g.distance;
  abs_.spec.r_perp *= g.distance;
  abs_.spec.spacing *= g.distance;
  const auto a = sample_targets(m, rel);
  const auto b = sample_targets(m, abs_);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).norm() < 1e-12);

  RegionSampling fixed_l = rel;
  fixed_l.spec.reference_length = 2.0;
  const auto scaled = sample_targets(m, fixed_l);
  REQUIRE(scaled.size() == a.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK((scaled[i] - 2.0 * a[i]).norm() < 1e-12);
}

TEST_CASE("single centroid target gives a zero sample") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  RegionSampling rs{"top_mid", {}};
  rs.spec.mode = SamplingMode::kBoxGrid;
  rs.spec.spacing = 0.1;
  const auto built = build_dataset(m, elasticity_matrix({1e6, 0.4}), {rs}, 3, {});
  REQUIRE(built.dataset.size() == 1);
  CHECK(built.failures.empty());
  CHECK(built.dataset.samples[0].u_all.norm() < 1e-12);
  CHECK(built.dataset.samples[0].target_disp.norm() < 1e-12);
}

TEST_CASE("dataset rows echo the boundary condition and ignore worker count") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  RegionSampling a{"tip", {}}, b{"side_far", {}};
  a.spec.extents = Vec3(0.2, 0.2, 0.1);
  a.spec.spacing = 0.1;
  b.spec.extents = Vec3(0.1, 0.0, 0.1);
  b.spec.spacing = 0.1;
  const Matrix6 D = elasticity_matrix({1e6, 0.4});
  const auto one = build_dataset(m, D, {a, b}, 5, {}, 1);
  const auto three = build_dataset(m, D, {a, b}, 5, {}, 3);
  REQUIRE(one.dataset.size() == 18 + 4);
  CHECK(serialize_dataset(one.dataset) == serialize_dataset(three.dataset));
  for (const auto& s : one.dataset.samples) {
    const auto& region = m.region(one.dataset.region_names[s.region_id]);
    for (int v : region.vertex_ids)
      CHECK((s.u_all.segment<3>(3 * m.free_index(v)) - s.target_disp).norm() <= 1e-9);
  }
  CHECK(one.dataset.samples.front().region_id == 0);
  CHECK(one.dataset.samples.back().region_id == 1);
  CHECK(one.dataset.max_contact_displacement() ==
        doctest::Approx(std::sqrt(0.01 + 0.01 + 0.0025)).epsilon(1e-9));
}

TEST_CASE("inverting targets are recorded as failures") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  RegionSampling rs{"tip", {}};
  rs.spec.extents = Vec3(6.0, 0.0, 0.0);
  rs.spec.spacing = 3.0;
  const auto built = build_dataset(m, elasticity_matrix({1e6, 0.4}), {rs}, 2, {});
  CHECK(built.dataset.size() + built.failures.size() == 3);
  REQUIRE(!built.failures.empty());
  CHECK(built.failures[0].index == 0);
  CHECK(built.failures[0].reason.find("element inverted") != std::string::npos);
}

TEST_CASE("inputs slice the observation rows") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  RegionSampling rs{"tip", {}};
  rs.spec.extents = Vec3(0.2, 0.2, 0.0);
  rs.spec.spacing = 0.2;
  const auto ds = build_dataset(m, elasticity_matrix({1e6, 0.4}), {rs}, 2, {}).dataset;
  const Eigen::MatrixXd X = ds.inputs(), Y = ds.targets();
  CHECK(X.rows() == 9);
  CHECK(Y.rows() == 270);
  CHECK(X.cols() == 4);
  const auto obs = ds.observation_free_indices();
  for (int d = 0; d < 4; ++d)
    for (size_t o = 0; o < obs.size(); ++o)
      CHECK((X.col(d).segment<3>(3 * o) - Y.col(d).segment<3>(3 * obs[o])).norm() == 0.0);
}

TEST_CASE("sampling spec validation") {
  SamplingSpec s;
  s.spacing = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.spacing = 0.1;
  s.mode = SamplingMode::kEllipsoid;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.r_para = s.r_perp = 0.2;
  CHECK_NOTHROW(s.validate());
  s.normal_override = Vec3(2, 0, 0);
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
