#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "deformnet/error.hpp"
#include "deformnet/mesh.hpp"
#include "doctest.h"
#include "gen.hpp"

using namespace deformnet;

namespace {

RppSpec bare_spec(double long_mm, double short_mm, double spacing_mm) {
  RppSpec s;
  s.long_side_mm = long_mm;
  s.short_side_mm = short_mm;
  s.spacing_mm = spacing_mm;
  return s;
}

// Counts every triangular face by its sorted vertex triple.
std::map<std::array<int, 3>, int> face_counts(const TetMesh& mesh) {
  std::map<std::array<int, 3>, int> counts;
  for (const auto& t : mesh.tets())
    for (int skip = 0; skip < 4; ++skip) {
      std::array<int, 3> f{};
      int n = 0;
      for (int a = 0; a < 4; ++a)
        if (a != skip) f[n++] = t[a];
      std::sort(f.begin(), f.end());
      ++counts[f];
    }
  return counts;
}

// Independent boundary normal oracle: enumerate faces, orient each one away
// from the opposite tet vertex, and accumulate raw cross products.
std::map<int, Vec3> normals_oracle(const TetMesh& mesh) {
  const auto counts = face_counts(mesh);
  std::map<int, Vec3> acc;
  const auto& p = mesh.vertices();
  for (const auto& t : mesh.tets())
    for (int skip = 0; skip < 4; ++skip) {
      std::array<int, 3> f{};
      int n = 0;
      for (int a = 0; a < 4; ++a)
        if (a != skip) f[n++] = t[a];
      auto key = f;
      std::sort(key.begin(), key.end());
      if (counts.at(key) != 1) continue;
      Vec3 c = (p[f[1]] - p[f[0]]).cross(p[f[2]] - p[f[0]]);
      if (c.dot(p[t[skip]] - p[f[0]]) > 0.0) c = -c;
      for (int v : f) {
        auto [it, inserted] = acc.try_emplace(v, Vec3::Zero());
        it->second += c;
      }
    }
  for (auto& [v, n] : acc) n.normalize();
  return acc;
}

}  // namespace

TEST_CASE("default RPP has 99 vertices and 240 tets") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  CHECK(m.num_vertices() == 11 * 3 * 3);
  CHECK(m.tets().size() == 10 * 2 * 2 * 6);
  CHECK(m.fixed_ids().size() == 9);
  CHECK(m.num_free() == 90);
  CHECK(m.observation_ids().size() == 3);
  CHECK(m.contact_regions().size() == 6);
  for (int v : m.fixed_ids()) CHECK(m.vertices()[v].x() == 0.0);
}

TEST_CASE("single-cell lattice is one cube split into six tets") {
  const TetMesh m = generate_rpp(bare_spec(25.6, 25.6, 25.6));
  CHECK(m.num_vertices() == 8);
  CHECK(m.tets().size() == 6);
  double vol = 0.0;
  for (const auto& t : m.tets())
    vol += signed_volume(m.vertices()[t[0]], m.vertices()[t[1]], m.vertices()[t[2]],
                         m.vertices()[t[3]]);
  CHECK(vol == doctest::Approx(0.1 * 0.1 * 0.1).epsilon(1e-12));
}

TEST_CASE("lattice counts, volume and crack-free faces on random boxes") {
  testgen::SplitMix rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int cx = rng.integer(1, 6), cyz = rng.integer(1, 3);
    const double h = rng.uniform(5.0, 40.0);
    const TetMesh m = generate_rpp(bare_spec(cx * h, cyz * h, h));
    CHECK(m.num_vertices() == (cx + 1) * (cyz + 1) * (cyz + 1));
    CHECK(m.tets().size() == static_cast<size_t>(6 * cx * cyz * cyz));

    double vol = 0.0;
    for (const auto& t : m.tets()) {
      const double v = signed_volume(m.vertices()[t[0]], m.vertices()[t[1]], m.vertices()[t[2]],
                                     m.vertices()[t[3]]);
      CHECK(v > 0.0);
      vol += v;
    }
    const double hu = h / 256.0;
    CHECK(vol == doctest::Approx(cx * cyz * cyz * hu * hu * hu).epsilon(1e-10));

    int boundary = 0;
    for (const auto& [f, c] : face_counts(m)) {
      CHECK((c == 1 || c == 2));
      boundary += c == 1;
    }
    // Two triangles per boundary square.
    CHECK(boundary == 2 * 2 * (cx * cyz + cx * cyz + cyz * cyz));
    CHECK(boundary_faces(m).size() == static_cast<size_t>(boundary));
  }
}

TEST_CASE("flat-face vertices get the exact face normal") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  const auto normals = vertex_normals(m);
  // Vertex (5, 1, 2): centre of the top face.
  const int top = (5 * 3 + 1) * 3 + 2;
  CHECK((normals.at(top) - Vec3(0, 0, 1)).norm() < 1e-14);
  const int bottom = (5 * 3 + 1) * 3 + 0;
  CHECK((normals.at(bottom) - Vec3(0, 0, -1)).norm() < 1e-14);
  const int side = (5 * 3 + 0) * 3 + 1;
  CHECK((normals.at(side) - Vec3(0, -1, 0)).norm() < 1e-14);
  // Interior vertices have no normal.
  CHECK(normals.count((5 * 3 + 1) * 3 + 1) == 0);
}

TEST_CASE("cube corner on the split diagonal has the symmetric normal") {
  const TetMesh m = generate_rpp(bare_spec(25.6, 25.6, 25.6));
  const auto normals = vertex_normals(m);
  CHECK((normals.at(0) + Vec3(1, 1, 1).normalized()).norm() < 1e-14);
  CHECK((normals.at(7) - Vec3(1, 1, 1).normalized()).norm() < 1e-14);
}

TEST_CASE("liver-like normals match the face enumeration oracle") {
  const TetMesh m = warp_liver_like(generate_rpp(default_rpp_spec()), 0.15, 0.4);
  const auto got = vertex_normals(m);
  const auto want = normals_oracle(m);
  REQUIRE(got.size() == want.size());
  for (const auto& [v, n] : want) CHECK((got.at(v) - n).norm() < 1e-12);
}

TEST_CASE("warp keeps roles and positive volumes") {
  const TetMesh block = generate_rpp(default_rpp_spec());
  const TetMesh m = warp_liver_like(block, 0.2, 0.5);
  CHECK(m.fixed_ids() == block.fixed_ids());
  CHECK(m.observation_ids() == block.observation_ids());
  CHECK(m.content_hash() != block.content_hash());
}

TEST_CASE("mesh text round trip") {
  const TetMesh m = warp_liver_like(generate_rpp(default_rpp_spec()), 0.1, 0.3);
  const auto path = std::filesystem::temp_directory_path() / "deformnet_test_mesh.tet";
  save_mesh(m, path.string());
  const TetMesh back = load_mesh(path.string());
  CHECK(back.vertices() == m.vertices());
  CHECK(back.tets() == m.tets());
  CHECK(back.fixed_ids() == m.fixed_ids());
  CHECK(back.observation_ids() == m.observation_ids());
  REQUIRE(back.contact_regions().size() == m.contact_regions().size());
  for (size_t r = 0; r < m.contact_regions().size(); ++r) {
    CHECK(back.contact_regions()[r].name == m.contact_regions()[r].name);
    CHECK(back.contact_regions()[r].vertex_ids == m.contact_regions()[r].vertex_ids);
  }
  CHECK(back.content_hash() == m.content_hash());
  std::filesystem::remove(path);
}

TEST_CASE("parse errors name the violated rule") {
  const std::string head =
      "deformnet-tetmesh 1\ncounts 4 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n";
  CHECK_NOTHROW(parse_mesh(head + "t 0 1 2 3\n"));
  CHECK_THROWS_WITH_AS(parse_mesh(head + "t 0 1 2 4\n"), doctest::Contains("index out of range"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_mesh(head + "t 0 2 1 3\n"), doctest::Contains("non-positive volume"),
                       ValidationError);
  CHECK_THROWS_AS(parse_mesh(head + "t 0 1 2 3\nfixed 0\nregion a 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_mesh("deformnet-tetmesh 1\ncounts 4 1\nv 0 0 0\n"), ValidationError);
  CHECK_THROWS_AS(parse_mesh("not a mesh\n"), ValidationError);
}

TEST_CASE("constructor rejects overlapping roles") {
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Tet> t = {{0, 1, 2, 3}};
  CHECK_NOTHROW(TetMesh(v, t, {0}, {{"c", {1}}}, {2}));
  CHECK_THROWS_AS(TetMesh(v, t, {0}, {{"c", {0}}}, {2}), ValidationError);
  CHECK_THROWS_AS(TetMesh(v, t, {0}, {{"c", {1}}}, {0}), ValidationError);
  CHECK_THROWS_AS(TetMesh(v, t, {0}, {{"c", {1}}, {"c", {2}}}, {}), ValidationError);
  CHECK_THROWS_AS(TetMesh(v, t, {9}, {}, {}), ValidationError);
}

TEST_CASE("free indices skip fixed vertices") {
  const TetMesh m = generate_rpp(default_rpp_spec());
  int expected = 0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (m.is_fixed(v)) {
      CHECK(m.free_index(v) == -1);
    } else {
      CHECK(m.free_index(v) == expected);
      CHECK(m.free_vertex_ids()[expected] == v);
      ++expected;
    }
  }
}

TEST_CASE("lattice spacing must divide the sides") {
  CHECK_THROWS_AS(generate_rpp(bare_spec(256, 51.2, 30)), ValidationError);
  RppSpec s = default_rpp_spec();
  s.observations.push_back({11, 0, 0});
  CHECK_THROWS_AS(generate_rpp(s), ValidationError);
}
