#include "deformnet/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "deformnet/error.hpp"
#include "deformnet/hash.hpp"
#include "text_util.hpp"

namespace deformnet {

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (int v : ids) {
    s += ' ';
    s += std::to_string(v);
  }
  return s;
}

void check_range(const std::vector<int>& ids, int n, const std::string& what) {
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= n)
      throw ValidationError(what + " entry " + std::to_string(i) + ": index out of range (" +
                            std::to_string(ids[i]) + " not in [0, " + std::to_string(n) + "))");
  }
}

void check_unique(const std::vector<int>& ids, const std::string& what) {
  std::set<int> seen;
  for (int v : ids)
    if (!seen.insert(v).second)
      throw ValidationError(what + ": duplicate vertex " + std::to_string(v));
}

}  // namespace

void ScaleConvention::validate() const {
  if (!(mm_per_unit > 0.0) || !std::isfinite(mm_per_unit))
    throw ValidationError("scale: mm_per_unit must be positive");
}

double signed_volume(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  return (p1 - p0).dot((p2 - p0).cross(p3 - p0)) / 6.0;
}

TetMesh::TetMesh(std::vector<Vec3> vertices, std::vector<Tet> tets, std::vector<int> fixed_ids,
                 std::vector<ContactRegion> contact_regions, std::vector<int> observation_ids)
    : vertices_(std::move(vertices)),
      tets_(std::move(tets)),
      fixed_ids_(std::move(fixed_ids)),
      regions_(std::move(contact_regions)),
      observation_ids_(std::move(observation_ids)) {
  const int n = num_vertices();
  for (size_t v = 0; v < vertices_.size(); ++v)
    if (!vertices_[v].allFinite())
      throw ValidationError("vertex " + std::to_string(v) + ": non-finite coordinate");

  for (size_t t = 0; t < tets_.size(); ++t) {
    const Tet& tet = tets_[t];
    for (int a = 0; a < 4; ++a) {
      if (tet[a] < 0 || tet[a] >= n)
        throw ValidationError("tet " + std::to_string(t) + ": index out of range (" +
                              std::to_string(tet[a]) + " not in [0, " + std::to_string(n) + "))");
      for (int b = 0; b < a; ++b)
        if (tet[a] == tet[b])
          throw ValidationError("tet " + std::to_string(t) + ": repeated vertex " +
                                std::to_string(tet[a]));
    }
    if (!(signed_volume(vertices_[tet[0]], vertices_[tet[1]], vertices_[tet[2]],
                        vertices_[tet[3]]) > 0.0))
      throw ValidationError("tet " + std::to_string(t) + ": non-positive volume");
  }

  check_range(fixed_ids_, n, "fixed");
  std::sort(fixed_ids_.begin(), fixed_ids_.end());
  check_unique(fixed_ids_, "fixed");

  free_index_.assign(n, 0);
  for (int v : fixed_ids_) free_index_[v] = -1;
  for (int v = 0; v < n; ++v) {
    if (free_index_[v] < 0) continue;
    free_index_[v] = static_cast<int>(free_ids_.size());
    free_ids_.push_back(v);
  }

  std::set<std::string> names;
  for (const auto& r : regions_) {
    if (r.name.empty() || r.name.find_first_of(" \t\r\n") != std::string::npos)
      throw ValidationError("region name '" + r.name + "' must be a non-empty token");
    if (!names.insert(r.name).second)
      throw ValidationError("region '" + r.name + "': duplicate name");
    if (r.vertex_ids.empty()) throw ValidationError("region '" + r.name + "': empty");
    check_range(r.vertex_ids, n, "region '" + r.name + "'");
    check_unique(r.vertex_ids, "region '" + r.name + "'");
    for (int v : r.vertex_ids)
      if (free_index_[v] < 0)
        throw ValidationError("region '" + r.name + "': vertex " + std::to_string(v) +
                              " is also fixed");
  }

  check_range(observation_ids_, n, "obs");
  check_unique(observation_ids_, "obs");
  for (int v : observation_ids_)
    if (free_index_[v] < 0)
      throw ValidationError("obs: vertex " + std::to_string(v) + " is also fixed");

  hash_ = sha256_hex(serialize_mesh(*this));
}

const ContactRegion& TetMesh::region(const std::string& name) const {
  return regions_[region_index(name)];
}

int TetMesh::region_index(const std::string& name) const {
  for (size_t i = 0; i < regions_.size(); ++i)
    if (regions_[i].name == name) return static_cast<int>(i);
  throw ValidationError("unknown contact region '" + name + "'");
}

Vec3 TetMesh::centroid(const std::vector<int>& ids) const {
  if (ids.empty()) throw ValidationError("centroid of an empty vertex set");
  Vec3 c = Vec3::Zero();
  for (int v : ids) c += vertices_.at(v);
  return c / static_cast<double>(ids.size());
}

// ---------------------------------------------------------------------------

RppSpec default_rpp_spec() {
  RppSpec spec;
  spec.fixed = {{{0, 0, 0}, {0, 2, 2}}};
  spec.regions = {
      {"tip", {{{10, 0, 0}, {10, 2, 2}}}},
      {"top_mid", {{{4, 0, 2}, {4, 2, 2}}}},
      {"top_far", {{{7, 0, 2}, {7, 2, 2}}}},
      {"bottom_mid", {{{6, 0, 0}, {6, 2, 0}}}},
      {"side_near", {{{3, 0, 0}, {3, 0, 2}}}},
      {"side_far", {{{9, 2, 0}, {9, 2, 2}}}},
  };
  spec.observations = {{5, 0, 2}, {5, 2, 0}, {8, 2, 2}};
  return spec;
}

namespace {

int lattice_count(double length, double spacing, const char* what) {
  const double cells = length / spacing;
  const double rounded = std::round(cells);
  if (rounded < 1.0 || std::abs(cells - rounded) > 1e-9 * std::max(1.0, rounded))
    throw ValidationError(std::string("rpp: ") + what +
                          " is not a positive integer multiple of the spacing");
  return static_cast<int>(rounded) + 1;
}

}  // namespace

TetMesh generate_rpp(const RppSpec& spec) {
  spec.scale.validate();
  if (!(spec.spacing_mm > 0.0)) throw ValidationError("rpp: spacing must be positive");
  const int nx = lattice_count(spec.long_side_mm, spec.spacing_mm, "long side");
  const int ny = lattice_count(spec.short_side_mm, spec.spacing_mm, "short side");
  const int nz = ny;
  const double h = spec.scale.to_units(spec.spacing_mm);

  auto index = [&](int i, int j, int k) { return (i * ny + j) * nz + k; };

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<size_t>(nx) * ny * nz);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nz; ++k) vertices.emplace_back(i * h, j * h, k * h);

  // Kuhn split: one tet per axis permutation, walking 000 -> 111.
  static constexpr std::array<std::array<int, 3>, 6> kPerms = {
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<Tet> tets;
  tets.reserve(static_cast<size_t>(nx - 1) * (ny - 1) * (nz - 1) * 6);
  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      for (int k = 0; k + 1 < nz; ++k)
        for (const auto& perm : kPerms) {
          std::array<int, 3> c = {i, j, k};
          Tet tet{};
          tet[0] = index(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[perm[s]];
            tet[s + 1] = index(c[0], c[1], c[2]);
          }
          if (signed_volume(vertices[tet[0]], vertices[tet[1]], vertices[tet[2]],
                            vertices[tet[3]]) < 0.0)
            std::swap(tet[1], tet[2]);
          tets.push_back(tet);
        }

  auto lattice_vertex = [&](const LatticeIndex& p, const std::string& what) {
    if (p.i < 0 || p.i >= nx || p.j < 0 || p.j >= ny || p.k < 0 || p.k >= nz)
      throw ValidationError("rpp: " + what + " lattice coordinate (" + std::to_string(p.i) + "," +
                            std::to_string(p.j) + "," + std::to_string(p.k) +
                            ") out of range");
    return index(p.i, p.j, p.k);
  };
  auto expand = [&](const std::vector<LatticeBox>& boxes, const std::string& what) {
    std::set<int> ids;
    for (const auto& b : boxes) {
      lattice_vertex(b.lo, what);
      lattice_vertex(b.hi, what);
      for (int i = b.lo.i; i <= b.hi.i; ++i)
        for (int j = b.lo.j; j <= b.hi.j; ++j)
          for (int k = b.lo.k; k <= b.hi.k; ++k) ids.insert(index(i, j, k));
    }
    return std::vector<int>(ids.begin(), ids.end());
  };

  std::vector<int> fixed = expand(spec.fixed, "fixed");
  std::vector<ContactRegion> regions;
  for (const auto& r : spec.regions) regions.push_back({r.name, expand(r.boxes, r.name)});
  std::vector<int> obs;
  for (const auto& p : spec.observations) obs.push_back(lattice_vertex(p, "observation"));

  return TetMesh(std::move(vertices), std::move(tets), std::move(fixed), std::move(regions),
                 std::move(obs));
}

TetMesh warp_liver_like(const TetMesh& block, double bend, double taper) {
  Vec3 lo = block.vertices().front(), hi = lo;
  for (const auto& p : block.vertices()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  const double len = std::max(hi.x() - lo.x(), 1e-300);
  std::vector<Vec3> warped;
  warped.reserve(block.vertices().size());
  for (const auto& p : block.vertices()) {
    const double s = (p.x() - lo.x()) / len;
    const double shrink = 1.0 - taper * s;
    const double dy = p.y() - mid.y();
    warped.emplace_back(p.x(), mid.y() + shrink * dy,
                        mid.z() + shrink * (p.z() - mid.z()) + bend * len * s * s +
                            2.0 * bend * dy * dy / len);
  }
  return TetMesh(std::move(warped), block.tets(), block.fixed_ids(), block.contact_regions(),
                 block.observation_ids());
}

// ---------------------------------------------------------------------------

std::vector<std::array<int, 3>> boundary_faces(const TetMesh& mesh) {
  // Face opposite local vertex a of a tet.
  static constexpr int kFaces[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  struct Entry {
    int count = 0;
    std::array<int, 3> face{};
  };
  std::map<std::array<int, 3>, Entry> faces;
  const auto& x = mesh.vertices();
  for (const auto& tet : mesh.tets()) {
    for (int a = 0; a < 4; ++a) {
      std::array<int, 3> f = {tet[kFaces[a][0]], tet[kFaces[a][1]], tet[kFaces[a][2]]};
      const Vec3 n = (x[f[1]] - x[f[0]]).cross(x[f[2]] - x[f[0]]);
      if (n.dot(x[tet[a]] - x[f[0]]) > 0.0) std::swap(f[1], f[2]);
      std::array<int, 3> key = f;
      std::sort(key.begin(), key.end());
      Entry& e = faces[key];
      ++e.count;
      e.face = f;
    }
  }
  std::vector<std::array<int, 3>> out;
  for (const auto& [key, e] : faces)
    if (e.count == 1) out.push_back(e.face);
  return out;
}

std::map<int, Vec3> vertex_normals(const TetMesh& mesh) {
  const auto& x = mesh.vertices();
  std::map<int, Vec3> sums;
  for (const auto& f : boundary_faces(mesh)) {
    const Vec3 e1 = x[f[1]] - x[f[0]];
    const Vec3 e2 = x[f[2]] - x[f[0]];
    // |e1 x e2| is twice the face area, so the plain sum is area-weighted.
    const Vec3 n = e1.cross(e2);
    const double scale = std::max(e1.squaredNorm(), e2.squaredNorm());
    if (!(n.norm() > 1e-12 * scale))
      throw ValidationError("degenerate boundary face (" + std::to_string(f[0]) + ", " +
                            std::to_string(f[1]) + ", " + std::to_string(f[2]) + ")");
    for (int v : f) {
      auto [it, inserted] = sums.try_emplace(v, Vec3::Zero());
      it->second += n;
    }
  }
  for (auto& [v, n] : sums) n.normalize();
  return sums;
}

// ---------------------------------------------------------------------------
// Text format.

std::string serialize_mesh(const TetMesh& mesh) {
  using detail::format_double;
  std::ostringstream out;
  out << "deformnet-tetmesh 1\n";
  out << "counts " << mesh.num_vertices() << ' ' << mesh.tets().size() << '\n';
  for (const auto& p : mesh.vertices())
    out << "v " << format_double(p.x()) << ' ' << format_double(p.y()) << ' '
        << format_double(p.z()) << '\n';
  for (const auto& t : mesh.tets())
    out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "fixed" << join_ids(mesh.fixed_ids()) << '\n';
  for (const auto& r : mesh.contact_regions())
    out << "region " << r.name << join_ids(r.vertex_ids) << '\n';
  out << "obs" << join_ids(mesh.observation_ids()) << '\n';
  return out.str();
}

TetMesh parse_mesh(const std::string& text) {
  using detail::parse_double;
  using detail::parse_int;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_magic = false, have_counts = false, have_fixed = false, have_obs = false;
  long long n_vertices = 0, n_tets = 0;
  std::vector<Vec3> vertices;
  std::vector<Tet> tets;
  std::vector<int> fixed, obs;
  std::vector<ContactRegion> regions;

  auto ids_from = [&](const std::vector<std::string_view>& tok, size_t first,
                      const std::string& where) {
    std::vector<int> ids;
    for (size_t i = first; i < tok.size(); ++i)
      ids.push_back(static_cast<int>(parse_int(tok[i], where)));
    return ids;
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "mesh line " + std::to_string(line_no);
    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (!have_magic) {
      if (tok.size() != 2 || tok[0] != "deformnet-tetmesh" || tok[1] != "1")
        throw ValidationError(where + ": expected header 'deformnet-tetmesh 1'");
      have_magic = true;
      continue;
    }
    if (!have_counts) {
      if (tok.size() != 3 || tok[0] != "counts")
        throw ValidationError(where + ": expected 'counts <vertices> <tets>'");
      n_vertices = parse_int(tok[1], where);
      n_tets = parse_int(tok[2], where);
      if (n_vertices < 0 || n_tets < 0) throw ValidationError(where + ": negative count");
      have_counts = true;
      continue;
    }
    if (tok[0] == "v") {
      if (tok.size() != 4) throw ValidationError(where + ": 'v' needs 3 coordinates");
      vertices.emplace_back(parse_double(tok[1], where), parse_double(tok[2], where),
                            parse_double(tok[3], where));
    } else if (tok[0] == "t") {
      if (tok.size() != 5) throw ValidationError(where + ": 't' needs 4 indices");
      Tet t{};
      for (int a = 0; a < 4; ++a) t[a] = static_cast<int>(parse_int(tok[a + 1], where));
      tets.push_back(t);
    } else if (tok[0] == "fixed") {
      if (have_fixed) throw ValidationError(where + ": duplicate 'fixed' line");
      fixed = ids_from(tok, 1, where);
      have_fixed = true;
    } else if (tok[0] == "region") {
      if (tok.size() < 2) throw ValidationError(where + ": 'region' needs a name");
      regions.push_back({std::string(tok[1]), ids_from(tok, 2, where)});
    } else if (tok[0] == "obs") {
      if (have_obs) throw ValidationError(where + ": duplicate 'obs' line");
      obs = ids_from(tok, 1, where);
      have_obs = true;
    } else {
      throw ValidationError(where + ": unknown record '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_magic || !have_counts) throw ValidationError("mesh: missing header or counts");
  if (static_cast<long long>(vertices.size()) != n_vertices)
    throw ValidationError("mesh: counts line declares " + std::to_string(n_vertices) +
                          " vertices, found " + std::to_string(vertices.size()));
  if (static_cast<long long>(tets.size()) != n_tets)
    throw ValidationError("mesh: counts line declares " + std::to_string(n_tets) +
                          " tets, found " + std::to_string(tets.size()));
  return TetMesh(std::move(vertices), std::move(tets), std::move(fixed), std::move(regions),
                 std::move(obs));
}

void save_mesh(const TetMesh& mesh, const std::string& path) {
  detail::write_file(path, serialize_mesh(mesh));
}

TetMesh load_mesh(const std::string& path) { return parse_mesh(detail::read_file(path)); }

}  // namespace deformnet
