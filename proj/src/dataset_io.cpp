#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

#include "deformnet/error.hpp"
#include "deformnet/sampling.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace deformnet {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'F', 'O', 'R', 'M', 'D', 'S'};

void put_u64(std::string& out, uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<uint64_t>(x)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n)
      throw ValidationError("dataset truncated at byte offset " + std::to_string(pos_) +
                            ": expected " + std::to_string(n) + " bytes for " + what + ", " +
                            std::to_string(bytes_.size() - pos_) + " available");
  }
  uint64_t u64(const std::string& what) {
    need(8, what);
    uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }
  std::string_view take(size_t n, const std::string& what) {
    need(n, what);
    std::string_view s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  const int n = ds.num_free();
  nlohmann::json header;
  header["format"] = "deformnet-dataset";
  header["version"] = 1;
  header["mesh_hash"] = ds.mesh_hash;
  header["observation_ids"] = ds.observation_ids;
  header["free_vertex_ids"] = ds.free_vertex_ids;
  header["region_names"] = ds.region_names;
  header["n_free"] = n;
  header["n_obs"] = ds.num_observed();
  header["mm_per_unit"] = ds.scale.mm_per_unit;
  header["sample_count"] = ds.size();
  header["record_doubles"] = 4 + 3 * n;
  header["field_order"] = {"region_id", "target_disp[3]", "u_all[3N]"};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + ds.samples.size() * (4 + 3 * n) * 8);
  for (const auto& s : ds.samples) {
    if (s.u_all.size() != 3 * n) throw ValidationError("dataset: sample with wrong u_all length");
    put_f64(out, static_cast<double>(s.region_id));
    for (int a = 0; a < 3; ++a) put_f64(out, s.target_disp[a]);
    for (Eigen::Index i = 0; i < s.u_all.size(); ++i) put_f64(out, s.u_all[i]);
  }
  return out;
}

Dataset parse_dataset(const std::string& bytes) {
  Reader in(bytes);
  const auto magic = in.take(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("dataset: bad magic at byte offset 0");
  const uint64_t header_len = in.u64("header length");
  const size_t header_at = in.pos();
  const auto text = in.take(header_len, "JSON header");

  Dataset ds;
  size_t count = 0;
  int n = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format") != "deformnet-dataset" || header.at("version") != 1)
      throw ValidationError("dataset: unsupported format/version");
    ds.mesh_hash = header.at("mesh_hash").get<std::string>();
    ds.observation_ids = header.at("observation_ids").get<std::vector<int>>();
    ds.free_vertex_ids = header.at("free_vertex_ids").get<std::vector<int>>();
    ds.region_names = header.at("region_names").get<std::vector<std::string>>();
    ds.scale.mm_per_unit = header.at("mm_per_unit").get<double>();
    count = header.at("sample_count").get<size_t>();
    n = header.at("n_free").get<int>();
    if (n != ds.num_free() || header.at("n_obs").get<int>() != ds.num_observed() ||
        header.at("record_doubles").get<int>() != 4 + 3 * n)
      throw ValidationError("dataset: header counts are inconsistent");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("dataset: malformed JSON header at byte offset " +
                          std::to_string(header_at) + ": " + e.what());
  }
  ds.scale.validate();
  ds.observation_free_indices();

  ds.samples.reserve(count);
  for (size_t d = 0; d < count; ++d) {
    const std::string what = "record " + std::to_string(d);
    in.need(static_cast<size_t>(4 + 3 * n) * 8, what);
    DeformationSample s;
    const double region = in.f64(what);
    s.region_id = static_cast<int>(region);
    if (s.region_id != region || s.region_id < 0 ||
        s.region_id >= static_cast<int>(ds.region_names.size()))
      throw ValidationError("dataset: " + what + " has invalid region id");
    for (int a = 0; a < 3; ++a) s.target_disp[a] = in.f64(what);
    s.u_all.resize(3 * n);
    for (int i = 0; i < 3 * n; ++i) s.u_all[i] = in.f64(what);
    ds.samples.push_back(std::move(s));
  }
  if (in.remaining() != 0)
    throw ValidationError("dataset: " + std::to_string(in.remaining()) +
                          " trailing bytes at byte offset " + std::to_string(in.pos()));
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  detail::write_file(path, serialize_dataset(ds));
}

Dataset load_dataset(const std::string& path) { return parse_dataset(detail::read_file(path)); }

void require_same_mesh(const Dataset& ds, const TetMesh& mesh) {
  if (ds.mesh_hash != mesh.content_hash())
    throw ValidationError("mesh hash mismatch: dataset " + ds.mesh_hash + ", mesh " +
                          mesh.content_hash());
  if (ds.observation_ids != mesh.observation_ids() || ds.free_vertex_ids != mesh.free_vertex_ids())
    throw ValidationError("dataset vertex roles do not match the mesh");
}

std::string dataset_csv(const Dataset& ds) {
  using detail::format_double;
  std::ostringstream out;
  out << "sample,region,tx,ty,tz";
  for (int v : ds.free_vertex_ids) out << ",u" << v << "x,u" << v << "y,u" << v << "z";
  out << '\n';
  for (size_t d = 0; d < ds.samples.size(); ++d) {
    const auto& s = ds.samples[d];
    out << d << ',' << ds.region_names[s.region_id];
    for (int a = 0; a < 3; ++a) out << ',' << format_double(s.target_disp[a]);
    for (Eigen::Index i = 0; i < s.u_all.size(); ++i) out << ',' << format_double(s.u_all[i]);
    out << '\n';
  }
  return out.str();
}

}  // namespace deformnet
