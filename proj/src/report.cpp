#include <sstream>

#include "deformnet/error.hpp"
#include "deformnet/eval.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace deformnet {

using detail::format_double;

std::string session_json(const SessionReport& r) {
  nlohmann::ordered_json j;
  j["rmse_mode"] = r.rmse_mode == RmseMode::kComponent ? "component" : "vertex_norm";
  j["mean_rmse_mm"] = r.mean_rmse_mm;
  j["mean_rmse_pct"] = r.mean_rmse_pct;
  j["mean_lpe_mm"] = r.mean_lpe_mm;
  j["mean_max_lpe_mm"] = r.mean_max_lpe_mm;
  j["mean_max_lpe_pct"] = r.mean_max_lpe_pct;
  j["max_displacement_mm"] = r.max_displacement_mm;
  j["observation_pct"] = r.observation_pct;
  j["n_obs"] = r.n_obs;
  j["n_free"] = r.n_free;
  j["sample_count"] = r.sample_count;
  nlohmann::ordered_json trials = nlohmann::ordered_json::array();
  for (const auto& t : r.trials) {
    nlohmann::ordered_json tj;
    tj["repeat"] = t.repeat;
    tj["fold"] = t.fold;
    tj["train_seed"] = t.train_seed;
    tj["n_train"] = t.n_train;
    tj["n_test"] = t.n_test;
    tj["rmse_mm"] = t.rmse_mm;
    tj["rmse_pct"] = t.rmse_pct;
    tj["mean_lpe_mm"] = t.mean_lpe_mm;
    tj["mean_max_lpe_mm"] = t.mean_max_lpe_mm;
    tj["final_epoch_cost"] = t.final_epoch_cost;
    tj["test_indices"] = t.test_indices;
    trials.push_back(tj);
  }
  j["trials"] = trials;
  return j.dump(1) + "\n";
}

std::string trials_csv(const SessionReport& r) {
  std::ostringstream out;
  out << "repeat,fold,n_train,n_test,rmse_mm,rmse_pct,mean_lpe_mm,mean_max_lpe_mm,"
         "mean_max_lpe_pct,max_displacement_mm,observation_pct,n_obs,n_free,sample_count\n";
  for (const auto& t : r.trials) {
    const double max_pct =
        r.max_displacement_mm > 0.0 ? t.mean_max_lpe_mm / r.max_displacement_mm * 100.0 : 0.0;
    out << t.repeat << ',' << t.fold << ',' << t.n_train << ',' << t.n_test << ','
        << format_double(t.rmse_mm) << ',' << format_double(t.rmse_pct) << ','
        << format_double(t.mean_lpe_mm) << ',' << format_double(t.mean_max_lpe_mm) << ','
        << format_double(max_pct) << ',' << format_double(r.max_displacement_mm) << ','
        << format_double(r.observation_pct) << ',' << r.n_obs << ',' << r.n_free << ','
        << r.sample_count << '\n';
  }
  return out.str();
}

std::string curve_csv(const SessionReport& r) {
  std::ostringstream out;
  out << "iteration,test_rmse_mm\n";
  for (const auto& [it, v] : r.mean_curve_mm) out << it << ',' << format_double(v) << '\n';
  return out.str();
}

std::string max_lpe_csv(const SessionReport& r) {
  std::ostringstream out;
  out << "repeat,fold,sample,max_lpe_mm,true_disp_mm\n";
  for (const auto& t : r.trials)
    for (size_t i = 0; i < t.max_lpe_mm.size(); ++i)
      out << t.repeat << ',' << t.fold << ',' << t.test_indices[i] << ','
          << format_double(t.max_lpe_mm[i]) << ',' << format_double(t.max_lpe_true_disp_mm[i])
          << '\n';
  return out.str();
}

std::string deformed_vtk(const TetMesh& mesh, const Eigen::VectorXd& u_free,
                         const std::vector<double>& lpe_mm, const std::string& title) {
  if (u_free.size() != 3 * mesh.num_free())
    throw ValidationError("vtk: displacement length does not match the mesh");
  if (!lpe_mm.empty() && static_cast<int>(lpe_mm.size()) != mesh.num_free())
    throw ValidationError("vtk: LPE length does not match the mesh");
  std::ostringstream out;
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    Vec3 p = mesh.vertices()[v];
    const int f = mesh.free_index(v);
    if (f >= 0) p += u_free.segment<3>(3 * f);
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
        << '\n';
  }
  const size_t n_tets = mesh.tets().size();
  out << "CELLS " << n_tets << ' ' << 5 * n_tets << '\n';
  for (const auto& t : mesh.tets())
    out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << n_tets << '\n';
  for (size_t i = 0; i < n_tets; ++i) out << "10\n";
  out << "POINT_DATA " << mesh.num_vertices() << '\n';
  out << "VECTORS displacement double\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int f = mesh.free_index(v);
    Vec3 u = f >= 0 ? Vec3(u_free.segment<3>(3 * f)) : Vec3::Zero();
    out << format_double(u.x()) << ' ' << format_double(u.y()) << ' ' << format_double(u.z())
        << '\n';
  }
  if (!lpe_mm.empty()) {
    out << "SCALARS lpe_mm double 1\nLOOKUP_TABLE default\n";
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const int f = mesh.free_index(v);
      out << format_double(f >= 0 ? lpe_mm[f] : 0.0) << '\n';
    }
  }
  return out.str();
}

}  // namespace deformnet
