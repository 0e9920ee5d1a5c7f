#pragma once

// JSON and CSV serialization of reports.  Doubles are written with 17
// significant digits so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmfg/bounds.hpp"
#include "hmfg/mfg_solver.hpp"
#include "hmfg/nplayer_eval.hpp"
#include "hmfg/partition.hpp"
#include "hmfg/pricing.hpp"

namespace hmfg {

using nlohmann::json;

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline json policy_json(const Policy& p) {
  const auto& sp = p.spaces();
  json rows = json::array();
  for (int t = 0; t <= sp.T; ++t) {
    json per_t = json::array();
    for (int s = 0; s < sp.S; ++s) {
      auto r = p.row(t, s);
      per_t.push_back(std::vector<double>(r.begin(), r.end()));
    }
    rows.push_back(per_t);
  }
  return rows;
}

inline json partition_json(const GroupPartition& p) {
  return json{{"K", p.K}, {"assignment", p.assignment}, {"sizes", p.sizes()}};
}

inline json to_json(const SolveReport& r) {
  json policies = json::array();
  for (const auto& p : r.profile) policies.push_back(policy_json(p));
  return json{{"weighted_exploitability", r.weighted_expl},
              {"per_group_exploitability", r.per_group_expl},
              {"iterations", r.iterations},
              {"policies", policies}};
}

inline json to_json(const BoundReport& b) {
  return json{{"eps_solver", b.eps_solver},
              {"eps_mf", b.eps_mf},
              {"eps_heter", b.eps_heter},
              {"total", b.total},
              {"eps_mf_provenance", to_string(b.provenance)},
              {"eps_mf_explicit", b.eps_mf_explicit},
              {"eps_mf_generic", b.eps_mf_generic},
              {"generic_constant", b.generic_constant},
              {"eps_heter_is_lower_bound", b.heter_lower_bound},
              {"eps_t_R", b.eps_t_R},
              {"eps_t_P", b.eps_t_P}};
}

inline json to_json(const ConstantTable& tb) {
  return json{{"C", tb.C},
              {"C_k", tb.Ck},
              {"C_tilde", tb.Ct},
              {"C_tilde_k", tb.Ctk},
              {"f", std::vector<double>(tb.f.begin(), tb.f.end())},
              {"C_bar", std::vector<double>(tb.barC.begin(), tb.barC.end())}};
}

inline json to_json(const LipschitzProfile& l) {
  return json{{"w_R", l.w_R}, {"w_P", l.w_P}, {"w_max", l.w_max}, {"rbar_max", l.rbar_max}, {"w_D", l.w_D},
              {"D", l.D}};
}

inline json to_json(const PartitionSolution& s) {
  json j = partition_json(s.partition);
  j["method"] = to_string(s.method);
  j["objective"] = s.objective;
  j["heter_term"] = s.heter_term;
  j["mf_term"] = s.mf_term;
  j["centroids"] = s.centroids;
  return j;
}

inline json to_json(const JointEvaluation& e) {
  return json{{"values", e.values}, {"br_values", e.br_values}, {"nashconv", e.nashconv}};
}

inline json to_json(const ThresholdResult& t) {
  return json{{"N_star", t.N_star}, {"K_bar", t.K_bar}, {"assumption_holds", t.assumption_holds}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Minimal CSV table: header plus rows of doubles (integers print exactly).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string str() const {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + fmt_double(r[c]);
      out += "\n";
    }
    return out;
  }
};

inline CsvTable exploitability_csv(const SolveReport& r) {
  CsvTable t;
  t.header = {"iteration", "weighted"};
  const int K = r.per_group_expl.size();
  for (int k = 0; k < K; ++k) t.header.push_back("group_" + std::to_string(k));
  for (std::size_t it = 0; it < r.expl_history.size(); ++it) {
    std::vector<double> row{double(it + 1), r.expl_history[it]};
    row.insert(row.end(), r.group_expl_history[it].begin(), r.group_expl_history[it].end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable eps_t_csv(const BoundReport& b) {
  CsvTable t;
  t.header = {"t", "eps_t_R", "eps_t_P"};
  for (std::size_t s = 0; s < b.eps_t_R.size(); ++s)
    t.rows.push_back({double(s), b.eps_t_R[s], s < b.eps_t_P.size() ? b.eps_t_P[s] : 0.0});
  return t;
}

/// mean_l1 is the Monte Carlo estimate, bound_rhs the recursive bound.
inline CsvTable flow_deviation_csv(const EmpiricalFlowSample& sample, const std::vector<double>& rhs) {
  CsvTable t;
  t.header = {"t", "k", "mean_l1", "se", "bound_rhs"};
  const int K = sample.K;
  for (int s = 0; s <= sample.spaces.T; ++s)
    for (int k = 0; k < K; ++k) {
      const std::size_t i = static_cast<std::size_t>(s) * K + k;
      t.rows.push_back({double(s), double(k), sample.deviation_l1[i], sample.deviation_se[i], rhs[i]});
    }
  return t;
}

inline CsvTable two_type_csv(const TwoTypeStudy& st) {
  CsvTable t;
  t.header = {"N", "eps_mf_1", "eps_heter_1", "total_1", "eps_mf_2", "eps_heter_2", "total_2"};
  for (const auto& r : st.rows)
    t.rows.push_back({r.N, r.eps_mf_1, r.eps_heter_1, r.total_1, r.eps_mf_2, r.eps_heter_2, r.total_2});
  return t;
}

}  // namespace hmfg
