#pragma once

// JSON scenario files and a uniform view over the supported game families.
// The schema is documented in README.md.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmfg/bounds.hpp"
#include "hmfg/common.hpp"
#include "hmfg/game_model.hpp"
#include "hmfg/parametric.hpp"
#include "hmfg/pricing.hpp"

namespace hmfg {

using nlohmann::json;

struct TwoTypeSpec {
  double alpha = 0.5;
  double c2a = 0.0;
  double c2b = 0.0;
  std::array<double, 5> shared{};
  int N = 0;
};

/// Population of parameters with the aggregate constants needed by the
/// partition objective but no game attached.
struct PopulationSpec {
  Spaces spaces;
  int d = 1;
  std::vector<double> thetas;
  double w_R = 0.0;
  double w_P = 0.0;
  double rbar_max = 0.0;
  double w_D = 1.0;
  std::optional<std::uint64_t> uniform_seed;  // thetas ~ U[0,1]^d regenerated for other N
};

struct Scenario {
  std::string type;  // parametric | pricing | population
  std::string name;
  std::optional<ParametricFamily> parametric;
  std::optional<PricingParams> pricing;
  std::optional<TwoTypeSpec> two_type;
  std::optional<PopulationSpec> population;
  std::string default_partition = "kmeans:1";
  json raw;
};

/// What the pipeline needs from a family: parameters to cluster, the
/// homogenized games, certificate constants and closed-form heterogeneity.
struct ScenarioModel {
  Spaces spaces;
  int n_players = 0;
  int d = 1;
  std::vector<double> thetas;  // N x d
  std::function<MeanFieldTypeGame(const GroupPartition&)> homogenize;
  std::function<NPlayerGame()> n_player_game;
  std::function<LipschitzProfile(const GroupPartition&)> lipschitz;
  std::function<HeterogeneityProbe(const GroupPartition&)> probe;
  LipschitzProfile aggregate;  // one-group profile for the partition objective
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline std::vector<double> flat_doubles(const json& j, const std::string& what) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
    return out;
  }
  require(j.is_array(), what + " must be a number or a (nested) array of numbers");
  for (const auto& e : j) {
    auto sub = flat_doubles(e, what);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

inline Spaces read_spaces(const json& j) {
  Spaces s{j.at("S").get<int>(), j.at("A").get<int>(), j.at("T").get<int>()};
  s.validate();
  return s;
}

inline std::vector<double> theta_rows(const json& j, int& d) {
  require(j.is_array() && !j.empty(), "thetas must be a non-empty array");
  std::vector<double> out;
  d = j[0].is_array() ? static_cast<int>(j[0].size()) : 1;
  require(d >= 1, "thetas rows must be non-empty");
  for (const auto& row : j) {
    auto v = flat_doubles(row, "thetas");
    require(static_cast<int>(v.size()) == d, "all theta rows must have the same length");
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline ParametricFamily read_parametric(const json& j) {
  Spaces sp = read_spaces(j);
  if (j.contains("generate")) {
    const auto& g = j.at("generate");
    RandomFamilyOptions opt;
    opt.d = get_or(g, "d", 1);
    opt.theta_spread = get_or(g, "theta_spread", 1.0);
    opt.lambda_R = get_or(g, "lambda_R", 0.5);
    opt.lambda_P = get_or(g, "lambda_P", 0.5);
    opt.n_types = get_or(g, "n_types", 0);
    return random_family(sp, g.at("N").get<int>(), g.at("seed").get<std::uint64_t>(), opt);
  }
  ParametricFamily f;
  f.spaces = sp;
  f.thetas = theta_rows(j.at("thetas"), f.d);
  f.initial_states = j.at("initial_states").get<std::vector<int>>();
  f.base = flat_doubles(j.at("base"), "base");
  f.phi = flat_doubles(j.at("phi"), "phi");
  const std::size_t sa = static_cast<std::size_t>(sp.S) * sp.A;
  f.kernel = j.contains("kernel") ? flat_doubles(j.at("kernel"), "kernel") : std::vector<double>(sa * sa, 0.0);
  f.lambda_R = get_or(j, "lambda_R", 0.0);
  f.P0 = flat_doubles(j.at("P0"), "P0");
  f.P1 = j.contains("P1") ? flat_doubles(j.at("P1"), "P1") : f.P0;
  f.h = j.contains("h") ? flat_doubles(j.at("h"), "h") : std::vector<double>(sa, 0.0);
  f.lambda_P = get_or(j, "lambda_P", 0.0);
  f.validate();
  return f;
}

inline PricingParams read_pricing(const json& j, std::optional<TwoTypeSpec>& tt) {
  PricingParams p;
  p.S_cap = j.at("S").get<int>();
  p.Q_cap = j.at("Q").get<int>();
  p.H_cap = j.at("H").get<int>();
  p.T = j.at("T").get<int>();
  p.Q0 = j.at("Q0").get<double>();
  p.d = j.at("d").get<double>();
  p.sigma = j.at("sigma").get<double>();
  p.C = get_or(j, "C", 1.0);
  if (j.contains("two_type")) {
    const auto& t = j.at("two_type");
    TwoTypeSpec s;
    s.N = t.at("N").get<int>();
    s.alpha = t.at("alpha").get<double>();
    auto c2 = t.at("c2").get<std::vector<double>>();
    require(c2.size() == 2, "two_type.c2 must have two entries");
    s.c2a = c2[0];
    s.c2b = c2[1];
    auto sh = t.at("shared").get<std::vector<double>>();
    require(sh.size() == 5, "two_type.shared must list c0..c4");
    std::copy(sh.begin(), sh.end(), s.shared.begin());
    require(s.alpha > 0.0 && s.alpha < 1.0, "two_type.alpha must lie in (0, 1)");
    if (j.contains("initial_states")) p.initial_states = j.at("initial_states").get<std::vector<int>>();
    p = two_type_params(p, s.N, s.alpha, s.c2a, s.c2b, s.shared);
    tt = s;
  } else {
    int d = 0;
    p.coeffs = theta_rows(j.at("coefficients"), d);
    require(d == 5, "pricing coefficients must have five columns c0..c4");
    p.initial_states = j.contains("initial_states") ? j.at("initial_states").get<std::vector<int>>()
                                                   : std::vector<int>(p.n_firms(), 0);
  }
  p.validate();
  return p;
}

inline std::vector<double> uniform_thetas(int N, int d, std::uint64_t seed) {
  CounterRng rng(seed, 0x75);
  std::vector<double> th(static_cast<std::size_t>(N) * d);
  for (auto& x : th) x = rng.uniform();
  return th;
}

inline PopulationSpec read_population(const json& j) {
  PopulationSpec p;
  p.spaces = read_spaces(j);
  if (j.contains("uniform")) {
    const auto& u = j.at("uniform");
    p.d = get_or(u, "d", 1);
    p.uniform_seed = u.at("seed").get<std::uint64_t>();
    p.thetas = uniform_thetas(u.at("N").get<int>(), p.d, *p.uniform_seed);
  } else {
    p.thetas = theta_rows(j.at("thetas"), p.d);
  }
  p.w_R = get_or(j, "w_R", 0.0);
  p.w_P = get_or(j, "w_P", 0.0);
  p.rbar_max = get_or(j, "rbar_max", 1.0);
  p.w_D = get_or(j, "w_D", 1.0);
  require(p.w_R >= 0.0 && p.w_P >= 0.0 && p.rbar_max >= 0.0 && p.w_D >= 0.0,
          "population Lipschitz fields must be >= 0");
  return p;
}

inline double max_norm(std::span<const double> th, int d) {
  double m = 0.0;
  for (std::size_t r = 0; r < th.size(); r += d) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += th[r + c] * th[r + c];
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j) {
  require(j.is_object(), "scenario must be a JSON object");
  Scenario sc;
  sc.raw = j;
  sc.type = j.at("type").get<std::string>();
  sc.name = detail::get_or<std::string>(j, "name", sc.type);
  if (j.contains("partition")) sc.default_partition = j.at("partition").get<std::string>();
  if (sc.type == "parametric") {
    sc.parametric = detail::read_parametric(j);
  } else if (sc.type == "pricing") {
    sc.pricing = detail::read_pricing(j, sc.two_type);
  } else if (sc.type == "population") {
    sc.population = detail::read_population(j);
  } else {
    throw ValidationError("unknown scenario type '" + sc.type + "' (expected parametric, pricing or population)");
  }
  return sc;
}

/// Copy of `sc` regenerated with N players; only generated populations,
/// generated parametric families and two-type pricing tables can be resized.
inline Scenario with_n_players(const Scenario& sc, int N) {
  json j = sc.raw;
  if (j.contains("generate")) {
    j["generate"]["N"] = N;
  } else if (j.contains("uniform")) {
    j["uniform"]["N"] = N;
  } else if (j.contains("two_type")) {
    j["two_type"]["N"] = N;
  } else {
    throw ValidationError("scenario '" + sc.name + "' has a fixed population; N cannot be varied");
  }
  try {
    return parse_scenario(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("scenario " + path + ": " + e.what());
  }
  try {
    return parse_scenario(j);
  } catch (const json::exception& e) {
    throw ValidationError("scenario " + path + ": " + e.what());
  }
}

inline ScenarioModel model_of(const ParametricFamily& fam) {
  ScenarioModel m;
  m.spaces = fam.spaces;
  m.n_players = fam.n_players();
  m.d = fam.d;
  m.thetas = fam.thetas;
  m.homogenize = [fam](const GroupPartition& p) { return build_mptype_from_partition(fam, p); };
  m.n_player_game = [fam] { return fam.build_n_player(); };
  m.lipschitz = [fam](const GroupPartition& p) { return fam.lipschitz(p); };
  m.probe = [fam](const GroupPartition& p) { return fam.heterogeneity_probe(p); };
  m.aggregate = LipschitzProfile::make({fam.w_R_aggregate()}, {fam.w_P_aggregate()},
                                       fam.reward_bound(fam.thetas), fam.w_D(), fam.radius());
  return m;
}

inline ScenarioModel model_of(const PricingParams& params) {
  ScenarioModel m;
  m.spaces = params.spaces();
  m.n_players = params.n_firms();
  m.d = 5;
  m.thetas = params.coeffs;
  m.homogenize = [params](const GroupPartition& p) { return build_pricing_mftype(params, p); };
  m.n_player_game = [params] { return build_n_player(params); };
  m.lipschitz = [params](const GroupPartition& p) { return pricing_certified_constants(params, p.weights()); };
  m.probe = [params](const GroupPartition& p) { return pricing_heterogeneity_probe(params, p); };
  double wd = 0.0;
  for (int s = 0; s <= params.S_cap; ++s)
    for (int q = 0; q <= params.Q_cap; ++q)
      for (int h = 0; h <= params.H_cap; ++h) {
        auto f = pricing_features(s, q, h);
        double n2 = 0.0;
        for (double x : f) n2 += x * x;
        wd = std::max(wd, std::sqrt(n2));
      }
  auto cert = pricing_certified_constants(params, {1.0});
  m.aggregate = LipschitzProfile::make(cert.w_R, cert.w_P, cert.rbar_max, wd, detail::max_norm(params.coeffs, 5));
  return m;
}

inline std::optional<ScenarioModel> model_of(const Scenario& sc) {
  if (sc.parametric) return model_of(*sc.parametric);
  if (sc.pricing) return model_of(*sc.pricing);
  return std::nullopt;
}

/// Parameters and aggregate constants used by the partition commands.
struct PartitionInput {
  Spaces spaces;
  int d = 1;
  std::vector<double> thetas;
  LipschitzProfile aggregate;
};

inline PartitionInput partition_input(const Scenario& sc) {
  if (sc.population) {
    const auto& p = *sc.population;
    return {p.spaces, p.d, p.thetas,
            LipschitzProfile::make({p.w_R}, {p.w_P}, p.rbar_max, p.w_D, detail::max_norm(p.thetas, p.d))};
  }
  auto m = *model_of(sc);
  return {m.spaces, m.d, m.thetas, m.aggregate};
}

}  // namespace hmfg
