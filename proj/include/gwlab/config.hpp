#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gwlab/laws.hpp"
#include "gwlab/rational.hpp"

namespace gwlab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Law config file:
//   {"p": {"0": "1/2", "2": "1/2"},
//    "q": {"default": 0, "1": 0.25},
//    "arith": "exact"}
// Probabilities are rational strings or JSON numbers; "q" and "arith" are
// optional (q defaults to marking everything, arith to exact).
struct LawConfig {
  std::map<std::int32_t, std::string> p;
  std::map<std::int32_t, std::string> q;
  std::string q_default = "1";
  bool has_q = false;
  std::string arith = "exact";
};

namespace detail {

inline std::string number_to_string(const nlohmann::json& v, const char* what) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw ConfigError(std::string(what) + ": expected a number or a rational string");
}

inline void parse_degree_map(const nlohmann::json& obj, const char* what,
                             std::map<std::int32_t, std::string>& out,
                             std::string* default_slot) {
  if (!obj.is_object()) throw ConfigError(std::string(what) + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (default_slot && it.key() == "default") {
      *default_slot = number_to_string(it.value(), what);
      continue;
    }
    std::size_t pos = 0;
    int k;
    try {
      k = std::stoi(it.key(), &pos);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad degree key '" + it.key() + "'");
    }
    if (pos != it.key().size() || k < 0)
      throw ConfigError(std::string(what) + ": bad degree key '" + it.key() + "'");
    out[k] = number_to_string(it.value(), what);
  }
}

}  // namespace detail

inline LawConfig parse_law_config(const nlohmann::json& j) {
  LawConfig cfg;
  if (!j.is_object() || !j.contains("p"))
    throw ConfigError("law config: missing the \"p\" table");
  detail::parse_degree_map(j.at("p"), "p", cfg.p, nullptr);
  if (j.contains("q")) {
    cfg.has_q = true;
    cfg.q_default = "0";
    detail::parse_degree_map(j.at("q"), "q", cfg.q, &cfg.q_default);
  }
  if (j.contains("arith")) {
    cfg.arith = j.at("arith").get<std::string>();
    if (cfg.arith != "exact" && cfg.arith != "float")
      throw ConfigError("law config: arith must be \"exact\" or \"float\"");
  }
  return cfg;
}

inline LawConfig load_law_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open law config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("law config '" + path + "': " + e.what());
  }
  return parse_law_config(j);
}

// A q-only file may be either {"q": {...}} or a bare degree table.
inline void merge_mark_config(LawConfig& cfg, const nlohmann::json& j) {
  cfg.q.clear();
  cfg.has_q = true;
  cfg.q_default = "0";
  detail::parse_degree_map(j.contains("q") ? j.at("q") : j, "q", cfg.q, &cfg.q_default);
}

template <class R>
OffspringLaw<R> build_offspring_law(const LawConfig& cfg) {
  std::map<std::int32_t, R> pmf;
  for (const auto& [k, s] : cfg.p) pmf[k] = parse_number<R>(s);
  return OffspringLaw<R>::validate(pmf);
}

template <class R>
MarkFunction<R> build_mark_function(const LawConfig& cfg) {
  std::map<std::int32_t, R> table;
  for (const auto& [k, s] : cfg.q) table[k] = parse_number<R>(s);
  return MarkFunction<R>(std::move(table), parse_number<R>(cfg.q_default));
}

}  // namespace gwlab
