#pragma once

// JSON form of EvalReport. Keys: curve, coverage_at, top1_base,
// top1_lowshot, weight_norms. coverage_at is keyed by the precision target
// rendered in shortest round-trip decimal, so reloading recovers the exact
// binary target value.

#include <string>

#include <json.hpp>

#include "lowshot/eval.hpp"
#include "lowshot/io.hpp"

namespace lowshot {

inline std::string report_to_json(const EvalReport& rep) {
  rep.validate();
  nlohmann::ordered_json j;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& [cov, prec] : rep.curve)
    curve.push_back(nlohmann::ordered_json::array({cov, prec}));
  j["curve"] = std::move(curve);
  auto cov_at = nlohmann::ordered_json::object();
  for (const auto& [target, cov] : rep.coverage_at) cov_at[format_double(target)] = cov;
  j["coverage_at"] = std::move(cov_at);
  j["top1_base"] = rep.top1_base;
  j["top1_lowshot"] = rep.top1_lowshot;
  j["weight_norms"] = rep.weight_norms;
  return j.dump(2) + "\n";
}

inline EvalReport report_from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("eval report: ") + e.what());
  }
  if (!j.is_object()) throw parse_error("eval report: expected a JSON object");
  const char* keys[] = {"curve", "coverage_at", "top1_base", "top1_lowshot", "weight_norms"};
  for (const char* key : keys)
    if (!j.contains(key))
      throw parse_error(std::string("eval report: missing key '") + key + "'");
  if (j.size() != std::size(keys))
    throw parse_error("eval report: unexpected extra keys");

  EvalReport rep;
  const auto& curve = j["curve"];
  if (!curve.is_array()) throw parse_error("eval report: 'curve' must be an array");
  for (const auto& point : curve) {
    if (!point.is_array() || point.size() != 2 || !point[0].is_number() || !point[1].is_number())
      throw parse_error("eval report: curve points must be [coverage, precision]");
    rep.curve.emplace_back(point[0].get<double>(), point[1].get<double>());
  }
  const auto& cov_at = j["coverage_at"];
  if (!cov_at.is_object()) throw parse_error("eval report: 'coverage_at' must be an object");
  for (const auto& [key, value] : cov_at.items()) {
    if (!value.is_number()) throw parse_error("eval report: coverage_at values must be numbers");
    rep.coverage_at.emplace_back(parse_double(key), value.get<double>());
  }
  if (!j["top1_base"].is_number() || !j["top1_lowshot"].is_number())
    throw parse_error("eval report: top-1 fields must be numbers");
  rep.top1_base = j["top1_base"].get<double>();
  rep.top1_lowshot = j["top1_lowshot"].get<double>();
  const auto& norms = j["weight_norms"];
  if (!norms.is_array()) throw parse_error("eval report: 'weight_norms' must be an array");
  for (const auto& v : norms) {
    if (!v.is_number()) throw parse_error("eval report: weight norms must be numbers");
    rep.weight_norms.push_back(v.get<double>());
  }
  try {
    rep.validate();
  } catch (const std::invalid_argument& e) {
    throw parse_error(e.what());
  }
  return rep;
}

}  // namespace lowshot
