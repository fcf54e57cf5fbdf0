#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kr/path_measure.hpp"

namespace kr {

// Shortest faithful text for a double: always 17 significant digits.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Shortest text that reads back to the same double; for messages.
inline std::string format_short(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline double parse_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ParseError(where, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ParseError(where, "number must be finite");
  return x;
}

inline int parse_positive_int(const nlohmann::json& doc, const char* key) {
  const std::string where = std::string("/") + key;
  if (!doc.contains(key)) throw ParseError(where, "missing field");
  const auto& j = doc.at(key);
  if (!j.is_number_integer() || j.get<long long>() <= 0) throw ParseError(where, "must be a positive integer");
  return static_cast<int>(j.get<long long>());
}

}  // namespace detail

// Parses a MeasureFile document:
//   { "d": int, "N": int, "atoms": [[[x_11..x_1d], ..., [x_N1..x_Nd]], ...], "weights": [...] }
// For d == 1 a step may also be written as a bare number.
inline PathMeasure parse_measure(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("", "document must be a JSON object");
  const int d = detail::parse_positive_int(doc, "d");
  const int N = detail::parse_positive_int(doc, "N");
  if (!doc.contains("atoms") || !doc["atoms"].is_array()) throw ParseError("/atoms", "expected an array");
  if (!doc.contains("weights") || !doc["weights"].is_array()) throw ParseError("/weights", "expected an array");
  const auto& atoms = doc["atoms"];
  const auto& weights = doc["weights"];
  if (atoms.empty()) throw ParseError("/atoms", "measure has no atoms");
  if (atoms.size() != weights.size()) {
    throw ParseError("/weights", "expected " + std::to_string(atoms.size()) + " weights, got " +
                                     std::to_string(weights.size()));
  }
  std::vector<double> coords;
  coords.reserve(atoms.size() * static_cast<std::size_t>(N) * d);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const std::string ai = "/atoms/" + std::to_string(i);
    const auto& path = atoms[i];
    if (!path.is_array() || path.size() != static_cast<std::size_t>(N)) {
      throw ParseError(ai, "expected an array of " + std::to_string(N) + " steps");
    }
    for (std::size_t t = 0; t < path.size(); ++t) {
      const std::string at = ai + "/" + std::to_string(t);
      const auto& step = path[t];
      if (d == 1 && step.is_number()) {
        coords.push_back(detail::parse_number(step, at));
        continue;
      }
      if (!step.is_array() || step.size() != static_cast<std::size_t>(d)) {
        throw ParseError(at, "expected an array of " + std::to_string(d) + " numbers");
      }
      for (std::size_t j = 0; j < step.size(); ++j) {
        coords.push_back(detail::parse_number(step[j], at + "/" + std::to_string(j)));
      }
    }
  }
  std::vector<double> w;
  w.reserve(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::string wi = "/weights/" + std::to_string(i);
    const double x = detail::parse_number(weights[i], wi);
    if (!(x > 0.0)) throw ParseError(wi, "weights must be positive");
    total += x;
    w.push_back(x);
  }
  if (std::abs(total - 1.0) > kWeightSumTol) throw ParseError("/weights", "weights must sum to 1");
  return PathMeasure::from_flat(d, N, std::move(coords), std::move(w));
}

inline PathMeasure parse_measure(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), "malformed JSON");
  } catch (const nlohmann::json::out_of_range& e) {
    throw ParseError("document", std::string("number out of range: ") + e.what());
  }
  return parse_measure(doc);
}

inline PathMeasure load_measure(const std::string& filename) {
  std::ifstream in(filename);
  if (!in) throw ParseError(filename, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_measure(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(filename + ":" + e.where(), e.reason());
  }
}

// Canonical MeasureFile text (atoms in canonical order, 17 significant digits).
inline std::string serialize_measure(const PathMeasure& mu) {
  std::string out = "{\"d\": " + std::to_string(mu.dim()) + ", \"N\": " + std::to_string(mu.steps()) +
                    ", \"atoms\": [";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (i) out += ", ";
    out += '[';
    for (int t = 0; t < mu.steps(); ++t) {
      if (t) out += ", ";
      out += '[';
      auto s = mu.state(i, t);
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j) out += ", ";
        out += format_double(s[j]);
      }
      out += ']';
    }
    out += ']';
  }
  out += "], \"weights\": [";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (i) out += ", ";
    out += format_double(mu.weight(i));
  }
  out += "]}";
  return out;
}

// CSV with header w,x_1_1,...,x_N_d; one atom per row.
inline std::string measure_csv(const PathMeasure& mu) {
  std::string out = "w";
  for (int t = 1; t <= mu.steps(); ++t) {
    for (int j = 1; j <= mu.dim(); ++j) out += ",x_" + std::to_string(t) + "_" + std::to_string(j);
  }
  out += '\n';
  for (std::size_t i = 0; i < mu.size(); ++i) {
    out += format_double(mu.weight(i));
    for (double x : mu.atom(i)) out += "," + format_double(x);
    out += '\n';
  }
  return out;
}

}  // namespace kr
