// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "liblab/checks.hpp"

#ifndef LIBLAB_VERSION
#define LIBLAB_VERSION "0.1.0"
#endif

namespace liblab {

// Real numbers print as %.12g; values below 1e-12 in magnitude print as 0 so
// that round-off never leaks into tabular output.
inline std::string format_number(double v) {
  if (std::abs(v) < 1e-12) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string format_value(Complex c) {
  if (std::abs(c.imag()) < 1e-12) return format_number(c.real());
  std::string im = format_number(c.imag());
  return format_number(c.real()) + (im.front() == '-' ? "" : "+") + im + "i";
}

inline nlohmann::json complex_json(Complex c) { return nlohmann::json::array({c.real(), c.imag()}); }

inline Complex complex_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("complex value must be [re, im]");
  // NaN is written as null by the JSON writer.
  auto part = [](const nlohmann::json& x) {
    return x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>();
  };
  return {part(j[0]), part(j[1])};
}

inline nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json j = {{"suite", r.suite},
                      {"check", r.check},
                      {"name", r.name()},
                      {"params", r.params},
                      {"observed", complex_json(r.observed)},
                      {"expected", complex_json(r.expected)},
                      {"tol", r.tol},
                      {"pass", r.pass},
                      {"note", r.note}};
  j["stderr"] = r.stderr ? nlohmann::json(*r.stderr) : nlohmann::json(nullptr);
  if (!r.table.empty()) j["table"] = r.table;
  return j;
}

inline CheckReport report_from_json(const nlohmann::json& j) {
  CheckReport r;
  r.suite = j.at("suite").get<std::string>();
  r.check = j.at("check").get<std::string>();
  r.params = j.at("params").get<std::string>();
  r.observed = complex_from_json(j.at("observed"));
  r.expected = complex_from_json(j.at("expected"));
  r.tol = j.at("tol").get<double>();
  if (!j.at("stderr").is_null()) r.stderr = j.at("stderr").get<double>();
  r.pass = j.at("pass").get<bool>();
  r.note = j.at("note").get<std::string>();
  if (j.contains("table")) r.table = j.at("table").get<std::vector<std::array<double, 3>>>();
  return r;
}

inline nlohmann::json reports_json(const std::vector<CheckReport>& rs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rs) arr.push_back(to_json(r));
  return {{"version", LIBLAB_VERSION}, {"reports", arr}};
}

inline std::vector<CheckReport> reports_from_json(const nlohmann::json& j) {
  std::vector<CheckReport> out;
  for (const auto& r : j.at("reports")) out.push_back(report_from_json(r));
  return out;
}

inline void write_csv(const std::vector<CheckReport>& rs, std::ostream& os) {
  os << "name,observed,expected,tol,stderr,pass\n";
  for (const auto& r : rs) {
    std::string name = r.name();
    for (char& ch : name)
      if (ch == ',') ch = ';';
    os << name << ',' << format_value(r.observed) << ',' << format_value(r.expected) << ',' << format_number(r.tol)
       << ',' << (r.stderr ? format_number(*r.stderr) : "") << ',' << (r.pass ? "true" : "false") << '\n';
  }
}

// Whitespace-separated columns x, empirical, theoretical.
inline void write_table(const CheckReport& r, std::ostream& os) {
  os << "# " << r.name() << "\n# x empirical theoretical\n";
  for (const auto& row : r.table)
    os << format_number(row[0]) << ' ' << format_number(row[1]) << ' ' << format_number(row[2]) << '\n';
}

inline std::string table_file_name(const CheckReport& r) {
  std::string s = r.name();
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '.') ch = '_';
  return s + ".dat";
}

// Writes <stem>.json and/or <stem>.csv into dir, plus one data file per report
// that carries a table. Returns the files written.
inline std::vector<std::string> emit_report(const std::vector<CheckReport>& rs, const std::string& dir,
                                            const std::vector<std::string>& formats, const std::string& stem = "report") {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
  std::vector<std::string> files;
  auto open = [&](const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    files.push_back(p.string());
    return out;
  };
  for (const auto& f : formats) {
    if (f == "json") {
      auto out = open(fs::path(dir) / (stem + ".json"));
      out << reports_json(rs).dump(2) << '\n';
    } else if (f == "csv") {
      auto out = open(fs::path(dir) / (stem + ".csv"));
      write_csv(rs, out);
    } else {
      throw std::invalid_argument("unknown report format '" + f + "'");
    }
  }
  for (const auto& r : rs)
    if (!r.table.empty()) {
      auto out = open(fs::path(dir) / table_file_name(r));
      write_table(r, out);
    }
  return files;
}

}  // namespace liblab
