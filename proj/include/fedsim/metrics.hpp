#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fedsim {

/// One row per round. The distance columns apply to quadratic problems only
/// (empty / null otherwise); loss and grad_norm are empty when objective
/// evaluation is disabled. wall_ms is an in-memory diagnostic and is never
/// serialized, so reruns of the same config + seed are byte-identical.
struct MetricsRecord {
  int round = 0;
  std::optional<double> loss;
  std::optional<double> grad_norm;
  std::optional<double> dist_to_opt;          // |x - x*|
  std::optional<double> dist_to_fixed_point;  // |x - x~|
  double client_lr = 0.0;
  double server_lr = 0.0;
  double wall_ms = 0.0;
};

enum class MetricsFormat { Csv, Jsonl };

inline constexpr const char* kMetricsCsvHeader =
    "round,loss,grad_norm,dist_to_opt,dist_to_fixed_point,client_lr,server_lr";

namespace detail {

/// Shortest decimal form that still round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline std::string format_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_opt(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  return std::stod(cell);
}

}  // namespace detail

inline nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j;
  j["round"] = r.round;
  j["loss"] = r.loss ? nlohmann::json(*r.loss) : nlohmann::json(nullptr);
  j["grad_norm"] =
      r.grad_norm ? nlohmann::json(*r.grad_norm) : nlohmann::json(nullptr);
  j["dist_to_opt"] =
      r.dist_to_opt ? nlohmann::json(*r.dist_to_opt) : nlohmann::json(nullptr);
  j["dist_to_fixed_point"] = r.dist_to_fixed_point
                                 ? nlohmann::json(*r.dist_to_fixed_point)
                                 : nlohmann::json(nullptr);
  j["client_lr"] = r.client_lr;
  j["server_lr"] = r.server_lr;
  return j;
}

/// Serializes the records. The full payload is rendered before the file is
/// opened, so an error never leaves a partial file behind.
inline void write_metrics(const std::vector<MetricsRecord>& records,
                          const std::string& path, MetricsFormat format) {
  std::ostringstream out;
  if (format == MetricsFormat::Csv) {
    out << kMetricsCsvHeader << '\n';
    for (const MetricsRecord& r : records) {
      out << r.round << ',' << detail::format_opt(r.loss) << ','
          << detail::format_opt(r.grad_norm) << ','
          << detail::format_opt(r.dist_to_opt) << ','
          << detail::format_opt(r.dist_to_fixed_point) << ','
          << detail::format_double(r.client_lr) << ','
          << detail::format_double(r.server_lr) << '\n';
    }
  } else {
    for (const MetricsRecord& r : records) out << to_json(r).dump() << '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    throw std::runtime_error("write_metrics: cannot open '" + path +
                             "' for writing");
  }
  file << out.str();
  file.flush();
  if (!file) throw std::runtime_error("write_metrics: write failed for '" + path + "'");
}

inline std::vector<MetricsRecord> read_metrics(const std::string& path,
                                               MetricsFormat format) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("read_metrics: cannot open '" + path + "'");
  std::vector<MetricsRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    if (format == MetricsFormat::Csv) {
      if (first) {
        first = false;
        if (line != kMetricsCsvHeader) {
          throw std::runtime_error("read_metrics: unexpected CSV header in '" +
                                   path + "'");
        }
        continue;
      }
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ss(line);
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      while (cells.size() < 7) cells.emplace_back();
      MetricsRecord r;
      r.round = std::stoi(cells[0]);
      r.loss = detail::parse_opt(cells[1]);
      r.grad_norm = detail::parse_opt(cells[2]);
      r.dist_to_opt = detail::parse_opt(cells[3]);
      r.dist_to_fixed_point = detail::parse_opt(cells[4]);
      r.client_lr = std::stod(cells[5]);
      r.server_lr = std::stod(cells[6]);
      records.push_back(r);
    } else {
      const nlohmann::json j = nlohmann::json::parse(line);
      MetricsRecord r;
      r.round = j.at("round").get<int>();
      auto opt = [&](const char* key) -> std::optional<double> {
        const auto& v = j.at(key);
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
      };
      r.loss = opt("loss");
      r.grad_norm = opt("grad_norm");
      r.dist_to_opt = opt("dist_to_opt");
      r.dist_to_fixed_point = opt("dist_to_fixed_point");
      r.client_lr = j.at("client_lr").get<double>();
      r.server_lr = j.at("server_lr").get<double>();
      records.push_back(r);
    }
  }
  return records;
}

}  // namespace fedsim
