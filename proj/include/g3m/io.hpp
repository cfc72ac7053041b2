// File formats.
//
// Matrices are CSV with no header, one row per matrix row, every value in
// the shortest decimal form that round-trips exactly (std::to_chars), so
// files are diffable and reruns are byte-identical.
//
// Dataset directory layout:
//   meta.json   config echo, seed, realized per-trait h2 and SNR
//   Y.csv R.csv C_true.csv D_true.csv

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "g3m/simulate.hpp"
#include "g3m/types.hpp"

namespace g3m {

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw IoError(where + ": cannot parse number '" + s + "'");
  }
  return v;
}

inline void write_matrix_csv(const std::filesystem::path& path,
                             const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      row.push_back(parse_double(cell, path.string()));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError(path.string() + ": ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path.string() + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(i, j) = rows[i][j];
    }
  }
  return m;
}

inline void write_json(const std::filesystem::path& path,
                       const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds,
                          const nlohmann::json& config_echo) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_matrix_csv(dir / "Y.csv", ds.y);
  write_matrix_csv(dir / "R.csv", ds.r.mat());
  write_matrix_csv(dir / "C_true.csv", ds.c_true.mat());
  write_matrix_csv(dir / "D_true.csv", ds.d_true.mat());

  nlohmann::json meta;
  meta["master_seed"] = ds.meta.master_seed;
  meta["index"] = ds.meta.index;
  meta["snr"] = ds.meta.snr;
  meta["h2"] = std::vector<double>(ds.meta.h2.data(),
                                   ds.meta.h2.data() + ds.meta.h2.size());
  meta["config"] = config_echo;
  write_json(dir / "meta.json", meta);
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.y = read_matrix_csv(dir / "Y.csv");
  try {
    ds.r = SpdMatrix(read_matrix_csv(dir / "R.csv"));
    ds.c_true = SpdMatrix(read_matrix_csv(dir / "C_true.csv"));
    ds.d_true = SpdMatrix(read_matrix_csv(dir / "D_true.csv"));
  } catch (const ValidationError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  const nlohmann::json meta = read_json(dir / "meta.json");
  ds.meta.master_seed = meta.value("master_seed", std::uint64_t{0});
  ds.meta.index = meta.value("index", 0);
  ds.meta.snr = meta.value("snr", 0.0);
  if (meta.contains("h2")) {
    const auto h2 = meta["h2"].get<std::vector<double>>();
    ds.meta.h2 = Eigen::Map<const Eigen::VectorXd>(h2.data(), h2.size());
  }
  return ds;
}

}  // namespace g3m
