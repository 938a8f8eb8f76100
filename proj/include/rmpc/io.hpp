#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rmpc/error.hpp"
#include "rmpc/polytope.hpp"

namespace rmpc::io {

using json = nlohmann::json;

/// Row-major nested arrays; a flat array is read as a column vector.
inline Eigen::MatrixXd matrix_from_json(const json & j)
{
  if (!j.is_array()) { throw Error(ErrorKind::InvalidArgument, "matrix must be a JSON array"); }
  if (j.empty()) { return Eigen::MatrixXd(0, 0); }
  if (!j.front().is_array()) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(j.size()), 1);
    for (std::size_t i = 0; i < j.size(); ++i) { out(static_cast<Eigen::Index>(i), 0) = j[i].get<double>(); }
    return out;
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto & row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) { throw Error(ErrorKind::InvalidArgument, "ragged matrix"); }
    for (Eigen::Index c = 0; c < cols; ++c) { out(r, c) = row[static_cast<std::size_t>(c)].get<double>(); }
  }
  return out;
}

inline Eigen::VectorXd vector_from_json(const json & j)
{
  Eigen::VectorXd out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) { out(static_cast<Eigen::Index>(i)) = j[i].get<double>(); }
  return out;
}

inline json to_json(const Eigen::MatrixXd & M)
{
  json out = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) { row.push_back(M(r, c)); }
    out.push_back(std::move(row));
  }
  return out;
}

inline json to_json(const Eigen::VectorXd & v)
{
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) { out.push_back(v(i)); }
  return out;
}

inline json to_json(const Polytope & P) { return json{{"T", to_json(P.T)}, {"d", to_json(P.d)}}; }

inline Polytope polytope_from_json(const json & j)
{
  Eigen::MatrixXd T = matrix_from_json(j.at("T"));
  Eigen::VectorXd d = vector_from_json(j.at("d"));
  return {std::move(T), std::move(d)};
}

inline json read_json(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) { throw Error(ErrorKind::InvalidArgument, "cannot open " + path.string()); }
  return json::parse(in);
}

inline void write_text(const std::filesystem::path & path, const std::string & text)
{
  if (path.has_parent_path()) { std::filesystem::create_directories(path.parent_path()); }
  std::ofstream out(path);
  if (!out) { throw Error(ErrorKind::InvalidArgument, "cannot write " + path.string()); }
  out << text;
}

inline Polytope read_polytope(const std::filesystem::path & path) { return polytope_from_json(read_json(path)); }

}  // namespace rmpc::io
