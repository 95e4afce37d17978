#include "lindbladiff/io.hpp"

#include <cmath>
#include <vector>

#include "lindbladiff/errors.hpp"

namespace lindbladiff::io {
namespace {

using nlohmann::json;

double finite_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "non-finite value");
  return v;
}

std::size_t index_value(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

Complex complex_pair(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path, "expected [re, im]");
  return {finite_number(j[0], path + "/0"), finite_number(j[1], path + "/1")};
}

}  // namespace

CMatrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of rows");
  const std::size_t rows = j.size();
  if (!j[0].is_array()) throw ConfigError(path + "/0", "expected a row array");
  const std::size_t cols = j[0].size();
  std::vector<Complex> data;
  data.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_path = path + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].size() != cols) throw ConfigError(row_path, "ragged row");
    for (std::size_t k = 0; k < cols; ++k) data.push_back(complex_pair(j[i][k], row_path + "/" + std::to_string(k)));
  }
  return CMatrix(rows, cols, std::move(data));
}

CSparse sparse_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected {rows, cols, triplets}");
  for (const char* key : {"rows", "cols", "triplets"}) {
    if (!j.contains(key)) throw ConfigError(path + "/" + key, "missing field");
  }
  const std::size_t rows = index_value(j["rows"], path + "/rows");
  const std::size_t cols = index_value(j["cols"], path + "/cols");
  const json& list = j["triplets"];
  if (!list.is_array()) throw ConfigError(path + "/triplets", "expected an array");
  std::vector<Triplet> triplets;
  triplets.reserve(list.size());
  for (std::size_t k = 0; k < list.size(); ++k) {
    const std::string entry = path + "/triplets/" + std::to_string(k);
    const json& t = list[k];
    if (!t.is_array() || t.size() != 4) throw ConfigError(entry, "expected [i, j, re, im]");
    const std::size_t r = index_value(t[0], entry + "/0");
    const std::size_t c = index_value(t[1], entry + "/1");
    if (r >= rows || c >= cols) throw ConfigError(entry, "index outside declared shape");
    triplets.push_back({r, c, Complex{finite_number(t[2], entry + "/2"), finite_number(t[3], entry + "/3")}});
  }
  return CSparse(rows, cols, std::move(triplets));
}

Operator operator_from_json(const json& j, const std::string& path) {
  if (j.is_object()) return sparse_from_json(j, path);
  return matrix_from_json(j, path);
}

json to_json(const CMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < m.cols(); ++k) row.push_back({m(i, k).real(), m(i, k).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const CSparse& m) {
  json triplets = json::array();
  for (const auto& t : m.triplets()) triplets.push_back({t.row, t.col, t.value.real(), t.value.imag()});
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", std::move(triplets)}};
}

json to_json(const Operator& op) {
  return op.visit([](const auto& m) { return to_json(m); });
}

}  // namespace lindbladiff::io
