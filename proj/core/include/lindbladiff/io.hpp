#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "lindbladiff/linalg.hpp"

// JSON literals for matrices and operators.
//   dense:  [[[re, im], [re, im], ...], ...]            (array of rows of [re, im] pairs)
//   sparse: {"rows": r, "cols": c, "triplets": [[i, j, re, im], ...]}
// Parse errors are ConfigError carrying a JSON pointer rooted at `path`.
namespace lindbladiff::io {

CMatrix matrix_from_json(const nlohmann::json& j, const std::string& path = "");
CSparse sparse_from_json(const nlohmann::json& j, const std::string& path = "");
/// Array literal -> dense, object literal -> sparse.
Operator operator_from_json(const nlohmann::json& j, const std::string& path = "");

nlohmann::json to_json(const CMatrix& m);
nlohmann::json to_json(const CSparse& m);
nlohmann::json to_json(const Operator& op);

}  // namespace lindbladiff::io
