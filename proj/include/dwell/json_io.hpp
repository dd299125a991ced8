#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "dwell/matrix_core.hpp"

namespace dwell::json_io {

using nlohmann::json;

/// Row-major nested array -> matrix. `where` is the field path used in
/// ParseError messages.
Mat to_mat(const json& j, const std::string& where);
json from_mat(const Mat& m);

/// Rejects keys outside `allowed`.
void require_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where);

json parse_text(const std::string& text, const std::string& where);
std::string read_file(const std::string& path);

}  // namespace dwell::json_io
