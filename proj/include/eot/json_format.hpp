#pragma once

#include <string>

#include <json.hpp>

namespace eot {

/// Serializes with every double at 17 significant digits so values
/// round-trip exactly. Non-finite doubles become null.
std::string dump_json(const nlohmann::json& doc, int indent = 2);

/// Shortest decimal text that parses back to `x`.
std::string short_double(double x);

}  // namespace eot
