#include "eot/json_format.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace eot {

namespace {

void write(const nlohmann::json& doc, int indent, int depth, std::string& out) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (doc.type()) {
    case nlohmann::json::value_t::object: {
      if (doc.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += nlohmann::json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        write(it.value(), indent, depth + 1, out);
      }
      newline(depth);
      out += '}';
      return;
    }
    case nlohmann::json::value_t::array: {
      if (doc.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& item : doc) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        write(item, indent, depth + 1, out);
      }
      newline(depth);
      out += ']';
      return;
    }
    case nlohmann::json::value_t::number_float: {
      const double x = doc.get<double>();
      if (!std::isfinite(x)) {
        out += "null";
        return;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out += buf;
      return;
    }
    default:
      out += doc.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::json& doc, int indent) {
  std::string out;
  write(doc, indent, 0, out);
  return out;
}

std::string short_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace eot
