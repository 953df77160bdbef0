// SPDX-License-Identifier: Apache-2.0

#include "spiel/memory_report.hpp"

#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "spiel/error.hpp"

namespace spiel {

const char* to_string(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::kPersistent:
      return "persistent";
    case ComponentKind::kTransient:
      return "transient";
    case ComponentKind::kInstrumentation:
      return "instrumentation";
  }
  return "?";
}

namespace {

ComponentKind parse_kind(const std::string& s) {
  if (s == "persistent") return ComponentKind::kPersistent;
  if (s == "transient") return ComponentKind::kTransient;
  if (s == "instrumentation") return ComponentKind::kInstrumentation;
  throw FormatError("unknown memory component kind '" + s + "'");
}

}  // namespace

uint64_t MemoryReport::persistent_total() const {
  uint64_t n = 0;
  for (const auto& c : components) {
    if (c.kind == ComponentKind::kPersistent) n += c.scalars;
  }
  return n;
}

uint64_t MemoryReport::optimizer_total() const {
  uint64_t n = 0;
  for (const auto& c : components) {
    if (c.kind == ComponentKind::kPersistent && c.optimizer) n += c.scalars;
  }
  return n;
}

std::vector<std::string> MemoryReport::flagged() const {
  std::vector<std::string> out;
  for (const auto& c : components) {
    if (c.kind == ComponentKind::kPersistent && d_theta > 0 && c.scalars >= d_theta) {
      out.push_back(c.name);
    }
  }
  return out;
}

std::string MemoryReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["d_theta"] = d_theta;
  j["d_phi"] = d_phi;
  j["sum_rows_cols"] = sum_rows_cols;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : components) {
    nlohmann::ordered_json e;
    e["name"] = c.name;
    e["scalars"] = c.scalars;
    e["kind"] = to_string(c.kind);
    e["optimizer"] = c.optimizer;
    arr.push_back(std::move(e));
  }
  j["components"] = std::move(arr);
  j["persistent_total"] = persistent_total();
  j["optimizer_total"] = optimizer_total();
  j["bound"] = bound();
  j["within_bound"] = within_bound();
  j["flagged"] = flagged();
  return j.dump(2) + "\n";
}

MemoryReport MemoryReport::from_json(const std::string& text) {
  MemoryReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.method = j.at("method").get<std::string>();
    r.d_theta = j.at("d_theta").get<uint64_t>();
    r.d_phi = j.at("d_phi").get<uint64_t>();
    r.sum_rows_cols = j.at("sum_rows_cols").get<uint64_t>();
    for (const auto& e : j.at("components")) {
      MemoryComponent c;
      c.name = e.at("name").get<std::string>();
      c.scalars = e.at("scalars").get<uint64_t>();
      c.kind = parse_kind(e.at("kind").get<std::string>());
      c.optimizer = e.at("optimizer").get<bool>();
      r.components.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed memory report: ") + e.what());
  }
  return r;
}

std::string MemoryReport::table() const {
  std::ostringstream o;
  o << "method: " << method << "  d_theta: " << d_theta << "  d_phi: " << d_phi
    << "  sum(rows+cols): " << sum_rows_cols << '\n';
  o << std::left << std::setw(38) << "component" << std::setw(17) << "kind" << std::right
    << std::setw(12) << "scalars" << '\n';
  for (const auto& c : components) {
    o << std::left << std::setw(38) << c.name << std::setw(17) << to_string(c.kind) << std::right
      << std::setw(12) << c.scalars << (c.optimizer ? "  (optimizer)" : "") << '\n';
  }
  o << "persistent total: " << persistent_total() << "  optimizer: " << optimizer_total()
    << "  bound 6*d_phi+sum(rows+cols): " << bound() << "  -> "
    << (within_bound() ? "within bound" : "EXCEEDS bound") << '\n';
  const auto flags = flagged();
  for (const auto& f : flags) o << "FLAG: " << f << " grows with d_theta (O(d_theta) state)\n";
  if (flags.empty()) o << "no component scales with d_theta\n";
  return o.str();
}

}  // namespace spiel
