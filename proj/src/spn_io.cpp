#include "topospn/spn_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace topospn {

using nlohmann::json;

std::string format_hex_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_hex_double(const std::string& text) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0' || errno == ERANGE)
    throw Error(ErrorCode::ParseError, "bad floating-point literal '" + text + "'");
  return x;
}

json network_to_json(const SpnNetwork& net) {
  json doc;
  doc["format"] = "topospn-network";
  doc["version"] = 1;
  doc["validation"] = net.policy() == ValidationPolicy::Strict ? "strict" : "permissive";
  json vars = json::array();
  for (const auto& v : net.variables()) vars.push_back({{"id", v.id}, {"cardinality", v.cardinality}});
  doc["variables"] = std::move(vars);
  json sets = json::array();
  for (WeightSetId s = 0; s < net.num_weight_sets(); ++s) {
    json set = json::array();
    for (double w : net.weights(s)) set.push_back(format_hex_double(w));
    sets.push_back(std::move(set));
  }
  doc["weight_sets"] = std::move(sets);
  json nodes = json::array();
  for (NodeId id = 0; id < net.num_nodes(); ++id) {
    json n;
    n["id"] = id;
    n["kind"] = to_string(net.kind(id));
    switch (net.kind(id)) {
      case NodeKind::Sum:
        n["weight_set"] = net.weight_set(id);
        [[fallthrough]];
      case NodeKind::Product:
      case NodeKind::Max: {
        const auto ch = net.children(id);
        n["children"] = std::vector<NodeId>(ch.begin(), ch.end());
        break;
      }
      case NodeKind::Indicator:
        n["var"] = net.var(id);
        n["value"] = net.value(id);
        break;
      case NodeKind::Constant:
        break;
    }
    nodes.push_back(std::move(n));
  }
  doc["nodes"] = std::move(nodes);
  doc["root"] = net.root();
  return doc;
}

namespace {

NodeKind parse_kind(const std::string& s) {
  if (s == "sum") return NodeKind::Sum;
  if (s == "product") return NodeKind::Product;
  if (s == "max") return NodeKind::Max;
  if (s == "indicator") return NodeKind::Indicator;
  if (s == "constant") return NodeKind::Constant;
  throw Error(ErrorCode::ParseError, "unknown node kind '" + s + "'");
}

}  // namespace

SpnNetwork network_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string{}) != "topospn-network")
      throw Error(ErrorCode::ParseError, "not a topospn network document");
    std::vector<VariableSpec> vars;
    for (const auto& v : doc.at("variables")) vars.push_back({v.at("id").get<VarId>(), v.at("cardinality").get<std::uint32_t>()});
    std::vector<std::vector<double>> sets;
    for (const auto& set : doc.at("weight_sets")) {
      auto& out = sets.emplace_back();
      for (const auto& w : set) out.push_back(parse_hex_double(w.get<std::string>()));
    }
    std::vector<Node> nodes;
    for (const auto& n : doc.at("nodes")) {
      if (n.at("id").get<NodeId>() != nodes.size()) throw Error(ErrorCode::ParseError, "node ids must be dense and ordered");
      Node node;
      node.kind = parse_kind(n.at("kind").get<std::string>());
      if (n.contains("children")) node.children = n.at("children").get<std::vector<NodeId>>();
      if (node.kind == NodeKind::Sum) node.weight_set = n.at("weight_set").get<WeightSetId>();
      if (node.kind == NodeKind::Indicator) {
        node.var = n.at("var").get<VarId>();
        node.value = n.at("value").get<std::uint32_t>();
      }
      nodes.push_back(std::move(node));
    }
    const auto policy =
        doc.value("validation", std::string{"strict"}) == "permissive" ? ValidationPolicy::Permissive : ValidationPolicy::Strict;
    return build_network(std::move(vars), std::move(nodes), doc.at("root").get<NodeId>(), std::move(sets), policy);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_network(const SpnNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, network_to_json(net).dump(1) + "\n");
}

SpnNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace topospn
