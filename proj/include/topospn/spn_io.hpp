#pragma once

// JSON encoding of networks. Weights are written as C99 hex-float strings
// ("0x1.3333333333333p-2") so a save/load round trip is bit-exact.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "topospn/spn.hpp"

namespace topospn {

std::string format_hex_double(double x);
double parse_hex_double(const std::string& text);

nlohmann::json network_to_json(const SpnNetwork& net);
SpnNetwork network_from_json(const nlohmann::json& doc);

void save_network(const SpnNetwork& net, const std::filesystem::path& path);
SpnNetwork load_network(const std::filesystem::path& path);

// Writes `contents` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace topospn
