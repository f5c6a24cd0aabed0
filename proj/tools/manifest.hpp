#pragma once

#include <boost/version.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgvae/error.hpp"
#include "dgvae/version.hpp"

namespace dgvae::cli {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_hash(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return "fnv1a64:" + hex64(fnv1a(ss.str()));
}

// Effective option values of one subcommand as key=value lines (defaults
// included, --config excluded), in declaration order.
inline std::vector<std::string> effective_config(const CLI::App& sub) {
  std::vector<std::string> lines;
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->get_expected_max() == 0) {
      value = opt->count() ? "true" : "false";
    } else if (opt->count()) {
      const auto& res = opt->results();
      for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    lines.push_back(name + "=" + value);
  }
  return lines;
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::string> config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::string> outputs;

  nlohmann::json json() const {
    std::string joined;
    for (const auto& l : config) joined += l + "\n";
    nlohmann::json j{{"tool", "dgvae"},
                     {"command", command},
                     {"seed", seed},
                     {"config", config},
                     {"config_hash", "fnv1a64:" + hex64(fnv1a(joined))},
                     {"outputs", outputs}};
    j["inputs"] = nlohmann::json::object();
    for (const auto& p : inputs) j["inputs"][p.filename().string()] = file_hash(p);
    j["versions"] = {{"dgvae", DGVAE_VERSION},
                     {"cli11", CLI11_VERSION},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"boost", BOOST_LIB_VERSION},
                     {"compiler", __VERSION__}};
    return j;
  }

  void write(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << json().dump(1) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
};

}  // namespace dgvae::cli
