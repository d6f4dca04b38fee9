#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pgs/experiment.hpp"

namespace pgs {

// Flat key=value config with section prefixes, e.g. agent.gamma=0.99.
// Blank lines and lines starting with '#' are ignored. Lists are comma separated.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

// Throws InvalidArgument on an unknown key or unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();

// Every key, sorted, including the ones excluded from the hash.
std::string render_config(const RunConfig& cfg);

std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);

}  // namespace pgs
