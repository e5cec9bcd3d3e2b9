#ifndef ECGI_CONFIG_HPP
#define ECGI_CONFIG_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ecgi/inverse_solver.hpp"
#include "ecgi/postprocess.hpp"
#include "ecgi/propagation.hpp"

namespace ecgi {

/// Everything a run needs: the scenario plus the inverse and post-processing
/// settings, read from one JSON or TOML document.
struct RunConfig {
    ScenarioConfig scenario;
    InverseConfig inverse;
    PostprocessConfig postprocess;

    void validate() const;
};

/// Parse a config document; the format is chosen by file extension
/// (.json, or .toml for the TOML subset below). Unknown keys are errors.
RunConfig load_run_config(const std::string& path);

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);

/// Minimal TOML reader covering what the scenario files use: comments,
/// [section] / [section.sub] headers, [[array-of-tables]], and scalar or flat
/// array values (strings, booleans, integers, floats). Returns the equivalent
/// JSON document.
nlohmann::json toml_subset_to_json(const std::string& text);

/// FNV-1a over the canonical JSON dump; keys the transfer cache and manifest.
std::uint64_t config_hash(const RunConfig& config);
std::uint64_t fnv1a_hash(const std::string& data);

} // namespace ecgi

#endif
