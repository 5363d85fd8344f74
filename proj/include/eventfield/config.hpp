#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "eventfield/error.hpp"
#include "eventfield/pipeline.hpp"
#include "eventfield/render.hpp"
#include "eventfield/simulator.hpp"
#include "eventfield/training.hpp"

namespace evf::config {

/// Malformed or unknown configuration; maps to exit code 2 in the CLI.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

using nlohmann::json;

/// Loads a JSON file; a missing or unparsable file raises ConfigError naming the path.
json load_file(const std::filesystem::path& path);

// Each *_from_json starts from `base` and overrides only the keys present.
// Unknown keys raise ConfigError with the full key path.
EncodingConfig encoding_from_json(const json& j, EncodingConfig base = {}, const std::string& ctx = "encoding");
FieldArchitecture architecture_from_json(const json& j, FieldArchitecture base = {},
                                         const std::string& ctx = "architecture");
CylinderBounds bounds_from_json(const json& j, CylinderBounds base = {}, const std::string& ctx = "bounds");
RenderSettings render_from_json(const json& j, RenderSettings base = {}, const std::string& ctx = "render");
SimConfig sim_from_json(const json& j, SimConfig base = {}, const std::string& ctx = "sim");
TrainConfig train_from_json(const json& j, TrainConfig base = {}, const std::string& ctx = "train");
ToyConfig toy_from_json(const json& j, ToyConfig base = {}, const std::string& ctx = "toy");

json to_json(const EncodingConfig& c);
json to_json(const FieldArchitecture& c);
json to_json(const CylinderBounds& c);
json to_json(const RenderSettings& c);
json to_json(const SimConfig& c);
json to_json(const TrainConfig& c);
json to_json(const ToyConfig& c);

/// Settings tuned for the bundled 64x64 toy scene on one CPU core.
ToyConfig desk_toy_config();

}  // namespace evf::config
