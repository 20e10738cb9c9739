#pragma once

#include <string>

#include "mixlrt/experiment.hpp"

namespace mixlrt {

/// Parses a JSON experiment config; throws ParseError with the field and line on failure.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig read_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);
void write_config(const ExperimentConfig& config, const std::string& path);

}  // namespace mixlrt
