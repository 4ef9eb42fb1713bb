#pragma once

// File-based run configuration. Every field defaults to the paper preset;
// unknown keys are rejected so typos cannot silently fall back to defaults.

#include <string>

#include "dspk/training.hpp"

namespace dspk {

struct RunConfig {
  train::TrainConfig train;
  std::string out_dir;
  std::string low_dir;   // contains manifest.txt
  std::string high_dir;  // contains manifest.txt
};

RunConfig parse_run_config_text(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace dspk
