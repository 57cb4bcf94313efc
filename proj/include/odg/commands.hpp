#pragma once

#include <string>

#include "odg/config.hpp"

namespace odg {

// Command bodies behind the CLI; each echoes the effective config into its
// output directory and returns the primary artifact path.

std::string cmd_generate_open(const RunConfig& cfg);

std::string cmd_train(const RunConfig& cfg, const std::string& target = "",
                      const std::string& resume_path = "");

std::string cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& target = "");

std::string cmd_lodo(const RunConfig& cfg);

std::string cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& baseline_checkpoint_path = "");

}  // namespace odg
