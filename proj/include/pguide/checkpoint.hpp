#pragma once

#include <filesystem>

#include "json.hpp"
#include "pguide/flow.hpp"
#include "pguide/prior.hpp"

namespace pguide {

inline constexpr const char* kPriorMagic = "PGUIDE-PRIOR-v1";
inline constexpr const char* kFlowMagic = "PGUIDE-FLOW-v1";

// Checkpoints are JSON documents:
//
//   PGUIDE-PRIOR-v1: {"magic", "num_classes", "dim", "variance_mode",
//                     "mu": {"rows", "cols", "data"}, "log_sigma": {...}, "config"}
//   PGUIDE-FLOW-v1:  {"magic", "net": {"dim", "num_classes", "embed_dim",
//                     "fourier_pairs", "hidden"}, "params": [{"name", "rows",
//                     "cols", "data"}, ...], "config"}
//
// "data" is row-major. Doubles are written in shortest round-trip form, so a
// save/load cycle is exact. "config" echoes the run configuration.

nlohmann::json tensor_to_json(const Tensor2& t);
Tensor2 tensor_from_json(const nlohmann::json& j);

nlohmann::json prior_to_json(const PriorModel& model, const nlohmann::json& config_echo);
PriorModel prior_from_json(const nlohmann::json& j);

nlohmann::json flow_to_json(const VelocityNet& net, const nlohmann::json& config_echo);
VelocityNet flow_from_json(const nlohmann::json& j);

void save_prior(const std::filesystem::path& path, const PriorModel& model,
                const nlohmann::json& config_echo = nullptr);
PriorModel load_prior(const std::filesystem::path& path);

void save_flow(const std::filesystem::path& path, const VelocityNet& net,
               const nlohmann::json& config_echo = nullptr);
VelocityNet load_flow(const std::filesystem::path& path);

/// Parses a JSON file, mapping IO and syntax failures to IoError/FormatError
/// messages that name the file.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace pguide
