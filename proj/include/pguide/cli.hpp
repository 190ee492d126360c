#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pguide::cli {

enum ExitCode : int { kSuccess = 0, kGateFailed = 1, kConfigError = 2 };

struct Overrides {
    std::optional<std::filesystem::path> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    std::vector<std::string> sets;  // "dotted.key=value"
};

/// Every recognized key with its default value.
nlohmann::json default_config();

/// Defaults, then the config file (merge-patch), then --set, --seed, --out.
/// Unknown keys are rejected with ConfigError.
nlohmann::json resolve_config(const Overrides& o);

/// Applies one "a.b.c=value" override; value is parsed as JSON when it parses,
/// otherwise taken as a string.
void apply_set(nlohmann::json& cfg, const std::string& assignment);

/// 64-bit FNV-1a of the canonical config dump, excluding "out".
std::uint64_t config_hash(const nlohmann::json& cfg);
/// out / "<command>-<16 hex digits of config_hash>", created if missing.
std::filesystem::path run_directory(const nlohmann::json& cfg, const std::string& command);

struct CommandResult {
    int exit_code = kSuccess;
    std::filesystem::path run_dir;
    nlohmann::json report;  // metrics or verification document
};

CommandResult cmd_train_prior(const nlohmann::json& cfg);
CommandResult cmd_train_flow(const nlohmann::json& cfg);
CommandResult cmd_sample(const nlohmann::json& cfg);
CommandResult cmd_verify(const nlohmann::json& cfg);
CommandResult cmd_demo_distcfg(const nlohmann::json& cfg);

/// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace pguide::cli
