#pragma once

// Command implementations behind the cocoafuse executable. Each command reads
// a JSON config, writes its artifacts under an output directory and returns a
// process exit code; failures are thrown as cocoafuse::Error.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cocoafuse/dataio.hpp"
#include "cocoafuse/error.hpp"

namespace cocoafuse {

struct CommandOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string output;
    bool allow_nonconverged = false;
    bool force = false;
};

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitConvergence = 4;
constexpr int kExitNumerical = 5;

int exit_code(ErrorKind kind);

constexpr double kRhatThreshold = 1.05;

int cmd_simulate(const CommandOptions& opts);
int cmd_fit(const CommandOptions& opts);
int cmd_evaluate(const CommandOptions& opts);
int cmd_tune(const CommandOptions& opts);
int cmd_select(const CommandOptions& opts);

nlohmann::json load_json_file(const std::filesystem::path& path);

/// Split policy from {"policy": ..., ...}: random_fraction, head_tail,
/// indices, head_random_tail_equispaced, random_subset, column.
Split split_from_json(const nlohmann::json& doc, const Table& raw);

}  // namespace cocoafuse
