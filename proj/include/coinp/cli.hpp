#pragma once

#include "coinp/config.hpp"
#include "coinp/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coinp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Overrides shared by the subcommands; unset fields leave the config value.
struct CliOverrides {
    std::optional<std::filesystem::path> config_path;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::string> label;
};

// Config file (or profile defaults) with the flag overrides applied.
RunConfig resolve_config(const CliOverrides& flags);

int cmd_simulate(const CliOverrides& flags, std::ostream& log);
int cmd_analyze(const std::filesystem::path& csv_path, const CliOverrides& flags, std::ostream& log);
int cmd_report(const std::filesystem::path& records_path, const CliOverrides& flags, std::ostream& log);

// One row of the analyze matrix; nullopt marks a failed cell.
struct PValueRow {
    std::string learner;
    std::string method;
    std::vector<std::optional<double>> p_values;
};

// Every (learner, method) pair against every single-feature S.
// One shared train/holdout split, seeded from cfg.seed.
std::vector<PValueRow> analyze_dataset(const Dataset& data, const RunConfig& cfg, std::size_t workers,
                                       std::ostream* log = nullptr);

void write_pvalue_matrix(const std::vector<PValueRow>& rows, const std::vector<std::string>& features,
                         const std::filesystem::path& path);

int run_cli(int argc, char** argv);

} // namespace coinp
