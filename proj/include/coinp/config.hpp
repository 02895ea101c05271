#pragma once

#include "coinp/cit.hpp"
#include "coinp/dataset.hpp"
#include "coinp/harness.hpp"
#include "coinp/learners.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coinp {

// Invalid run configuration; the message names the offending key path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultAnalyzeSeed = 20200101;

struct AnalyzeConfig {
    std::string label;
    std::vector<Method> methods{Method::coinp, Method::approx_coinp, Method::approx_cpi};
    std::vector<LearnerSpec> learners;
    std::uint64_t seed = kDefaultAnalyzeSeed;
    // when unset, the diamonds orderings apply to whichever of cut/color/clarity are present
    std::optional<CategoryEncoding> encoding;
    std::vector<std::string> exclude_columns;
};

// Resolved configuration: profile defaults, then file keys, then CLI flags.
struct RunConfig {
    std::string profile = "desk";
    std::filesystem::path output_dir = "coinp_out";
    ExperimentGrid grid;
    ForestParams forest;
    MlpParams mlp;
    AnalyzeConfig analyze;
};

std::vector<std::string> profile_names();

// Defaults of a named profile (desk, paper, custom).
RunConfig profile_defaults(const std::string& profile);

// Parses a config document. A manifest written by a previous run is accepted
// too (its embedded config is used). Unknown keys are errors.
RunConfig parse_run_config(const nlohmann::json& doc, const std::optional<std::string>& profile_override = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::optional<std::string>& profile_override = {});

// Fully explicit document that parse_run_config maps back to the same RunConfig.
nlohmann::json to_json(const RunConfig& cfg);

std::string tool_version();

} // namespace coinp
