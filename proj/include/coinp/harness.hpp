#pragma once

#include "coinp/cit.hpp"
#include "coinp/learners.hpp"
#include "coinp/scenarios.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coinp {

struct ScenarioTemplate {
    ScenarioId id = ScenarioId::dist3;
    ScenarioOptions options;
    std::string name; // label in records; defaults to the id

    [[nodiscard]] std::string label() const { return name.empty() ? to_string(id) : name; }
};

struct ExperimentGrid {
    std::vector<ScenarioTemplate> scenarios;
    std::vector<double> beta_s_values;
    std::vector<std::size_t> n_values;
    std::vector<Method> methods;
    std::vector<LearnerSpec> learners;
    std::size_t replications = 200;
    std::size_t b = 100;
    double alpha = 0.05;
    std::uint64_t master_seed = 0;
    double holdout_fraction = kDefaultHoldoutFraction;
    bool smoothed_pvalue = false;
    // when false wall_time_ms is written as 0 so output files are byte-reproducible
    bool record_timing = true;

    void validate() const;
    [[nodiscard]] std::size_t cell_count() const;
};

enum class RecordStatus { ok, failed };

struct ReplicationRecord {
    std::string scenario;
    double beta_s = 0.0;
    std::size_t n = 0;
    std::string method;
    std::string learner;
    std::size_t replication = 0;
    double p_value = 0.0; // NaN when status is failed
    double wall_time_ms = 0.0;
    std::size_t fit_count = 0;
    RecordStatus status = RecordStatus::ok;

    // bitwise on every field, NaN p-values comparing equal
    friend bool operator==(const ReplicationRecord& a, const ReplicationRecord& b);
};

// Every field except wall_time_ms.
bool same_outcome(const ReplicationRecord& a, const ReplicationRecord& b);
bool same_outcomes(const std::vector<ReplicationRecord>& a, const std::vector<ReplicationRecord>& b);

// Thrown when more than 5% of some cell's replications failed. Carries all records.
class GridAborted : public std::runtime_error {
public:
    GridAborted(const std::string& what, std::vector<ReplicationRecord> records)
        : std::runtime_error(what), records_(std::move(records)) { }
    [[nodiscard]] const std::vector<ReplicationRecord>& records() const noexcept { return records_; }

private:
    std::vector<ReplicationRecord> records_;
};

struct CellProgress {
    std::string scenario;
    double beta_s;
    std::size_t n;
    std::string method;
    std::string learner;
    std::size_t n_ok;
    std::size_t n_failed;
    double power;
};

using ProgressCallback = std::function<void(const CellProgress&)>;
// receives "cell coordinates / replication: message" for each failed replication
using FailureCallback = std::function<void(const std::string&)>;

struct RunOptions {
    std::size_t workers = 1;
    ProgressCallback on_cell_done;
    FailureCallback on_failure;
};

// One record per (cell, replication), ordered by grid position then replication.
// Output does not depend on the worker count.
std::vector<ReplicationRecord> run_grid(const ExperimentGrid& grid, const RunOptions& options = {});
std::vector<ReplicationRecord> run_grid(const ExperimentGrid& grid, std::size_t workers);

// Seeds of one replication. Data (generation and split) depend on the scenario,
// beta_s, n and replication only, so methods and learners see identical data.
struct ReplicationSeeds {
    std::uint64_t data;
    std::uint64_t split;
    std::uint64_t test;
    std::uint64_t learner;
};
ReplicationSeeds replication_seeds(std::uint64_t master_seed, const std::string& scenario, double beta_s,
                                   std::size_t n, const std::string& method, const std::string& learner,
                                   std::size_t replication);

// Right-continuous step function at the sorted unique values.
std::vector<std::pair<double, double>> empirical_cdf(std::span<const double> pvalues);

// sup |F_m(x) - x| over [0, 1]
double ks_uniformity(std::span<const double> pvalues);

// fraction of p-values <= alpha
double power_estimate(std::span<const double> pvalues, double alpha);

inline constexpr const char* kRecordsHeader
    = "scenario,beta_s,n,method,learner,replication,p_value,wall_time_ms,fit_count,status";
inline constexpr const char* kSummaryHeader
    = "scenario,beta_s,n,method,learner,power,ks_stat,mean_wall_time_ms,n_ok,n_failed";

void write_records(const std::vector<ReplicationRecord>& records, const std::filesystem::path& path);
std::vector<ReplicationRecord> read_records(const std::filesystem::path& path);

// Per cell: a CDF step file plus one summary row. Returns the files written
// (summary first).
std::vector<std::filesystem::path> emit_report(const std::vector<ReplicationRecord>& records,
                                               const std::filesystem::path& out_dir, double alpha = 0.05);

std::string cdf_file_name(const ReplicationRecord& cell);

} // namespace coinp
