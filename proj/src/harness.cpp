#include "coinp/harness.hpp"

#include "coinp/rng.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace coinp {

void ExperimentGrid::validate() const
{
    if (scenarios.empty() || beta_s_values.empty() || n_values.empty() || methods.empty() || learners.empty())
        throw std::invalid_argument("experiment grid has an empty dimension");
    if (replications < 1)
        throw std::invalid_argument("replications must be >= 1");
    if (b < 1)
        throw std::invalid_argument("b must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("holdout_fraction must lie in (0, 1)");
    for (double beta : beta_s_values)
        if (!std::isfinite(beta))
            throw std::invalid_argument("beta_s values must be finite");
    for (auto n : n_values)
        if (n < 4)
            throw std::invalid_argument("sample sizes must be >= 4 so the holdout split is possible");
    for (const auto& l : learners) {
        l.forest.validate();
        l.mlp.validate();
    }
    auto unique_labels = [](auto labels) {
        std::sort(labels.begin(), labels.end());
        return std::adjacent_find(labels.begin(), labels.end()) == labels.end();
    };
    std::vector<std::string> names;
    for (const auto& s : scenarios)
        names.push_back(s.label());
    if (!unique_labels(names))
        throw std::invalid_argument("scenario labels must be unique");
    names.clear();
    for (const auto& l : learners)
        names.push_back(l.label());
    if (!unique_labels(names))
        throw std::invalid_argument("learner labels must be unique");
}

std::size_t ExperimentGrid::cell_count() const
{
    return scenarios.size() * beta_s_values.size() * n_values.size() * methods.size() * learners.size();
}

namespace {

bool same_real(double a, double b)
{
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b) || (std::isnan(a) && std::isnan(b));
}

} // namespace

bool same_outcome(const ReplicationRecord& a, const ReplicationRecord& b)
{
    return a.scenario == b.scenario && same_real(a.beta_s, b.beta_s) && a.n == b.n && a.method == b.method
        && a.learner == b.learner && a.replication == b.replication && same_real(a.p_value, b.p_value)
        && a.fit_count == b.fit_count && a.status == b.status;
}

bool operator==(const ReplicationRecord& a, const ReplicationRecord& b)
{
    return same_outcome(a, b) && same_real(a.wall_time_ms, b.wall_time_ms);
}

bool same_outcomes(const std::vector<ReplicationRecord>& a, const std::vector<ReplicationRecord>& b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), same_outcome);
}

ReplicationSeeds replication_seeds(std::uint64_t master_seed, const std::string& scenario, double beta_s,
                                   std::size_t n, const std::string& method, const std::string& learner,
                                   std::size_t replication)
{
    std::uint64_t data = derive_seed(master_seed, hash_label(scenario));
    data = derive_seed(data, std::bit_cast<std::uint64_t>(beta_s));
    data = derive_seed(data, n);
    data = derive_seed(data, replication);
    std::uint64_t test = derive_seed(data, hash_label(method));
    test = derive_seed(test, hash_label(learner));
    return {derive_seed(data, 0), derive_seed(data, 1), test, derive_seed(test, 1)};
}

namespace {

struct Cell {
    const ScenarioTemplate* scenario;
    double beta_s;
    std::size_t n;
    Method method;
    const LearnerSpec* learner;
};

std::vector<Cell> enumerate_cells(const ExperimentGrid& grid)
{
    std::vector<Cell> cells;
    for (const auto& sc : grid.scenarios)
        for (double beta : grid.beta_s_values)
            for (auto n : grid.n_values)
                for (auto m : grid.methods)
                    for (const auto& l : grid.learners)
                        cells.push_back({&sc, beta, n, m, &l});
    return cells;
}

ReplicationRecord run_replication(const ExperimentGrid& grid, const Cell& cell, std::size_t rep,
                                  const FailureCallback& on_failure)
{
    ReplicationRecord rec;
    rec.scenario = cell.scenario->label();
    rec.beta_s = cell.beta_s;
    rec.n = cell.n;
    rec.method = to_string(cell.method);
    rec.learner = cell.learner->label();
    rec.replication = rep;

    const auto seeds = replication_seeds(grid.master_seed, rec.scenario, rec.beta_s, rec.n, rec.method, rec.learner,
                                         rep);
    try {
        ScenarioConfig sc{cell.scenario->id, cell.beta_s, cell.n, seeds.data, cell.scenario->options};
        auto generated = generate(sc);
        auto parts = split(generated.data, grid.holdout_fraction, seeds.split);
        auto learner = make_learner(*cell.learner, seeds.learner);
        TestConfig cfg;
        cfg.s = generated.s;
        cfg.b = grid.b;
        cfg.alpha = grid.alpha;
        cfg.seed = seeds.test;
        cfg.smoothed_pvalue = grid.smoothed_pvalue;

        const auto start = std::chrono::steady_clock::now();
        const auto result = run_test(cell.method, *learner, parts.train, parts.holdout, cfg);
        const auto stop = std::chrono::steady_clock::now();
        rec.p_value = result.p_value;
        rec.fit_count = result.fit_count;
        rec.wall_time_ms
            = grid.record_timing ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
        rec.status = RecordStatus::ok;
    } catch (const std::exception& e) {
        rec.p_value = std::numeric_limits<double>::quiet_NaN();
        rec.status = RecordStatus::failed;
        if (on_failure)
            on_failure(rec.scenario + "/" + format_real(rec.beta_s) + "/" + std::to_string(rec.n) + "/" + rec.method
                       + "/" + rec.learner + " replication " + std::to_string(rep) + ": " + e.what());
    }
    return rec;
}

} // namespace

std::vector<ReplicationRecord> run_grid(const ExperimentGrid& grid, const RunOptions& options)
{
    grid.validate();
    const auto cells = enumerate_cells(grid);
    const std::size_t reps = grid.replications;
    const std::size_t total = cells.size() * reps;
    std::vector<ReplicationRecord> records(total);

    std::vector<std::atomic<std::size_t>> remaining(cells.size());
    for (auto& r : remaining)
        r = reps;
    std::mutex callback_mutex;

    auto report_cell = [&](std::size_t c) {
        if (!options.on_cell_done)
            return;
        CellProgress progress{records[c * reps].scenario, records[c * reps].beta_s, records[c * reps].n,
                              records[c * reps].method, records[c * reps].learner, 0, 0, 0.0};
        std::vector<double> ok;
        for (std::size_t r = 0; r < reps; ++r) {
            const auto& rec = records[c * reps + r];
            if (rec.status == RecordStatus::ok) {
                ++progress.n_ok;
                ok.push_back(rec.p_value);
            } else {
                ++progress.n_failed;
            }
        }
        progress.power = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : power_estimate(ok, grid.alpha);
        std::lock_guard lock(callback_mutex);
        options.on_cell_done(progress);
    };
    FailureCallback on_failure;
    if (options.on_failure)
        on_failure = [&](const std::string& msg) {
            std::lock_guard lock(callback_mutex);
            options.on_failure(msg);
        };

    auto work = [&](std::size_t task) {
        const std::size_t c = task / reps;
        records[task] = run_replication(grid, cells[c], task % reps, on_failure);
        if (--remaining[c] == 0)
            report_cell(c);
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, total));
    if (workers == 1) {
        for (std::size_t t = 0; t < total; ++t)
            work(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < total; t = next++)
                    work(t);
            });
        for (auto& th : pool)
            th.join();
    }

    std::string failures;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::size_t failed = 0;
        for (std::size_t r = 0; r < reps; ++r)
            failed += records[c * reps + r].status == RecordStatus::failed;
        if (static_cast<double>(failed) > 0.05 * static_cast<double>(reps)) {
            const auto& rec = records[c * reps];
            failures += "\n  " + rec.scenario + "/" + format_real(rec.beta_s) + "/" + std::to_string(rec.n) + "/"
                + rec.method + "/" + rec.learner + ": " + std::to_string(failed) + " of " + std::to_string(reps)
                + " replications failed";
        }
    }
    if (!failures.empty())
        throw GridAborted("more than 5% of replications failed in:" + failures, std::move(records));
    return records;
}

std::vector<ReplicationRecord> run_grid(const ExperimentGrid& grid, std::size_t workers)
{
    RunOptions options;
    options.workers = workers;
    return run_grid(grid, options);
}

namespace {

void check_pvalues(std::span<const double> pvalues)
{
    if (pvalues.empty())
        throw std::invalid_argument("no p-values");
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("p-value " + format_real(p) + " outside [0, 1]");
}

} // namespace

std::vector<std::pair<double, double>> empirical_cdf(std::span<const double> pvalues)
{
    check_pvalues(pvalues);
    std::vector<double> sorted(pvalues.begin(), pvalues.end());
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    std::vector<std::pair<double, double>> steps;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i])
            continue;
        steps.emplace_back(sorted[i], static_cast<double>(i + 1) / m);
    }
    return steps;
}

double ks_uniformity(std::span<const double> pvalues)
{
    check_pvalues(pvalues);
    std::vector<double> sorted(pvalues.begin(), pvalues.end());
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double above = static_cast<double>(i + 1) / m - sorted[i];
        const double below = sorted[i] - static_cast<double>(i) / m;
        d = std::max({d, above, below});
    }
    return d;
}

double power_estimate(std::span<const double> pvalues, double alpha)
{
    check_pvalues(pvalues);
    const auto hits = std::count_if(pvalues.begin(), pvalues.end(), [alpha](double p) { return p <= alpha; });
    return static_cast<double>(hits) / static_cast<double>(pvalues.size());
}

void write_records(const std::vector<ReplicationRecord>& records, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << kRecordsHeader << '\n';
    for (const auto& r : records) {
        out << r.scenario << ',' << format_real(r.beta_s) << ',' << r.n << ',' << r.method << ',' << r.learner << ','
            << r.replication << ',' << format_real(r.p_value) << ',' << format_real(r.wall_time_ms) << ','
            << r.fit_count << ',' << (r.status == RecordStatus::ok ? "ok" : "failed") << '\n';
    }
    if (!out)
        throw std::runtime_error("write to '" + path.string() + "' failed");
}

namespace {

template <typename T>
T parse_field(const std::string& s, std::size_t line, const char* name)
{
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw std::runtime_error("records line " + std::to_string(line) + ": bad " + name + " '" + s + "'");
    return v;
}

} // namespace

std::vector<ReplicationRecord> read_records(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("'" + path.string() + "' is empty (missing header)");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kRecordsHeader)
        throw std::runtime_error("'" + path.string() + "' does not have the records header");

    std::vector<ReplicationRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (!line.empty() && line.back() == ',')
            f.emplace_back();
        if (f.size() != 10)
            throw std::runtime_error("records line " + std::to_string(line_no) + ": expected 10 fields, got "
                                     + std::to_string(f.size()));
        ReplicationRecord r;
        r.scenario = f[0];
        r.beta_s = parse_field<double>(f[1], line_no, "beta_s");
        r.n = parse_field<std::size_t>(f[2], line_no, "n");
        r.method = f[3];
        r.learner = f[4];
        r.replication = parse_field<std::size_t>(f[5], line_no, "replication");
        r.p_value = parse_field<double>(f[6], line_no, "p_value");
        r.wall_time_ms = parse_field<double>(f[7], line_no, "wall_time_ms");
        r.fit_count = parse_field<std::size_t>(f[8], line_no, "fit_count");
        if (f[9] == "ok")
            r.status = RecordStatus::ok;
        else if (f[9] == "failed")
            r.status = RecordStatus::failed;
        else
            throw std::runtime_error("records line " + std::to_string(line_no) + ": bad status '" + f[9] + "'");
        if (r.scenario.empty() || r.method.empty() || r.learner.empty())
            throw std::runtime_error("records line " + std::to_string(line_no) + ": empty grid coordinate");
        if (r.status == RecordStatus::ok && !(r.p_value >= 0.0 && r.p_value <= 1.0))
            throw std::runtime_error("records line " + std::to_string(line_no) + ": p_value outside [0, 1]");
        records.push_back(std::move(r));
    }
    return records;
}

std::string cdf_file_name(const ReplicationRecord& cell)
{
    return "cdf_" + cell.scenario + "_" + format_real(cell.beta_s) + "_" + std::to_string(cell.n) + "_" + cell.method
        + "_" + cell.learner + ".csv";
}

std::vector<std::filesystem::path> emit_report(const std::vector<ReplicationRecord>& records,
                                               const std::filesystem::path& out_dir, double alpha)
{
    if (records.empty())
        throw std::invalid_argument("no records to report");
    std::filesystem::create_directories(out_dir);

    auto same_cell = [](const ReplicationRecord& a, const ReplicationRecord& b) {
        return a.scenario == b.scenario && same_real(a.beta_s, b.beta_s) && a.n == b.n && a.method == b.method
            && a.learner == b.learner;
    };
    // cells in order of first appearance
    std::vector<std::vector<const ReplicationRecord*>> cells;
    for (const auto& r : records) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return same_cell(*c.front(), r); });
        if (it == cells.end())
            cells.push_back({&r});
        else
            it->push_back(&r);
    }

    std::vector<std::filesystem::path> written;
    const auto summary_path = out_dir / "summary.csv";
    std::ofstream summary(summary_path, std::ios::binary);
    if (!summary)
        throw std::runtime_error("cannot write '" + summary_path.string() + "'");
    summary << kSummaryHeader << '\n';
    written.push_back(summary_path);

    for (const auto& cell : cells) {
        std::vector<double> pvalues;
        double wall = 0.0;
        std::size_t failed = 0;
        for (const auto* r : cell) {
            if (r->status == RecordStatus::ok) {
                pvalues.push_back(r->p_value);
                wall += r->wall_time_ms;
            } else {
                ++failed;
            }
        }
        const auto& head = *cell.front();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double power = pvalues.empty() ? nan : power_estimate(pvalues, alpha);
        const double ks = pvalues.empty() ? nan : ks_uniformity(pvalues);
        const double mean_wall = pvalues.empty() ? nan : wall / static_cast<double>(pvalues.size());
        summary << head.scenario << ',' << format_real(head.beta_s) << ',' << head.n << ',' << head.method << ','
                << head.learner << ',' << format_real(power) << ',' << format_real(ks) << ','
                << format_real(mean_wall) << ',' << pvalues.size() << ',' << failed << '\n';

        const auto cdf_path = out_dir / cdf_file_name(head);
        std::ofstream cdf(cdf_path, std::ios::binary);
        if (!cdf)
            throw std::runtime_error("cannot write '" + cdf_path.string() + "'");
        cdf << "x,F\n";
        if (!pvalues.empty())
            for (const auto& [x, fx] : empirical_cdf(pvalues))
                cdf << format_real(x) << ',' << format_real(fx) << '\n';
        written.push_back(cdf_path);
    }
    if (!summary)
        throw std::runtime_error("write to '" + summary_path.string() + "' failed");
    return written;
}

} // namespace coinp
