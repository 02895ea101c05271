#include "coinp/cli.hpp"

#include "coinp/cit.hpp"
#include "coinp/harness.hpp"
#include "coinp/rng.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace coinp {

using nlohmann::json;

RunConfig resolve_config(const CliOverrides& flags)
{
    RunConfig cfg = flags.config_path ? load_run_config(*flags.config_path, flags.profile)
                                      : profile_defaults(flags.profile.value_or("desk"));
    if (flags.seed) {
        cfg.grid.master_seed = *flags.seed;
        cfg.analyze.seed = *flags.seed;
    }
    if (flags.out_dir)
        cfg.output_dir = *flags.out_dir;
    if (flags.label)
        cfg.analyze.label = *flags.label;
    return cfg;
}

namespace {

void write_manifest(const RunConfig& cfg, const json& command, const std::filesystem::path& path)
{
    const json doc{{"tool_version", tool_version()}, {"command", command}, {"config", to_json(cfg)}};
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << doc.dump(2) << '\n';
}

void ensure_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
}

std::string format_p(double p)
{
    std::ostringstream s;
    s.precision(4);
    s << p;
    return s.str();
}

} // namespace

int cmd_simulate(const CliOverrides& flags, std::ostream& log)
{
    RunConfig cfg;
    try {
        cfg = resolve_config(flags);
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        ensure_dir(cfg.output_dir);
        write_manifest(cfg, json{{"name", "simulate"}}, cfg.output_dir / "manifest.json");

        RunOptions options;
        options.workers = flags.workers.value_or(1);
        options.on_cell_done = [&log](const CellProgress& c) {
            log << "cell " << c.scenario << " beta_s=" << format_real(c.beta_s) << " n=" << c.n << ' ' << c.method
                << '/' << c.learner << ": ok=" << c.n_ok << " failed=" << c.n_failed
                << " power=" << format_p(c.power) << '\n';
        };
        options.on_failure = [&log](const std::string& msg) { log << "replication failed: " << msg << '\n'; };

        std::vector<ReplicationRecord> records;
        int status = kExitOk;
        try {
            records = run_grid(cfg.grid, options);
        } catch (const GridAborted& e) {
            log << "error: " << e.what() << '\n';
            records = e.records();
            status = kExitRuntime;
        }
        write_records(records, cfg.output_dir / "records.csv");
        emit_report(records, cfg.output_dir, cfg.grid.alpha);
        log << "wrote " << records.size() << " records to " << (cfg.output_dir / "records.csv").string() << '\n';
        return status;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

std::vector<PValueRow> analyze_dataset(const Dataset& data, const RunConfig& cfg, std::size_t workers,
                                       std::ostream* log)
{
    const auto& a = cfg.analyze;
    const std::uint64_t seed = a.seed;
    const auto parts = split(data, cfg.grid.holdout_fraction, derive_seed(seed, hash_label("split")));
    const auto& names = data.column_names();

    std::vector<PValueRow> rows;
    for (const auto& spec : a.learners) {
        const auto learner_seed = derive_seed(seed, hash_label("learner/" + spec.label()));
        const auto learner = make_learner(spec, learner_seed);
        for (auto method : a.methods) {
            PValueRow row{spec.label(), to_string(method), {}};
            for (std::size_t k = 0; k < data.cols(); ++k) {
                TestConfig tc;
                tc.s = FeatureSet{k};
                tc.b = cfg.grid.b;
                tc.alpha = cfg.grid.alpha;
                tc.smoothed_pvalue = cfg.grid.smoothed_pvalue;
                tc.workers = workers;
                tc.seed = derive_seed(seed, hash_label("test/" + spec.label() + "/" + to_string(method) + "/"
                                                       + names[k]));
                try {
                    const auto r = run_test(method, *learner, parts.train, parts.holdout, tc);
                    row.p_values.emplace_back(r.p_value);
                    if (log)
                        *log << "cell " << row.learner << '/' << row.method << " S=" << names[k]
                             << ": p=" << format_p(r.p_value) << '\n';
                } catch (const std::exception& e) {
                    row.p_values.emplace_back(std::nullopt);
                    if (log)
                        *log << "cell " << row.learner << '/' << row.method << " S=" << names[k]
                             << ": FAIL (" << e.what() << ")\n";
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_pvalue_matrix(const std::vector<PValueRow>& rows, const std::vector<std::string>& features,
                         const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "learner,method";
    for (const auto& f : features)
        out << ',' << f;
    out << '\n';
    for (const auto& row : rows) {
        out << row.learner << ',' << row.method;
        for (const auto& p : row.p_values)
            out << ',' << (p ? format_real(*p) : std::string("FAIL"));
        out << '\n';
    }
}

int cmd_analyze(const std::filesystem::path& csv_path, const CliOverrides& flags, std::ostream& log)
{
    RunConfig cfg;
    try {
        cfg = resolve_config(flags);
        if (cfg.analyze.label.empty())
            throw ConfigError("no label column: pass --label or set analyze.label");
        if (cfg.analyze.learners.empty() || cfg.analyze.methods.empty())
            throw ConfigError("analyze needs at least one learner and one method");
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        CsvOptions csv;
        csv.exclude_columns = cfg.analyze.exclude_columns;
        if (cfg.analyze.encoding) {
            csv.encoding = *cfg.analyze.encoding;
        } else {
            const auto header = read_csv_header(csv_path);
            for (const auto& [col, cats] : diamonds_encoding())
                if (std::find(header.begin(), header.end(), col) != header.end())
                    csv.encoding.emplace(col, cats);
        }
        const Dataset data = load_csv(csv_path, cfg.analyze.label, csv);
        log << "loaded " << data.rows() << " rows, " << data.cols() << " features from " << csv_path.string()
            << '\n';

        ensure_dir(cfg.output_dir);
        write_manifest(cfg,
                       json{{"name", "analyze"}, {"csv", csv_path.string()}, {"label", cfg.analyze.label}},
                       cfg.output_dir / "manifest.json");
        const auto rows = analyze_dataset(data, cfg, flags.workers.value_or(1), &log);
        const auto out = cfg.output_dir / "pvalues.csv";
        write_pvalue_matrix(rows, data.column_names(), out);
        log << "wrote " << out.string() << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_report(const std::filesystem::path& records_path, const CliOverrides& flags, std::ostream& log)
{
    try {
        const auto records = read_records(records_path);
        if (records.empty())
            throw std::runtime_error("'" + records_path.string() + "' holds no records");
        double alpha = 0.05;
        if (flags.config_path)
            alpha = load_run_config(*flags.config_path, flags.profile).grid.alpha;
        const auto out_dir = flags.out_dir.value_or(records_path.parent_path().empty()
                                                        ? std::filesystem::path(".")
                                                        : records_path.parent_path());
        ensure_dir(out_dir);
        const auto files = emit_report(records, out_dir, alpha);
        log << "wrote " << files.size() << " report files to " << out_dir.string() << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int run_cli(int argc, char** argv)
{
    CLI::App app{"Conditional independence testing by permutation of predictive risk (COINP) and baselines"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);

    CliOverrides flags;
    std::string config_path, profile, out_dir, label;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config (or a manifest.json from a previous run)")
            ->check(CLI::ExistingFile);
        sub->add_option("--profile", profile, "preset defaults: desk, paper or custom")
            ->check(CLI::IsMember(profile_names()));
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* simulate = app.add_subcommand("simulate", "run the simulation grid, write records, report and manifest");
    add_common(simulate);
    simulate->add_option("--workers", workers, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", seed, "master seed");

    std::string csv_path;
    auto* analyze = app.add_subcommand("analyze", "p-value matrix of every feature of a CSV data set");
    analyze->add_option("csv", csv_path, "input CSV with a header row")->required();
    add_common(analyze);
    analyze->add_option("--label", label, "label column name");
    analyze->add_option("--workers", workers, "threads for the COINP refits")->check(CLI::PositiveNumber);
    analyze->add_option("--seed", seed, "seed of the split, permutations and learners");

    std::string records_path;
    auto* report = app.add_subcommand("report", "summary and CDF files from a records CSV");
    report->add_option("records", records_path, "records CSV written by simulate")->required();
    report->add_option("--config", config_path, "run config supplying alpha")->check(CLI::ExistingFile);
    report->add_option("--out", out_dir, "output directory (default: next to the records file)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    auto* active = app.get_subcommands().front();
    if (!config_path.empty())
        flags.config_path = config_path;
    if (!profile.empty())
        flags.profile = profile;
    if (!out_dir.empty())
        flags.out_dir = out_dir;
    if (!label.empty())
        flags.label = label;
    if (active != report) {
        if (active->count("--seed") > 0)
            flags.seed = seed;
        if (active->count("--workers") > 0)
            flags.workers = workers;
    }

    if (active == simulate)
        return cmd_simulate(flags, std::cerr);
    if (active == analyze)
        return cmd_analyze(csv_path, flags, std::cerr);
    return cmd_report(records_path, flags, std::cerr);
}

} // namespace coinp
