#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coinp/harness.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace coinp;
using coinp::testing::slurp;
using coinp::testing::spit;
using coinp::testing::TempDir;

namespace {

ExperimentGrid small_grid()
{
    ExperimentGrid g;
    g.scenarios = {{ScenarioId::dist3, {}, {}}};
    g.beta_s_values = {0.0, 0.6};
    g.n_values = {80};
    g.methods = {Method::coinp, Method::approx_cpi};
    g.learners = {{LearnerKind::ols, {}, {}, {}}};
    g.replications = 6;
    g.b = 10;
    g.master_seed = 17;
    g.record_timing = false;
    return g;
}

ReplicationRecord record(const std::string& method, std::size_t rep, double p)
{
    ReplicationRecord r;
    r.scenario = "dist3";
    r.beta_s = 0.1;
    r.n = 500;
    r.method = method;
    r.learner = "ols";
    r.replication = rep;
    r.p_value = p;
    r.wall_time_ms = 1.25 * static_cast<double>(rep);
    r.fit_count = 51;
    return r;
}

} // namespace

TEST_CASE("empirical cdf")
{
    const double one[] = {0.5};
    const auto a = empirical_cdf(one);
    REQUIRE(a.size() == 1);
    CHECK(a[0] == std::pair{0.5, 1.0});

    const double four[] = {0.8, 0.4, 0.2, 0.4};
    const auto b = empirical_cdf(four);
    REQUIRE(b.size() == 3);
    CHECK(b[0] == std::pair{0.2, 0.25});
    CHECK(b[1] == std::pair{0.4, 0.75});
    CHECK(b[2] == std::pair{0.8, 1.0});

    const double bad[] = {0.2, 1.5};
    CHECK_THROWS_AS(empirical_cdf(bad), std::invalid_argument);
    CHECK_THROWS_AS(empirical_cdf(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("property: empirical cdf is a distribution function")
{
    Rng gen(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(1 + gen.index(50));
        for (auto& x : p)
            x = static_cast<double>(gen.index(11)) / 10.0;
        const auto steps = empirical_cdf(p);
        for (std::size_t k = 1; k < steps.size(); ++k) {
            CHECK(steps[k].first > steps[k - 1].first);
            CHECK(steps[k].second > steps[k - 1].second);
        }
        CHECK(steps.back().second == 1.0);
        for (const auto& [x, f] : steps) {
            const auto count = std::count_if(p.begin(), p.end(), [&](double v) { return v <= x; });
            CHECK(f == doctest::Approx(static_cast<double>(count) / static_cast<double>(p.size())));
        }
    }
}

TEST_CASE("ks statistic against the uniform")
{
    const double zeros[] = {0.0, 0.0, 0.0};
    CHECK(ks_uniformity(zeros) == 1.0);
    for (std::size_t m : {1u, 4u, 19u, 200u}) {
        std::vector<double> grid(m);
        for (std::size_t i = 0; i < m; ++i)
            grid[i] = static_cast<double>(i + 1) / static_cast<double>(m + 1);
        CHECK(ks_uniformity(grid) == doctest::Approx(1.0 / static_cast<double>(m + 1)).epsilon(1e-12));
    }
    Rng rng(4);
    std::vector<double> u(10000);
    for (auto& x : u)
        x = rng.uniform();
    CHECK(ks_uniformity(u) < 0.025);
    CHECK_THROWS_AS(ks_uniformity(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("power estimate")
{
    const double zeros[] = {0.0, 0.0};
    const double ones[] = {1.0, 1.0, 1.0};
    const double mixed[] = {0.01, 0.04, 0.06, 0.5};
    CHECK(power_estimate(zeros, 0.05) == 1.0);
    CHECK(power_estimate(ones, 0.05) == 0.0);
    CHECK(power_estimate(mixed, 0.05) == 0.5);
    const double edge[] = {0.05};
    CHECK(power_estimate(edge, 0.05) == 1.0);
    CHECK_THROWS_AS(power_estimate(std::span<const double>{}, 0.05), std::invalid_argument);
}

TEST_CASE("run_grid cardinality, order and content")
{
    const auto g = small_grid();
    const auto recs = run_grid(g);
    REQUIRE(recs.size() == g.cell_count() * g.replications);
    CHECK(g.cell_count() == 4);
    std::size_t k = 0;
    for (double beta : g.beta_s_values)
        for (auto m : g.methods)
            for (std::size_t r = 0; r < g.replications; ++r, ++k) {
                CHECK(recs[k].scenario == "dist3");
                CHECK(recs[k].beta_s == beta);
                CHECK(recs[k].n == 80);
                CHECK(recs[k].method == to_string(m));
                CHECK(recs[k].learner == "ols");
                CHECK(recs[k].replication == r);
                CHECK(recs[k].status == RecordStatus::ok);
                CHECK(recs[k].wall_time_ms == 0.0);
                CHECK(recs[k].fit_count == (m == Method::coinp ? 11u : 1u));
                CHECK(recs[k].p_value >= 0.0);
                CHECK(recs[k].p_value <= 1.0);
            }
    // approx_cpi p-values are continuous, so replications differ
    std::set<double> distinct;
    for (std::size_t r = 0; r < g.replications; ++r)
        distinct.insert(recs[g.replications + r].p_value);
    CHECK(distinct.size() == g.replications);
}

TEST_CASE("serial and parallel runs give identical records")
{
    auto g = small_grid();
    g.learners.push_back({LearnerKind::random_forest, "rf", {}, {}});
    g.learners.back().forest.n_trees = 5;
    const auto serial = run_grid(g, 1);
    CHECK(run_grid(g, 8) == serial);
    CHECK(run_grid(g, 3) == serial);

    g.record_timing = true;
    const auto timed = run_grid(g, 4);
    CHECK(same_outcomes(timed, serial));
}

TEST_CASE("seeds: data shared across methods and learners, tests are not")
{
    const auto a = replication_seeds(1, "dist3", 0.1, 500, "coinp", "ols", 7);
    const auto b = replication_seeds(1, "dist3", 0.1, 500, "cpi", "random_forest", 7);
    CHECK(a.data == b.data);
    CHECK(a.split == b.split);
    CHECK(a.test != b.test);
    CHECK(replication_seeds(1, "dist3", 0.1, 500, "coinp", "ols", 8).data != a.data);
    CHECK(replication_seeds(2, "dist3", 0.1, 500, "coinp", "ols", 7).data != a.data);
    CHECK(replication_seeds(1, "dist3", 0.6, 500, "coinp", "ols", 7).data != a.data);
    CHECK(replication_seeds(1, "dist4", 0.1, 500, "coinp", "ols", 7).data != a.data);
}

TEST_CASE("seed determinism end to end")
{
    auto g = small_grid();
    const auto a = run_grid(g);
    CHECK(run_grid(g) == a);
    g.master_seed = 18;
    CHECK_FALSE(same_outcomes(run_grid(g), a));
}

TEST_CASE("failed replications become records and abort the run")
{
    auto g = small_grid();
    g.methods = {Method::approx_coinp};
    g.beta_s_values = {0.0};
    // 12 rows leave 6 training rows, fewer than the network needs
    g.n_values = {12};
    g.learners = {{LearnerKind::mlp, {}, {}, {}}};
    std::vector<std::string> messages;
    RunOptions opt;
    opt.on_failure = [&](const std::string& m) { messages.push_back(m); };
    try {
        (void)run_grid(g, opt);
        FAIL("expected GridAborted");
    } catch (const GridAborted& e) {
        REQUIRE(e.records().size() == g.replications);
        for (const auto& r : e.records()) {
            CHECK(r.status == RecordStatus::failed);
            CHECK(std::isnan(r.p_value));
        }
        CHECK(std::string(e.what()).find("dist3") != std::string::npos);
    }
    CHECK(messages.size() == g.replications);
}

TEST_CASE("progress callback sees every cell once")
{
    const auto g = small_grid();
    std::vector<CellProgress> seen;
    RunOptions opt;
    opt.workers = 3;
    opt.on_cell_done = [&](const CellProgress& c) { seen.push_back(c); };
    const auto recs = run_grid(g, opt);
    CHECK(seen.size() == g.cell_count());
    for (const auto& c : seen) {
        CHECK(c.n_ok == g.replications);
        CHECK(c.n_failed == 0);
    }
}

TEST_CASE("grid validation")
{
    auto g = small_grid();
    g.n_values = {3};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = small_grid();
    g.methods.clear();
    CHECK_THROWS_AS(run_grid(g), std::invalid_argument);
    g = small_grid();
    g.learners.push_back(g.learners.front());
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
    g = small_grid();
    g.alpha = 1.0;
    CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("records round trip")
{
    TempDir dir("harness");
    std::vector<ReplicationRecord> recs{record("coinp", 0, 0.1), record("coinp", 1, 1.0 / 3.0),
                                        record("cpi", 0, 4.9406564584124654e-324)};
    recs[1].status = RecordStatus::failed;
    recs[1].p_value = std::nan("");
    recs[2].beta_s = 0.30000000000000004;
    write_records(recs, dir / "r.csv");
    CHECK(read_records(dir / "r.csv") == recs);
    CHECK(slurp(dir / "r.csv").rfind(std::string(kRecordsHeader) + "\n", 0) == 0);

    write_records({}, dir / "empty.csv");
    CHECK(slurp(dir / "empty.csv") == std::string(kRecordsHeader) + "\n");
    CHECK(read_records(dir / "empty.csv").empty());

    const auto g = small_grid();
    const auto grid_recs = run_grid(g);
    write_records(grid_recs, dir / "g.csv");
    CHECK(read_records(dir / "g.csv") == grid_recs);
}

TEST_CASE("malformed records name the line")
{
    TempDir dir("harness");
    const std::string header = std::string(kRecordsHeader) + "\n";
    auto error_of = [&](const std::string& body) {
        spit(dir / "bad.csv", body);
        try {
            (void)read_records(dir / "bad.csv");
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string good = "dist3,0,500,coinp,ols,0,0.5,1.5,51,ok\n";
    CHECK(error_of(header + good + "dist3,0,500,coinp,ols,1,0.5,1.5,51\n").find("line 3") != std::string::npos);
    CHECK(error_of(header + good + good + "dist3,0,abc,coinp,ols,1,0.5,1.5,51,ok\n").find("line 4")
          != std::string::npos);
    CHECK(error_of(header + "dist3,0,500,coinp,ols,0,0.5,1.5,51,maybe\n").find("line 2") != std::string::npos);
    CHECK(error_of("scenario,beta,n\n") != "no error");
    CHECK(error_of("") != "no error");
}

TEST_CASE("report files")
{
    TempDir dir("harness");
    std::vector<ReplicationRecord> recs{record("coinp", 0, 0.02), record("coinp", 1, 0.5), record("coinp", 2, 0.5),
                                        record("coinp", 3, 0.9)};
    auto failed = record("coinp", 4, std::nan(""));
    failed.status = RecordStatus::failed;
    recs.push_back(failed);
    recs.push_back(record("cpi", 0, 0.7));

    const auto files = emit_report(recs, dir.path());
    REQUIRE(files.size() == 3);
    CHECK(files[0].filename() == "summary.csv");
    CHECK(cdf_file_name(recs[0]) == "cdf_dist3_0.1_500_coinp_ols.csv");
    CHECK(slurp(dir / "cdf_dist3_0.1_500_coinp_ols.csv") == "x,F\n0.02,0.25\n0.5,0.75\n0.9,1\n");

    const std::vector<double> coinp_p{0.02, 0.5, 0.5, 0.9};
    const auto summary = slurp(dir / "summary.csv");
    std::ostringstream expect;
    expect << kSummaryHeader << "\n"
           << "dist3,0.1,500,coinp,ols," << format_real(power_estimate(coinp_p, 0.05)) << ','
           << format_real(ks_uniformity(coinp_p)) << ',' << format_real((0.0 + 1.25 + 2.5 + 3.75) / 4.0)
           << ",4,1\n"
           << "dist3,0.1,500,cpi,ols,0," << format_real(ks_uniformity(std::vector<double>{0.7})) << ",0,1,0\n";
    CHECK(summary == expect.str());

    TempDir again("harness");
    emit_report(recs, again.path());
    for (const auto& f : files)
        CHECK(slurp(again / f.filename().string()) == slurp(f));
    CHECK_THROWS(emit_report({}, dir.path()));
}

TEST_CASE("summary statistics from persisted records equal the in-memory ones")
{
    TempDir dir("harness");
    const auto recs = run_grid(small_grid());
    write_records(recs, dir / "records.csv");
    const auto back = read_records(dir / "records.csv");
    std::vector<double> mem, disk;
    for (std::size_t r = 0; r < 6; ++r) {
        mem.push_back(recs[r].p_value);
        disk.push_back(back[r].p_value);
    }
    CHECK(power_estimate(mem, 0.05) == power_estimate(disk, 0.05));
    CHECK(ks_uniformity(mem) == ks_uniformity(disk));
}

TEST_CASE("null calibration of a desk-sized cell")
{
    ExperimentGrid g;
    g.scenarios = {{ScenarioId::dist3, {}, {}}};
    g.beta_s_values = {0.0};
    g.n_values = {500};
    g.methods = {Method::coinp};
    g.learners = {{LearnerKind::ols, {}, {}, {}}};
    g.replications = 100;
    g.b = 50;
    g.master_seed = 5150;
    const auto recs = run_grid(g, 4);
    std::vector<double> p;
    for (const auto& r : recs)
        p.push_back(r.p_value);
    const double rate = power_estimate(p, 0.05);
    CHECK(rate >= 0.01);
    CHECK(rate <= 0.11);
}
