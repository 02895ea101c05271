#pragma once

#include "coinp/dataset.hpp"
#include "coinp/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace coinp {

enum class ScenarioId { dist1, dist2, dist3, dist4 };

std::string to_string(ScenarioId id);
ScenarioId parse_scenario(const std::string& name);

// Knobs for the readings of the scenario definitions that are ambiguous.
struct ScenarioOptions {
    // dist1 columns exposed to the tests (0-based over X1..X5); must include 3
    std::vector<std::size_t> dist1_observed{0, 1, 2, 3, 4};
    // dist3 noise: N(0, 0.5) read as a standard deviation (false) or a variance (true)
    bool dist3_noise_is_variance = false;

    friend bool operator==(const ScenarioOptions&, const ScenarioOptions&) = default;
};

struct ScenarioConfig {
    ScenarioId id = ScenarioId::dist3;
    double beta_s = 0.0;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    ScenarioOptions options;
};

struct SknParams {
    double location = 0.0;
    double scale = 1.0;
    double shape = 0.0;
};

struct GeneratedData {
    Dataset data;
    FeatureSet s;
};

// Skew normal via delta |U0| + sqrt(1 - delta^2) U1 with delta = shape / sqrt(1 + shape^2).
double sample_skew_normal(const SknParams& p, Rng& rng);

// Beta(a, b) as G_a / (G_a + G_b) with independent gamma variates.
double sample_beta(double a, double b, Rng& rng);

// Zero-mean bivariate normal with unit variances and covariance cov01.
std::pair<double, double> sample_correlated_normal_pair(double cov01, Rng& rng);

// n iid rows of the selected distribution; s is the feature whose coefficient is beta_s.
GeneratedData generate(const ScenarioConfig& cfg);

} // namespace coinp
