#pragma once

#include "coinp/learners.hpp"
#include "coinp/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace coinp {

// CART regression tree with variance-reduction splits. Rows go left when
// x[feature] <= threshold.
class RegressionTree {
public:
    struct Node {
        std::int32_t feature = -1; // -1 marks a leaf
        double threshold = 0.0;
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;
    };

    // Fits on the rows of `data` listed in `rows` (repeats allowed, as in a bootstrap sample).
    static RegressionTree fit(const Dataset& data, std::vector<std::size_t> rows,
                              const ForestParams& params, Rng& rng);

    [[nodiscard]] double predict(std::span<const double> row) const;
    [[nodiscard]] std::size_t node_count() const noexcept { return nodes_.size(); }
    [[nodiscard]] std::size_t depth() const;

private:
    std::vector<Node> nodes_;
};

class ForestPredictor final : public Predictor {
public:
    explicit ForestPredictor(std::vector<RegressionTree> trees) : trees_(std::move(trees)) { }
    using Predictor::predict;

    // mean of the tree predictions
    [[nodiscard]] double predict(std::span<const double> row) const override;
    [[nodiscard]] const std::vector<RegressionTree>& trees() const noexcept { return trees_; }

private:
    std::vector<RegressionTree> trees_;
};

std::shared_ptr<const ForestPredictor> fit_forest(const Dataset& train, const ForestParams& params,
                                                  std::uint64_t seed);

} // namespace coinp
