#include "coinp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coinp {

namespace {

struct SplitCandidate {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = -1.0; // sum_l^2 / n_l + sum_r^2 / n_r, larger is better
};

struct Pending {
    std::int32_t node;
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
};

} // namespace

RegressionTree RegressionTree::fit(const Dataset& data, std::vector<std::size_t> rows,
                                   const ForestParams& params, Rng& rng)
{
    if (rows.empty())
        throw std::invalid_argument("cannot fit a tree on zero rows");
    const Matrix& x = data.features();
    const Vector& y = data.labels();
    const std::size_t p = data.cols();
    const std::size_t min_leaf = params.min_samples_leaf;
    const std::size_t mtry = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(params.max_features * static_cast<double>(p))));

    RegressionTree tree;
    tree.nodes_.emplace_back();
    std::vector<Pending> stack{{0, 0, rows.size(), 0}};
    std::vector<std::size_t> features(p);
    std::iota(features.begin(), features.end(), std::size_t{0});
    std::vector<std::pair<double, double>> column; // (feature value, label)

    while (!stack.empty()) {
        const Pending cur = stack.back();
        stack.pop_back();
        const std::size_t n = cur.end - cur.begin;

        double sum = 0.0;
        bool pure = true;
        const double y0 = y(static_cast<Eigen::Index>(rows[cur.begin]));
        for (std::size_t k = cur.begin; k < cur.end; ++k) {
            const double yk = y(static_cast<Eigen::Index>(rows[k]));
            sum += yk;
            pure = pure && yk == y0;
        }
        tree.nodes_[static_cast<std::size_t>(cur.node)].value = sum / static_cast<double>(n);

        const bool depth_limited = params.max_depth && cur.depth >= *params.max_depth;
        if (pure || depth_limited || n < 2 * min_leaf || p == 0)
            continue;

        // Partial Fisher-Yates over features; keep drawing past mtry until a valid split exists.
        SplitCandidate best;
        for (std::size_t f = 0; f < p; ++f) {
            if (f >= mtry && best.found)
                break;
            std::swap(features[f], features[f + rng.index(p - f)]);
            const std::size_t j = features[f];
            const auto col = static_cast<Eigen::Index>(j);

            column.clear();
            for (std::size_t k = cur.begin; k < cur.end; ++k) {
                const auto r = static_cast<Eigen::Index>(rows[k]);
                column.emplace_back(x(r, col), y(r));
            }
            std::sort(column.begin(), column.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            if (column.front().first == column.back().first)
                continue;

            double left_sum = 0.0;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                left_sum += column[k].second;
                const std::size_t n_left = k + 1;
                const std::size_t n_right = n - n_left;
                if (n_left < min_leaf)
                    continue;
                if (n_right < min_leaf)
                    break;
                if (column[k].first == column[k + 1].first)
                    continue;
                const double right_sum = sum - left_sum;
                const double score = left_sum * left_sum / static_cast<double>(n_left)
                    + right_sum * right_sum / static_cast<double>(n_right);
                if (!best.found || score > best.score) {
                    double threshold = 0.5 * (column[k].first + column[k + 1].first);
                    if (!(threshold < column[k + 1].first))
                        threshold = column[k].first;
                    best = {true, j, threshold, score};
                }
            }
        }
        if (!best.found)
            continue;

        const auto col = static_cast<Eigen::Index>(best.feature);
        auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(cur.begin),
                                  rows.begin() + static_cast<std::ptrdiff_t>(cur.end),
                                  [&](std::size_t r) { return x(static_cast<Eigen::Index>(r), col) <= best.threshold; });
        const auto split_at = static_cast<std::size_t>(mid - rows.begin());

        const auto left = static_cast<std::int32_t>(tree.nodes_.size());
        tree.nodes_.emplace_back();
        const auto right = static_cast<std::int32_t>(tree.nodes_.size());
        tree.nodes_.emplace_back();
        auto& node = tree.nodes_[static_cast<std::size_t>(cur.node)];
        node.feature = static_cast<std::int32_t>(best.feature);
        node.threshold = best.threshold;
        node.left = left;
        node.right = right;
        stack.push_back({right, split_at, cur.end, cur.depth + 1});
        stack.push_back({left, cur.begin, split_at, cur.depth + 1});
    }
    return tree;
}

double RegressionTree::predict(std::span<const double> row) const
{
    std::size_t k = 0;
    while (nodes_[k].feature >= 0) {
        const auto& node = nodes_[k];
        k = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                   : node.right);
    }
    return nodes_[k].value;
}

std::size_t RegressionTree::depth() const
{
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        auto [k, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes_[k].feature >= 0) {
            stack.emplace_back(static_cast<std::size_t>(nodes_[k].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes_[k].right), d + 1);
        }
    }
    return deepest;
}

double ForestPredictor::predict(std::span<const double> row) const
{
    double s = 0.0;
    for (const auto& t : trees_)
        s += t.predict(row);
    return s / static_cast<double>(trees_.size());
}

std::shared_ptr<const ForestPredictor> fit_forest(const Dataset& train, const ForestParams& params,
                                                  std::uint64_t seed)
{
    params.validate();
    const std::size_t n = train.rows();
    if (n == 0)
        throw std::invalid_argument("cannot fit a random forest on an empty dataset");

    std::vector<RegressionTree> trees;
    trees.reserve(params.n_trees);
    std::vector<std::size_t> rows(n);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        Rng rng(derive_seed(seed, t));
        if (params.bootstrap) {
            for (auto& r : rows)
                r = rng.index(n);
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        trees.push_back(RegressionTree::fit(train, rows, params, rng));
    }
    return std::make_shared<const ForestPredictor>(std::move(trees));
}

PredictorPtr fit_random_forest(const Dataset& train, const ForestParams& params, std::uint64_t seed)
{
    return fit_forest(train, params, seed);
}

} // namespace coinp
