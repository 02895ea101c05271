#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coinp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Raised for malformed input data: CSV parse failures, non-finite values,
// shape mismatches between features and labels.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Feature matrix (rows = observations) plus a real-valued label vector.
// Immutable once constructed; every entry is finite and column names are unique.
class Dataset {
public:
    Dataset(Matrix features, Vector labels, std::vector<std::string> column_names);
    // columns named x1..xp
    Dataset(Matrix features, Vector labels);

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(features_.rows()); }
    [[nodiscard]] std::size_t cols() const noexcept { return static_cast<std::size_t>(features_.cols()); }

    [[nodiscard]] const Matrix& features() const noexcept { return features_; }
    [[nodiscard]] const Vector& labels() const noexcept { return labels_; }
    [[nodiscard]] const std::vector<std::string>& column_names() const noexcept { return names_; }

    // index of a named column, throws DataError when absent
    [[nodiscard]] std::size_t column_index(const std::string& name) const;

    [[nodiscard]] Dataset select_rows(std::span<const std::size_t> rows) const;
    [[nodiscard]] Dataset select_columns(std::span<const std::size_t> cols) const;

    // exact (bitwise for finite values) equality of all fields
    friend bool operator==(const Dataset& a, const Dataset& b);

private:
    Matrix features_;
    Vector labels_;
    std::vector<std::string> names_;
};

// The tested column subset S. Indices are kept in ascending order.
class FeatureSet {
public:
    FeatureSet() = default;
    explicit FeatureSet(std::vector<std::size_t> indices);
    FeatureSet(std::initializer_list<std::size_t> indices)
        : FeatureSet(std::vector<std::size_t>(indices)) { }

    [[nodiscard]] const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    [[nodiscard]] bool empty() const noexcept { return indices_.empty(); }
    [[nodiscard]] bool contains(std::size_t j) const;

    // Throws std::invalid_argument if empty or any index >= p.
    void validate(std::size_t p) const;
    [[nodiscard]] FeatureSet complement(std::size_t p) const;

    friend bool operator==(const FeatureSet&, const FeatureSet&) = default;

private:
    std::vector<std::size_t> indices_;
};

struct Permutation {
    std::vector<std::size_t> order;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const noexcept { return order.size(); }
    [[nodiscard]] bool is_valid() const;
    [[nodiscard]] Permutation inverse() const;

    static Permutation identity(std::size_t n);
};

struct Split {
    Dataset train;
    Dataset holdout;
};

inline constexpr double kDefaultHoldoutFraction = 0.5;

// Seeded shuffle then partition. |holdout| = round(n * holdout_fraction) and
// both parts keep the original relative row order.
Split split(const Dataset& data, double holdout_fraction, std::uint64_t seed);

// Uniform over all n! orderings (identity included).
Permutation sample_permutation(std::size_t n, std::uint64_t seed);

// Output row i of every column j in s takes the value of input row perm.order[i].
// All columns of s share the one permutation; other columns and labels are copied.
Dataset permute_columns(const Dataset& data, const FeatureSet& s, const Permutation& perm);

// column name -> ordered category list; category k is coded as k
using CategoryEncoding = std::map<std::string, std::vector<std::string>>;

// Orderings for the cut/color/clarity columns of the diamonds data.
const CategoryEncoding& diamonds_encoding();

struct CsvOptions {
    CategoryEncoding encoding;
    std::vector<std::string> exclude_columns;
};

// Trimmed column names of the first line.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const CsvOptions& options = {});

// Writes features then the label column, numbers in shortest round-trip form.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "y");

// Shortest decimal representation that parses back to the same double.
std::string format_real(double v);

} // namespace coinp
