#include "coinp/dataset.hpp"

#include "coinp/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace coinp {

namespace {

std::vector<std::string> default_names(std::size_t p)
{
    std::vector<std::string> names;
    names.reserve(p);
    for (std::size_t j = 0; j < p; ++j)
        names.push_back("x" + std::to_string(j + 1));
    return names;
}

} // namespace

Dataset::Dataset(Matrix features, Vector labels, std::vector<std::string> column_names)
    : features_(std::move(features))
    , labels_(std::move(labels))
    , names_(std::move(column_names))
{
    if (features_.rows() != labels_.size())
        throw DataError("feature rows (" + std::to_string(features_.rows()) + ") != label length ("
                        + std::to_string(labels_.size()) + ")");
    if (names_.size() != static_cast<std::size_t>(features_.cols()))
        throw DataError("expected " + std::to_string(features_.cols()) + " column names, got "
                        + std::to_string(names_.size()));
    std::unordered_set<std::string> seen;
    for (const auto& n : names_)
        if (!seen.insert(n).second)
            throw DataError("duplicate column name '" + n + "'");
    if (!features_.allFinite())
        throw DataError("feature matrix contains non-finite values");
    if (!labels_.allFinite())
        throw DataError("labels contain non-finite values");
}

Dataset::Dataset(Matrix features, Vector labels)
    : Dataset(features, std::move(labels), default_names(static_cast<std::size_t>(features.cols())))
{
}

std::size_t Dataset::column_index(const std::string& name) const
{
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end())
        throw DataError("no column named '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const
{
    Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= this->rows())
            throw std::out_of_range("row index out of range");
        auto r = static_cast<Eigen::Index>(rows[i]);
        x.row(static_cast<Eigen::Index>(i)) = features_.row(r);
        y(static_cast<Eigen::Index>(i)) = labels_(r);
    }
    return Dataset(std::move(x), std::move(y), names_);
}

Dataset Dataset::select_columns(std::span<const std::size_t> cols) const
{
    Matrix x(features_.rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::string> names;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= this->cols())
            throw std::out_of_range("column index out of range");
        x.col(static_cast<Eigen::Index>(j)) = features_.col(static_cast<Eigen::Index>(cols[j]));
        names.push_back(names_[cols[j]]);
    }
    return Dataset(std::move(x), labels_, std::move(names));
}

bool operator==(const Dataset& a, const Dataset& b)
{
    return a.names_ == b.names_ && a.features_.rows() == b.features_.rows()
        && a.features_.cols() == b.features_.cols() && a.features_ == b.features_
        && a.labels_ == b.labels_;
}

FeatureSet::FeatureSet(std::vector<std::size_t> indices)
    : indices_(std::move(indices))
{
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
        throw std::invalid_argument("feature set contains duplicate indices");
}

bool FeatureSet::contains(std::size_t j) const
{
    return std::binary_search(indices_.begin(), indices_.end(), j);
}

void FeatureSet::validate(std::size_t p) const
{
    if (indices_.empty())
        throw std::invalid_argument("feature set is empty");
    if (indices_.back() >= p)
        throw std::invalid_argument("feature index " + std::to_string(indices_.back())
                                    + " out of range for " + std::to_string(p) + " columns");
}

FeatureSet FeatureSet::complement(std::size_t p) const
{
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < p; ++j)
        if (!contains(j))
            rest.push_back(j);
    return FeatureSet(std::move(rest));
}

bool Permutation::is_valid() const
{
    std::vector<char> seen(order.size(), 0);
    for (auto i : order) {
        if (i >= order.size() || seen[i])
            return false;
        seen[i] = 1;
    }
    return true;
}

Permutation Permutation::inverse() const
{
    Permutation inv{std::vector<std::size_t>(order.size()), seed};
    for (std::size_t i = 0; i < order.size(); ++i)
        inv.order[order[i]] = i;
    return inv;
}

Permutation Permutation::identity(std::size_t n)
{
    Permutation p{std::vector<std::size_t>(n), 0};
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    return p;
}

Split split(const Dataset& data, double holdout_fraction, std::uint64_t seed)
{
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("holdout fraction must lie in (0, 1)");
    const std::size_t n = data.rows();
    const auto n_holdout = static_cast<std::size_t>(std::llround(static_cast<double>(n) * holdout_fraction));
    if (n < 4 || n_holdout < 2 || n - n_holdout < 2)
        throw std::invalid_argument("dataset of " + std::to_string(n)
                                    + " rows is too small to split with fraction "
                                    + format_real(holdout_fraction));

    auto perm = sample_permutation(n, seed).order;
    std::vector<std::size_t> holdout(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_holdout));
    std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_holdout), perm.end());
    std::sort(holdout.begin(), holdout.end());
    std::sort(train.begin(), train.end());
    return {data.select_rows(train), data.select_rows(holdout)};
}

Permutation sample_permutation(std::size_t n, std::uint64_t seed)
{
    if (n == 0)
        throw std::invalid_argument("cannot sample a permutation of 0 elements");
    Permutation p = Permutation::identity(n);
    p.seed = seed;
    Rng rng(seed);
    // Fisher-Yates
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(p.order[i], p.order[rng.index(i + 1)]);
    return p;
}

Dataset permute_columns(const Dataset& data, const FeatureSet& s, const Permutation& perm)
{
    if (perm.size() != data.rows())
        throw std::invalid_argument("permutation length " + std::to_string(perm.size())
                                    + " does not match " + std::to_string(data.rows()) + " rows");
    if (!perm.is_valid())
        throw std::invalid_argument("not a permutation of 0..n-1");
    s.validate(data.cols());
    Matrix x = data.features();
    for (auto j : s.indices()) {
        auto col = static_cast<Eigen::Index>(j);
        for (std::size_t i = 0; i < perm.size(); ++i)
            x(static_cast<Eigen::Index>(i), col) = data.features()(static_cast<Eigen::Index>(perm.order[i]), col);
    }
    return Dataset(std::move(x), data.labels(), data.column_names());
}

const CategoryEncoding& diamonds_encoding()
{
    static const CategoryEncoding enc{
        {"cut", {"Fair", "Good", "Very Good", "Premium", "Ideal"}},
        {"color", {"D", "E", "F", "G", "H", "I", "J"}},
        {"clarity", {"I1", "SI2", "SI1", "VS2", "VS1", "VVS2", "VVS1", "IF"}},
    };
    return enc;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string trim(std::string s)
{
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_real(const std::string& s, double& out)
{
    if (s.empty())
        return false;
    const char* first = s.data();
    if (*first == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string> parse_header(std::istream& in, const std::filesystem::path& path)
{
    std::string line;
    if (!std::getline(in, line))
        throw DataError("'" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    // UTF-8 byte order mark
    if (line.rfind("\xEF\xBB\xBF", 0) == 0)
        line.erase(0, 3);
    auto header = split_csv_line(line);
    for (auto& h : header)
        h = trim(h);
    return header;
}

} // namespace

std::vector<std::string> read_csv_header(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    return parse_header(in, path);
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 const CsvOptions& options)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    const auto header = parse_header(in, path);
    std::string line;

    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end())
        throw DataError("label column '" + label_column + "' not found in header");
    const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

    for (const auto& ex : options.exclude_columns)
        if (std::find(header.begin(), header.end(), ex) == header.end())
            throw DataError("excluded column '" + ex + "' not found in header");
    for (const auto& [col, cats] : options.encoding)
        if (std::find(header.begin(), header.end(), col) == header.end())
            throw DataError("encoded column '" + col + "' not found in header");

    std::vector<std::size_t> feature_pos;
    std::vector<std::string> names;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (k == label_pos)
            continue;
        if (std::find(options.exclude_columns.begin(), options.exclude_columns.end(), header[k])
            != options.exclude_columns.end())
            continue;
        feature_pos.push_back(k);
        names.push_back(header[k]);
    }

    std::vector<const std::vector<std::string>*> categories(header.size(), nullptr);
    for (std::size_t k = 0; k < header.size(); ++k)
        if (auto it = options.encoding.find(header[k]); it != options.encoding.end())
            categories[k] = &it->second;

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size())
                            + " cells, got " + std::to_string(cells.size()));
        std::vector<double> values(header.size(), 0.0);
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (std::find(options.exclude_columns.begin(), options.exclude_columns.end(), header[k])
                != options.exclude_columns.end())
                continue;
            auto cell = trim(cells[k]);
            const std::string where = "line " + std::to_string(line_no) + ", column '" + header[k] + "'";
            if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
                throw DataError(where + ": missing value");
            if (categories[k] != nullptr) {
                const auto& cats = *categories[k];
                auto it = std::find(cats.begin(), cats.end(), cell);
                if (it == cats.end())
                    throw DataError(where + ": category '" + cell + "' not in encoding");
                values[k] = static_cast<double>(it - cats.begin());
            } else if (!parse_real(cell, values[k])) {
                throw DataError(where + ": cannot parse '" + cell + "' as a number");
            }
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty())
        throw DataError("'" + path.string() + "' has no data rows");

    Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_pos.size()));
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < feature_pos.size(); ++j)
            x(r, static_cast<Eigen::Index>(j)) = rows[i][feature_pos[j]];
        y(r) = rows[i][label_pos];
    }
    return Dataset(std::move(x), std::move(y), std::move(names));
}

std::string format_real(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw std::runtime_error("cannot format number");
    return std::string(buf, ptr);
}

void write_csv(const Dataset& data, const std::filesystem::path& path, const std::string& label_column)
{
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    for (const auto& n : data.column_names())
        out << n << ',';
    out << label_column << '\n';
    for (std::size_t i = 0; i < data.rows(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        for (std::size_t j = 0; j < data.cols(); ++j)
            out << format_real(data.features()(r, static_cast<Eigen::Index>(j))) << ',';
        out << format_real(data.labels()(r)) << '\n';
    }
    if (!out)
        throw DataError("write to '" + path.string() + "' failed");
}

} // namespace coinp
