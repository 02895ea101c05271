#pragma once

#include "coinp/dataset.hpp"
#include "coinp/rng.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <unistd.h>

namespace coinp::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path()
                / ("coinp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// n x p standard normal features, y = sum of coefficients * x + noise_sd * N(0,1)
inline Dataset random_linear(std::size_t n, const std::vector<double>& coef, double noise_sd, std::uint64_t seed)
{
    Rng rng(seed);
    const auto p = static_cast<Eigen::Index>(coef.size());
    Matrix x(static_cast<Eigen::Index>(n), p);
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double yi = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            x(i, j) = rng.normal();
            yi += coef[static_cast<std::size_t>(j)] * x(i, j);
        }
        y(i) = yi + noise_sd * rng.normal();
    }
    return {std::move(x), std::move(y)};
}

// Synthetic table with the column layout of the diamonds data: nine features
// (three of them ordinal categories as text) and a price label.
inline void write_diamonds_like(const std::filesystem::path& path, std::size_t n, std::uint64_t seed)
{
    static const char* cuts[] = {"Fair", "Good", "Very Good", "Premium", "Ideal"};
    static const char* colors[] = {"D", "E", "F", "G", "H", "I", "J"};
    static const char* clarities[] = {"I1", "SI2", "SI1", "VS2", "VS1", "VVS2", "VVS1", "IF"};
    Rng rng(seed);
    std::ofstream out(path);
    out << "carat,cut,color,clarity,depth,table,price,x,y,z\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double carat = 0.2 + 2.0 * rng.uniform() * rng.uniform();
        const auto cut = rng.index(5);
        const auto color = rng.index(7);
        const auto clarity = rng.index(8);
        const double x = 6.0 * std::cbrt(carat) + 0.05 * rng.normal();
        const double price = 4000.0 * carat * carat + 150.0 * static_cast<double>(cut)
            - 120.0 * static_cast<double>(color) + 200.0 * static_cast<double>(clarity) + 300.0 * rng.normal();
        out << format_real(carat) << ',' << (cut == 2 ? "\"Very Good\"" : cuts[cut]) << ',' << colors[color]
            << ',' << clarities[clarity] << ',' << format_real(61.0 + rng.normal()) << ','
            << format_real(57.0 + 2.0 * rng.normal()) << ',' << format_real(price) << ',' << format_real(x) << ','
            << format_real(x + 0.03 * rng.normal()) << ',' << format_real(0.62 * x + 0.03 * rng.normal()) << '\n';
    }
}

} // namespace coinp::testing
