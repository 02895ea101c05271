#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace coinp {

// SplitMix64 finalizer. Used to turn (seed, stream) pairs into well-mixed
// engine seeds so that streams derived from nearby integers do not overlap.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept
{
    return mix64(mix64(base) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

// FNV-1a, for folding labels (scenario ids, method names) into seeds.
constexpr std::uint64_t hash_label(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    using engine_type = std::mt19937_64;

    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) { }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() { return normal_(engine_); }

    double gamma(double shape)
    {
        std::gamma_distribution<double> g(shape, 1.0);
        return g(engine_);
    }

    // uniform on {0, ..., n-1}
    std::size_t index(std::size_t n)
    {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }

    engine_type& engine() noexcept { return engine_; }

private:
    engine_type engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace coinp
