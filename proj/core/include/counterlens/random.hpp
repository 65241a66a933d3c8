#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace counterlens {

/// Derives an independent stream seed from a master seed and a tag.
/// stream_seed(s, tag) = splitmix64(s + fnv1a64(tag)).
std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag);

/// Sub-stream `index` of a stream, used for per-tree and per-fold draws so
/// results do not depend on evaluation order.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

// Platform-independent draws on top of mt19937_64. The standard distributions
// are implementation-defined, which would break byte-identical reports.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
};

} // namespace counterlens
