#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace s3l {

/// Counter-based deterministic RNG. Every draw is a pure function of
/// (seed, stream id, counter), so independent streams never interact:
/// consuming one stream leaves every other stream's sequence untouched,
/// no matter the interleaving. Streams are derived by hashing tags onto
/// the parent's stream id.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : seed_(seed), stream_(0) {}

    /// Derive an independent stream; counter starts at zero.
    SeededRng stream(std::initializer_list<uint64_t> tags) const;
    SeededRng stream(std::string_view name) const;
    SeededRng stream(std::string_view name, std::initializer_list<uint64_t> tags) const;

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void set_counter(uint64_t c) { counter_ = c; }

    uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);

    /// Unbiased integer in [0, n).
    int64_t below(int64_t n);

    /// Standard normal via Box-Muller; consumes exactly two draws.
    double normal();

    /// Gamma(alpha, 1), alpha > 0 (Marsaglia-Tsang, with the boost for alpha < 1).
    double gamma(double alpha);

    /// Beta(a, b) via two gammas.
    double beta(double a, double b);

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// FNV-1a, used for stable name-keyed streams (parameter init etc.).
    static uint64_t hash_name(std::string_view s);

private:
    SeededRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
};

}  // namespace s3l
