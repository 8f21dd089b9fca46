#include "s3l/rng.hpp"

#include <cmath>
#include <numbers>

#include "s3l/common.hpp"

namespace s3l {

namespace {

// splitmix64 finalizer; full avalanche, so (seed, stream, counter) triples
// that differ in any component give unrelated outputs.
uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

SeededRng SeededRng::stream(std::initializer_list<uint64_t> tags) const {
    uint64_t s = stream_;
    for (uint64_t t : tags) s = mix(s ^ mix(t));
    return SeededRng(seed_, s);
}

SeededRng SeededRng::stream(std::string_view name) const {
    return stream({hash_name(name)});
}

SeededRng SeededRng::stream(std::string_view name, std::initializer_list<uint64_t> tags) const {
    SeededRng r = stream({hash_name(name)});
    return r.stream(tags);
}

uint64_t SeededRng::next_u64() {
    return mix(mix(mix(seed_) ^ stream_) ^ counter_++);
}

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int64_t SeededRng::below(int64_t n) {
    S3L_CHECK(n > 0, "SeededRng::below: n must be positive, got ", n);
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

double SeededRng::normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::gamma(double alpha) {
    S3L_CHECK(alpha > 0, "SeededRng::gamma: alpha must be positive, got ", alpha);
    if (alpha < 1.0) {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double SeededRng::beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
}

uint64_t SeededRng::hash_name(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace s3l
