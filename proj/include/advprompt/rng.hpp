#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "advprompt/common.hpp"

namespace advprompt {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Order-sensitive seed combinator; used everywhere a sub-stream is derived.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (splitmix64(b) + 0x9e3779b97f4a7c15ull));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

inline std::uint64_t hash_vector(const Vec& v) {
    return fnv1a64(v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
}

inline Vec gaussian_vector(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

inline Mat gaussian_matrix(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = g(rng);
    return m;
}

inline Vec unit_gaussian_vector(int n, std::uint64_t seed) {
    Vec v = gaussian_vector(n, seed);
    double norm = v.norm();
    // A fresh Gaussian draw has zero norm with probability zero; reseed if it happens.
    while (norm == 0.0) {
        seed = splitmix64(seed);
        v = gaussian_vector(n, seed);
        norm = v.norm();
    }
    return v / norm;
}

} // namespace advprompt
