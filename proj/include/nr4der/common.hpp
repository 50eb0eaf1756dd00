#ifndef NR4DER_COMMON_HPP
#define NR4DER_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace nr4der {

// Error taxonomy. The CLI maps these onto process exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad shapes, mismatched dimensions, out-of-range indices.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf encountered, training divergence, failed numeric checks.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed input files (CSV rows, config lines). Carries a line number when known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Invalid or infeasible configuration values.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A required artifact (checkpoint, dataset file) is absent.
class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(const std::string& msg) : Error(msg) {}
};

// Inputs that individually parse but disagree with each other.
class InconsistencyError : public Error {
public:
    explicit InconsistencyError(const std::string& msg) : Error(msg) {}
};

// Using a model before it was trained/loaded.
class StateError : public Error {
public:
    explicit StateError(const std::string& msg) : Error(msg) {}
};

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Named substream derivation: independent components draw from independent
// generators so that enabling/disabling one component does not shift the
// random stream seen by another.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view tag) {
    std::uint64_t z = seed ^ fnv1a(tag);
    // splitmix64 scramble
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
    return std::mt19937_64(z);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

}  // namespace nr4der

#endif
