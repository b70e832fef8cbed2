#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ragrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data (file contents, argument ranges).
struct ValidationError : Error {
    using Error::Error;
};

// Unparseable file content; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

// Invalid experiment configuration.
struct ConfigError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Seeding
//
// Every random decision in the pipeline is keyed off a printable string plus
// the master seed, hashed with FNV-1a 64. The string keys are documented at
// each call site (e.g. "split|u=<user>", "sample|t=<target>|n=<neighbor>",
// "trial|u=<user>|m=<method>|k=<k>|f=<f*10000>"). This makes every seed
// independent of scheduling order and stable across platforms.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t stable_seed(std::uint64_t master, std::string_view key) {
    return fnv1a64(std::string(key) + "|seed=" + std::to_string(master));
}

// Deterministic RNG wrapper. std::mt19937_64 output is pinned by the
// standard; the bounded draw below avoids std::uniform_int_distribution,
// whose mapping differs between standard library implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Unbiased draw in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ValidationError("SeededRng::below: n must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return v % n;
    }

    double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Box-Muller; avoids std::normal_distribution for implementation-
    // independent output.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // First `count` elements of a random permutation of [0, n).
    std::vector<std::uint32_t> sample_indices(std::uint32_t n, std::uint32_t count) {
        if (count > n) count = n;
        std::vector<std::uint32_t> idx(n);
        for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
        for (std::uint32_t i = 0; i < count; ++i) {
            const auto j = i + static_cast<std::uint32_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(count);
        return idx;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Counting rules shared by ingest and retrieval
// ---------------------------------------------------------------------------

// Round-half-up with a floor of 1; never masks a user's whole history.
// The epsilon compensates for binary representation of fractions like 0.2.
inline std::size_t masked_count(std::size_t total, double fraction) {
    std::size_t m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total) + 0.5 + 1e-9));
    if (m < 1) m = 1;
    if (m >= total && total > 0) m = total - 1;
    return m;
}

// ceil(fraction * n); a fraction of 0.25 never yields an empty sample for
// non-empty input.
inline std::size_t sample_count(double fraction, std::size_t n) {
    if (n == 0) return 0;
    auto c = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (c < 1) c = 1;
    if (c > n) c = n;
    return c;
}

// ---------------------------------------------------------------------------
// Small text helpers
// ---------------------------------------------------------------------------

inline std::vector<std::string> split_string(std::string_view s, std::string_view delim) {
    std::vector<std::string> out;
    if (delim.empty()) {
        out.emplace_back(s);
        return out;
    }
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(delim, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + delim.size();
    }
    return out;
}

inline std::size_t whitespace_token_count(std::string_view text) {
    std::size_t words = 0;
    bool in_word = false;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++words;
        }
    }
    return words;
}

inline std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

// Shortest round-trip-ish representation; used for fractions in file names
// and CSV cells (0.25 -> "0.25", 1.0 -> "1").
inline std::string format_compact(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", value);
    return buf;
}

}  // namespace ragrec
