#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragrec/common.hpp"

namespace ragrec {

struct RatingEntry {
    UserId user = 0;
    ItemId item = 0;
    int rating = 0;
    std::int64_t timestamp = 0;
};

// Sparse user x item interaction matrix. IDs are contiguous zero-based
// indices assigned in first-seen file order; the raw IDs are kept for
// diagnostics.
struct RatingMatrix {
    std::uint32_t n_users = 0;
    std::uint32_t n_items = 0;
    std::vector<RatingEntry> entries;
    std::vector<std::int64_t> raw_user_ids;  // index -> raw id
    std::vector<std::int64_t> raw_item_ids;
};

struct RatedItem {
    ItemId item = 0;
    int rating = 0;
    std::int64_t timestamp = 0;

    bool operator==(const RatedItem&) const = default;
};

// Per-user partition into known (training/context) and masked (held-out
// evaluation target) ratings. Both lists are sorted by (timestamp, item).
struct UserSplit {
    UserId user = 0;
    std::vector<RatedItem> known;
    std::vector<RatedItem> masked;
};

enum class MaskMode { random, latest };

struct EvalCohort {
    std::vector<UserId> hot_users;   // rating count strictly above the median
    std::vector<UserId> cold_users;  // rating count at or below the median
    std::size_t median_count = 0;
};

namespace detail {

inline bool parse_i64(std::string_view field, std::int64_t& out) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && !field.empty();
}

}  // namespace detail

// Loads a rating file with lines of the form
//   <user><delim><item><delim><rating><delim><timestamp>
// Raw IDs are remapped to contiguous zero-based indices in first-seen order.
inline RatingMatrix load_ratings(const std::string& path, const std::string& delimiter = "\t") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open rating file: " + path);

    RatingMatrix m;
    std::unordered_map<std::int64_t, UserId> user_map;
    std::unordered_map<std::int64_t, ItemId> item_map;
    std::unordered_set<std::uint64_t> seen_pairs;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto fields = split_string(line, delimiter);
        if (fields.size() != 4) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        }
        std::int64_t raw_user = 0, raw_item = 0, rating = 0, timestamp = 0;
        if (!detail::parse_i64(fields[0], raw_user) || !detail::parse_i64(fields[1], raw_item) ||
            !detail::parse_i64(fields[2], rating) || !detail::parse_i64(fields[3], timestamp)) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed integer field");
        }
        if (rating < 1 || rating > 5) {
            throw ValidationError("line " + std::to_string(line_no) + ": rating " + std::to_string(rating) +
                                  " outside 1-5");
        }

        auto [uit, unew] = user_map.try_emplace(raw_user, static_cast<UserId>(m.raw_user_ids.size()));
        if (unew) m.raw_user_ids.push_back(raw_user);
        auto [iit, inew] = item_map.try_emplace(raw_item, static_cast<ItemId>(m.raw_item_ids.size()));
        if (inew) m.raw_item_ids.push_back(raw_item);

        const UserId u = uit->second;
        const ItemId i = iit->second;
        const std::uint64_t pair_key = (static_cast<std::uint64_t>(u) << 32) | i;
        if (!seen_pairs.insert(pair_key).second) {
            throw ValidationError("duplicate rating for user " + std::to_string(raw_user) + ", item " +
                                  std::to_string(raw_item));
        }
        m.entries.push_back({u, i, static_cast<int>(rating), timestamp});
    }

    if (m.entries.empty()) throw ValidationError("no ratings");
    m.n_users = static_cast<std::uint32_t>(m.raw_user_ids.size());
    m.n_items = static_cast<std::uint32_t>(m.raw_item_ids.size());
    return m;
}

// Splits one user's history into known/masked sets. Ratings are first
// sorted by (timestamp, item) as canonicalization; the masked subset is
// then drawn uniformly at random (MaskMode::random) or taken as the most
// recent entries (MaskMode::latest). |masked| = max(1, round-half-up of
// fraction*n), capped so that known stays non-empty.
inline UserSplit split_user(UserId user, std::vector<RatedItem> ratings, std::uint64_t seed,
                            double mask_fraction = 0.2, MaskMode mode = MaskMode::random) {
    if (ratings.empty()) throw ValidationError("split_user: empty rating list");
    if (ratings.size() == 1) {
        throw ValidationError("split_user: user " + std::to_string(user) +
                              " has a single rating; known set would be empty");
    }
    std::sort(ratings.begin(), ratings.end(), [](const RatedItem& a, const RatedItem& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a.item < b.item;
    });

    const std::size_t n = ratings.size();
    const std::size_t n_masked = masked_count(n, mask_fraction);

    std::vector<bool> is_masked(n, false);
    if (mode == MaskMode::latest) {
        for (std::size_t i = n - n_masked; i < n; ++i) is_masked[i] = true;
    } else {
        SeededRng rng(seed);
        for (auto idx : rng.sample_indices(static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n_masked))) {
            is_masked[idx] = true;
        }
    }

    UserSplit split;
    split.user = user;
    for (std::size_t i = 0; i < n; ++i) {
        (is_masked[i] ? split.masked : split.known).push_back(ratings[i]);
    }
    return split;
}

// Groups entries per user and splits every user. Per-user seeds are derived
// as stable_seed(master_seed, "split|u=<user>").
inline std::vector<UserSplit> split_all_users(const RatingMatrix& m, std::uint64_t master_seed,
                                              double mask_fraction = 0.2, MaskMode mode = MaskMode::random) {
    std::vector<std::vector<RatedItem>> per_user(m.n_users);
    for (const auto& e : m.entries) per_user[e.user].push_back({e.item, e.rating, e.timestamp});
    std::vector<UserSplit> splits;
    splits.reserve(m.n_users);
    for (UserId u = 0; u < m.n_users; ++u) {
        const auto seed = stable_seed(master_seed, "split|u=" + std::to_string(u));
        splits.push_back(split_user(u, std::move(per_user[u]), seed, mask_fraction, mode));
    }
    return splits;
}

// Partitions users into hot/cold by the lower median of per-user rating
// counts, then samples up to sample_size users from each group without
// replacement. Sampled lists are returned sorted ascending.
inline EvalCohort build_cohort(const RatingMatrix& m, std::size_t sample_size, std::uint64_t seed) {
    if (m.entries.empty()) throw ValidationError("build_cohort: empty matrix");
    if (sample_size == 0) throw ValidationError("build_cohort: sample_size must be positive");

    std::vector<std::size_t> counts(m.n_users, 0);
    for (const auto& e : m.entries) ++counts[e.user];

    std::vector<std::size_t> sorted_counts = counts;
    std::sort(sorted_counts.begin(), sorted_counts.end());
    const std::size_t median = sorted_counts[(sorted_counts.size() - 1) / 2];  // lower median

    std::vector<UserId> hot, cold;
    for (UserId u = 0; u < m.n_users; ++u) {
        (counts[u] > median ? hot : cold).push_back(u);
    }

    const auto pick = [&](std::vector<UserId>& group, std::string_view tag) {
        if (group.size() <= sample_size) return;
        SeededRng rng(stable_seed(seed, std::string("cohort|") + std::string(tag)));
        const auto idx = rng.sample_indices(static_cast<std::uint32_t>(group.size()),
                                            static_cast<std::uint32_t>(sample_size));
        std::vector<UserId> chosen;
        chosen.reserve(idx.size());
        for (auto i : idx) chosen.push_back(group[i]);
        group = std::move(chosen);
    };
    pick(hot, "hot");
    pick(cold, "cold");
    std::sort(hot.begin(), hot.end());
    std::sort(cold.begin(), cold.end());

    return EvalCohort{std::move(hot), std::move(cold), median};
}

// Audit file: one line per user, "<user_id>\t<masked_id>,<masked_id>,...".
inline void write_split_manifest(const std::vector<UserSplit>& splits, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write split manifest: " + path);
    for (const auto& s : splits) {
        out << s.user << '\t';
        std::vector<ItemId> ids;
        ids.reserve(s.masked.size());
        for (const auto& r : s.masked) ids.push_back(r.item);
        std::sort(ids.begin(), ids.end());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out << ',';
            out << ids[i];
        }
        out << '\n';
    }
}

}  // namespace ragrec
