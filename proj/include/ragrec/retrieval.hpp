#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragrec/common.hpp"
#include "ragrec/ingest.hpp"

namespace ragrec {

// (item, rating) pairs sorted by item id; the sparse row of one user.
using SparseRatings = std::vector<std::pair<ItemId, int>>;

struct Neighbor {
    UserId user = 0;
    double similarity = 0.0;
};

// Top-k similar users for one target, with each neighbor's rating sample.
// neighbors are sorted by similarity descending, ties by user id ascending.
struct NeighborContext {
    UserId target = 0;
    std::vector<Neighbor> neighbors;
    std::vector<SparseRatings> sampled_ratings;  // parallel to neighbors; empty until sampled
    double fraction = 1.0;
};

struct PopularityStats {
    std::vector<std::uint32_t> count;  // raters per item, known ratings only
    std::vector<double> avg;           // mean rating; valid only where count > 0

    bool has(ItemId item) const { return item < count.size() && count[item] > 0; }
};

// Immutable view of all users' known ratings: per-user sorted rows with
// precomputed norms plus per-item postings for fast similarity accumulation.
// Masked ratings never enter this structure.
struct KnownSnapshot {
    std::uint32_t n_users = 0;
    std::uint32_t n_items = 0;
    std::vector<SparseRatings> user_ratings;                          // sorted by item
    std::vector<double> user_norm;
    std::vector<std::vector<std::pair<UserId, int>>> item_raters;     // sorted by user

    static KnownSnapshot build(std::uint32_t n_users, std::uint32_t n_items,
                               const std::vector<UserSplit>& splits) {
        KnownSnapshot s;
        s.n_users = n_users;
        s.n_items = n_items;
        s.user_ratings.resize(n_users);
        s.user_norm.assign(n_users, 0.0);
        s.item_raters.resize(n_items);
        for (const auto& split : splits) {
            auto& row = s.user_ratings[split.user];
            for (const auto& r : split.known) row.emplace_back(r.item, r.rating);
            std::sort(row.begin(), row.end());
        }
        for (UserId u = 0; u < n_users; ++u) {
            double sq = 0.0;
            for (const auto& [item, rating] : s.user_ratings[u]) {
                sq += static_cast<double>(rating) * rating;
                s.item_raters[item].emplace_back(u, rating);
            }
            s.user_norm[u] = std::sqrt(sq);
        }
        for (auto& raters : s.item_raters) std::sort(raters.begin(), raters.end());
        return s;
    }
};

// Cosine similarity over two sparse rating rows (unobserved entries are
// zero). Returns 0 when either vector has zero norm. The dot product is
// accumulated in item-ascending order so the result is bit-identical to a
// dense scan.
inline double cosine_similarity(const SparseRatings& a, const SparseRatings& b) {
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (const auto& [item, r] : a) norm_a += static_cast<double>(r) * r;
    for (const auto& [item, r] : b) norm_b += static_cast<double>(r) * r;
    if (norm_a == 0.0 || norm_b == 0.0) return 0.0;

    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first == b[j].first) {
            dot += static_cast<double>(a[i].second) * b[j].second;
            ++i;
            ++j;
        } else if (a[i].first < b[j].first) {
            ++i;
        } else {
            ++j;
        }
    }
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

// The min(k, n_users-1) most similar users to `target`, zero-similarity
// users included when needed to fill k. Accumulates dot products through
// the item postings so cost scales with the target's row, not n_items.
inline NeighborContext top_k_neighbors(const KnownSnapshot& snap, UserId target, std::size_t k) {
    if (target >= snap.n_users) {
        throw ValidationError("top_k_neighbors: target " + std::to_string(target) + " out of range");
    }
    if (k == 0) throw ValidationError("top_k_neighbors: k must be at least 1");

    std::vector<double> dot(snap.n_users, 0.0);
    for (const auto& [item, r_target] : snap.user_ratings[target]) {
        for (const auto& [user, r_user] : snap.item_raters[item]) {
            dot[user] += static_cast<double>(r_target) * r_user;
        }
    }

    const double norm_t = snap.user_norm[target];
    std::vector<Neighbor> all;
    all.reserve(snap.n_users > 0 ? snap.n_users - 1 : 0);
    for (UserId u = 0; u < snap.n_users; ++u) {
        if (u == target) continue;
        double sim = 0.0;
        if (norm_t > 0.0 && snap.user_norm[u] > 0.0) sim = dot[u] / (norm_t * snap.user_norm[u]);
        all.push_back({u, sim});
    }
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + take, all.end(), [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.user < b.user;
    });
    all.resize(take);

    NeighborContext ctx;
    ctx.target = target;
    ctx.neighbors = std::move(all);
    return ctx;
}

// Samples ceil(fraction * |known|) of each neighbor's known ratings. The
// per-neighbor draw is seeded with
// stable_seed(seed_base, "sample|t=<target>|n=<neighbor>"), so results do
// not depend on processing order, and for a fixed seed the samples are
// nested across fractions (the sample at f is a prefix of the shuffled row,
// so f=0.25 subset of f=0.5 subset of ... f=1). Sampled lists are stored in
// item-id order.
inline NeighborContext sample_neighbor_ratings(const KnownSnapshot& snap, const NeighborContext& ctx,
                                               double fraction, std::uint64_t seed_base) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw ValidationError("sample_neighbor_ratings: fraction must be in (0,1]");
    }
    NeighborContext out;
    out.target = ctx.target;
    out.neighbors = ctx.neighbors;
    out.fraction = fraction;
    out.sampled_ratings.resize(ctx.neighbors.size());
    for (std::size_t n = 0; n < ctx.neighbors.size(); ++n) {
        const UserId neighbor = ctx.neighbors[n].user;
        const auto& row = snap.user_ratings[neighbor];
        const std::size_t want = sample_count(fraction, row.size());
        std::vector<std::uint32_t> order(row.size());
        for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
        SeededRng rng(stable_seed(seed_base, "sample|t=" + std::to_string(ctx.target) +
                                                 "|n=" + std::to_string(neighbor)));
        rng.shuffle(order);
        auto& sampled = out.sampled_ratings[n];
        sampled.reserve(want);
        for (std::size_t i = 0; i < want; ++i) sampled.push_back(row[order[i]]);
        std::sort(sampled.begin(), sampled.end());
    }
    return out;
}

// Per-item rater count and mean over known ratings only.
inline PopularityStats popularity_stats(const KnownSnapshot& snap) {
    PopularityStats stats;
    stats.count.assign(snap.n_items, 0);
    stats.avg.assign(snap.n_items, 0.0);
    std::vector<double> sum(snap.n_items, 0.0);
    for (UserId u = 0; u < snap.n_users; ++u) {
        for (const auto& [item, rating] : snap.user_ratings[u]) {
            ++stats.count[item];
            sum[item] += rating;
        }
    }
    for (ItemId i = 0; i < snap.n_items; ++i) {
        if (stats.count[i] > 0) stats.avg[i] = sum[i] / stats.count[i];
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Neighbor cache file: one line per target,
//   <target> <neighbor>:<similarity> <neighbor>:<similarity> ...
// with similarities at fixed 6-decimal precision. Neighbors for any k' <= k
// are a prefix of the stored list.
// ---------------------------------------------------------------------------

inline void save_neighbor_cache(const std::vector<NeighborContext>& contexts, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write neighbor cache: " + path);
    for (const auto& ctx : contexts) {
        out << ctx.target;
        for (const auto& n : ctx.neighbors) {
            out << ' ' << n.user << ':' << format_fixed(n.similarity, 6);
        }
        out << '\n';
    }
}

inline std::unordered_map<UserId, NeighborContext> load_neighbor_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open neighbor cache: " + path);
    std::unordered_map<UserId, NeighborContext> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_string(line, " ");
        NeighborContext ctx;
        std::int64_t target = 0;
        if (!detail::parse_i64(fields[0], target)) {
            throw ParseError("neighbor cache line " + std::to_string(line_no) + ": bad target id");
        }
        ctx.target = static_cast<UserId>(target);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const auto parts = split_string(fields[i], ":");
            std::int64_t user = 0;
            if (parts.size() != 2 || !detail::parse_i64(parts[0], user)) {
                throw ParseError("neighbor cache line " + std::to_string(line_no) + ": bad pair '" + fields[i] + "'");
            }
            ctx.neighbors.push_back({static_cast<UserId>(user), std::stod(parts[1])});
        }
        out.emplace(ctx.target, std::move(ctx));
    }
    return out;
}

}  // namespace ragrec
