#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ragrec/common.hpp"
#include "ragrec/retrieval.hpp"

namespace ragrec {

enum class Strategy { baseline, sentiment, reasoning, full_reasoning };

inline std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::baseline: return "baseline";
        case Strategy::sentiment: return "sentiment";
        case Strategy::reasoning: return "reasoning";
        case Strategy::full_reasoning: return "full_reasoning";
    }
    return "unknown";
}

inline Strategy strategy_from_name(std::string_view name) {
    if (name == "baseline") return Strategy::baseline;
    if (name == "sentiment") return Strategy::sentiment;
    if (name == "reasoning") return Strategy::reasoning;
    if (name == "full_reasoning") return Strategy::full_reasoning;
    throw ValidationError("unknown strategy: " + std::string(name));
}

// Any wording change to the templates below must bump this version; runs
// record it so result rows from different template generations cannot be
// mixed silently.
inline constexpr std::string_view kTemplateVersion = "pv1";

inline constexpr std::string_view kBaselineClosing =
    "Do not select movies that user A has already rated. Which 10 movies should user A watch next that they "
    "haven't seen?";
inline constexpr std::string_view kReasoningDirective =
    "Reason based on the patterns above: which 10 movies should user A watch next that they haven't seen?";
inline constexpr std::string_view kFullReasoningDirective =
    "Reason based on the patterns above and the popularity statistics: which 10 movies should user A watch next "
    "that they haven't seen?";

struct RenderedPrompt {
    Strategy strategy = Strategy::baseline;
    std::string text;
    std::vector<ItemId> candidate_items;  // sorted ascending
    int token_estimate = 0;
    UserId target = 0;
    std::size_t k = 0;  // neighbors present in the context
    double fraction = 1.0;
};

struct SentimentBuckets {
    std::vector<ItemId> liked;     // ratings >= 4
    std::vector<ItemId> neutral;   // rating == 3
    std::vector<ItemId> disliked;  // ratings <= 2
};

// Whitespace word count times 1.3, rounded up. A live backend's reported
// prompt-token usage supersedes this estimate in eval records.
inline int estimate_tokens(std::string_view text) {
    const std::size_t words = whitespace_token_count(text);
    if (words == 0) return 0;
    return static_cast<int>(std::ceil(1.3 * static_cast<double>(words) - 1e-9));
}

namespace detail {

inline std::string item_list(const SparseRatings& ratings) {
    std::string out;
    for (std::size_t i = 0; i < ratings.size(); ++i) {
        if (i) out += ", ";
        out += "M" + std::to_string(ratings[i].first) + " (" + std::to_string(ratings[i].second) + ")";
    }
    return out;
}

inline std::string id_list(const std::vector<ItemId>& ids) {
    if (ids.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += "M" + std::to_string(ids[i]);
    }
    return out;
}

inline std::string prompt_header(const SparseRatings& target_known, std::uint32_t n_items) {
    std::string text = "You are a movie recommender system. Valid movie IDs are integers from 0 to " +
                       std::to_string(n_items == 0 ? 0 : n_items - 1) + ".\n";
    text += "Target user A has rated the following movies: " + item_list(target_known) + "\n";
    return text;
}

inline std::set<ItemId> known_item_set(const SparseRatings& target_known) {
    std::set<ItemId> s;
    for (const auto& [item, rating] : target_known) s.insert(item);
    return s;
}

inline RenderedPrompt finish(Strategy strategy, std::string text, std::set<ItemId> candidates,
                             const NeighborContext& ctx) {
    RenderedPrompt p;
    p.strategy = strategy;
    p.text = std::move(text);
    p.candidate_items.assign(candidates.begin(), candidates.end());
    p.token_estimate = estimate_tokens(p.text);
    p.target = ctx.target;
    p.k = ctx.neighbors.size();
    p.fraction = ctx.fraction;
    return p;
}

}  // namespace detail

// Unfiltered strategy: every neighbor's sampled ratings verbatim, items the
// target has already rated included.
inline RenderedPrompt render_baseline(const NeighborContext& ctx, const SparseRatings& target_known,
                                      std::uint32_t n_items) {
    std::string body;
    std::set<ItemId> candidates;
    std::size_t rendered = 0;
    for (std::size_t n = 0; n < ctx.neighbors.size(); ++n) {
        const auto& sampled = n < ctx.sampled_ratings.size() ? ctx.sampled_ratings[n] : SparseRatings{};
        if (sampled.empty()) continue;
        body += "User " + std::to_string(ctx.neighbors[n].user) + " rated: " + detail::item_list(sampled) + "\n";
        for (const auto& [item, rating] : sampled) candidates.insert(item);
        ++rendered;
    }
    if (rendered == 0) throw ValidationError("no collaborative context");

    std::string text = detail::prompt_header(target_known, n_items);
    text += "Top-" + std::to_string(rendered) + " similar users have rated:\n";
    text += body;
    text += kBaselineClosing;
    return detail::finish(Strategy::baseline, std::move(text), std::move(candidates), ctx);
}

// Buckets per individual (item, rating) pair; an item rated 5 by one
// neighbor and 1 by another shows up as both Liked and Disliked.
inline SentimentBuckets bucket_by_sentiment(const std::vector<std::pair<ItemId, int>>& ratings) {
    std::set<ItemId> liked, neutral, disliked;
    for (const auto& [item, rating] : ratings) {
        if (rating >= 4) {
            liked.insert(item);
        } else if (rating == 3) {
            neutral.insert(item);
        } else {
            disliked.insert(item);
        }
    }
    SentimentBuckets b;
    b.liked.assign(liked.begin(), liked.end());
    b.neutral.assign(neutral.begin(), neutral.end());
    b.disliked.assign(disliked.begin(), disliked.end());
    return b;
}

inline RenderedPrompt render_sentiment(const NeighborContext& ctx, const SparseRatings& target_known,
                                       std::uint32_t n_items) {
    const auto known = detail::known_item_set(target_known);
    std::vector<std::pair<ItemId, int>> unseen;
    for (const auto& sampled : ctx.sampled_ratings) {
        for (const auto& [item, rating] : sampled) {
            if (!known.count(item)) unseen.emplace_back(item, rating);
        }
    }
    if (unseen.empty()) throw ValidationError("no unseen candidates");

    const auto buckets = bucket_by_sentiment(unseen);
    std::set<ItemId> candidates;
    for (const auto& [item, rating] : unseen) candidates.insert(item);

    std::string text = detail::prompt_header(target_known, n_items);
    text += "Movies rated by the top-" + std::to_string(ctx.neighbors.size()) +
            " similar users, excluding movies user A has rated, grouped by sentiment:\n";
    text += "Liked: " + detail::id_list(buckets.liked) + "\n";
    text += "Neutral: " + detail::id_list(buckets.neutral) + "\n";
    text += "Disliked: " + detail::id_list(buckets.disliked) + "\n";
    text += kBaselineClosing;
    return detail::finish(Strategy::sentiment, std::move(text), std::move(candidates), ctx);
}

namespace detail {

// Shared by the two reasoning variants: neighbor lines with target-seen
// items removed, plus the unseen candidate set.
inline std::pair<std::string, std::set<ItemId>> reasoning_body(const NeighborContext& ctx,
                                                               const std::set<ItemId>& known) {
    std::string body;
    std::set<ItemId> candidates;
    for (std::size_t n = 0; n < ctx.neighbors.size(); ++n) {
        const auto& sampled = n < ctx.sampled_ratings.size() ? ctx.sampled_ratings[n] : SparseRatings{};
        SparseRatings filtered;
        for (const auto& [item, rating] : sampled) {
            if (!known.count(item)) filtered.emplace_back(item, rating);
        }
        if (filtered.empty()) continue;
        body += "User " + std::to_string(ctx.neighbors[n].user) + " rated: " + item_list(filtered) + "\n";
        for (const auto& [item, rating] : filtered) candidates.insert(item);
    }
    return {std::move(body), std::move(candidates)};
}

}  // namespace detail

inline RenderedPrompt render_reasoning(const NeighborContext& ctx, const SparseRatings& target_known,
                                       std::uint32_t n_items) {
    const auto known = detail::known_item_set(target_known);
    auto [body, candidates] = detail::reasoning_body(ctx, known);
    if (candidates.empty()) throw ValidationError("no unseen candidates");

    std::string text = detail::prompt_header(target_known, n_items);
    text += "Top-" + std::to_string(ctx.neighbors.size()) +
            " similar users to user A have collectively rated the following unseen movies:\n";
    text += body;
    text += kReasoningDirective;
    return detail::finish(Strategy::reasoning, std::move(text), std::move(candidates), ctx);
}

// Reasoning prompt augmented with per-candidate popularity statistics from
// the known ratings. Candidates no user has rated are left out of the stats
// block.
inline RenderedPrompt render_full_reasoning(const NeighborContext& ctx, const SparseRatings& target_known,
                                            std::uint32_t n_items, const PopularityStats& stats) {
    const auto known = detail::known_item_set(target_known);
    auto [body, candidates] = detail::reasoning_body(ctx, known);
    if (candidates.empty()) throw ValidationError("no unseen candidates");

    std::string text = detail::prompt_header(target_known, n_items);
    text += "Top-" + std::to_string(ctx.neighbors.size()) +
            " similar users to user A have collectively rated the following unseen movies:\n";
    text += body;
    text += "Movie popularity stats:\n";
    for (ItemId item : candidates) {
        if (!stats.has(item)) continue;
        text += "M" + std::to_string(item) + " - Count: " + std::to_string(stats.count[item]) +
                ", AvgRating: " + format_fixed(stats.avg[item], 1) + "\n";
    }
    text += kFullReasoningDirective;
    return detail::finish(Strategy::full_reasoning, std::move(text), std::move(candidates), ctx);
}

inline RenderedPrompt render_strategy(Strategy s, const NeighborContext& ctx, const SparseRatings& target_known,
                                      std::uint32_t n_items, const PopularityStats& stats) {
    switch (s) {
        case Strategy::baseline: return render_baseline(ctx, target_known, n_items);
        case Strategy::sentiment: return render_sentiment(ctx, target_known, n_items);
        case Strategy::reasoning: return render_reasoning(ctx, target_known, n_items);
        case Strategy::full_reasoning: return render_full_reasoning(ctx, target_known, n_items, stats);
    }
    throw ValidationError("unknown strategy");
}

}  // namespace ragrec
