#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragrec/common.hpp"
#include "ragrec/promptgen.hpp"
#include "ragrec/retrieval.hpp"

namespace ragrec {

enum class GatewayErrorKind {
    timeout,
    rate_limited,
    server_error,
    bad_request,
    transport,
    malformed_response,
};

inline std::string_view gateway_error_name(GatewayErrorKind k) {
    switch (k) {
        case GatewayErrorKind::timeout: return "timeout";
        case GatewayErrorKind::rate_limited: return "rate_limited";
        case GatewayErrorKind::server_error: return "server_error";
        case GatewayErrorKind::bad_request: return "bad_request";
        case GatewayErrorKind::transport: return "transport";
        case GatewayErrorKind::malformed_response: return "malformed_response";
    }
    return "unknown";
}

// Rate limits, server errors and connection failures are worth retrying;
// timeouts and request/response defects are not.
inline bool gateway_error_retryable(GatewayErrorKind k) {
    return k == GatewayErrorKind::rate_limited || k == GatewayErrorKind::server_error ||
           k == GatewayErrorKind::transport;
}

inline GatewayErrorKind classify_http_status(int status) {
    if (status == 429) return GatewayErrorKind::rate_limited;
    if (status >= 500 && status <= 599) return GatewayErrorKind::server_error;
    if (status >= 400 && status <= 499) return GatewayErrorKind::bad_request;
    return GatewayErrorKind::transport;
}

struct GatewayError : Error {
    GatewayErrorKind kind;
    GatewayError(GatewayErrorKind k, const std::string& msg)
        : Error(std::string(gateway_error_name(k)) + ": " + msg), kind(k) {}
};

// Raw backend reply. latency_ms, when set, is a backend-authored figure
// (mock backends report a deterministic synthetic latency so result files
// are byte-stable); otherwise the gateway records the measured round trip.
struct BackendReply {
    std::string text;
    std::optional<long> prompt_tokens;
    std::optional<long> completion_tokens;
    std::optional<double> latency_ms;
};

struct CompletionResult {
    std::string text;
    double latency_ms = 0.0;
    std::optional<long> prompt_tokens;
    std::optional<long> completion_tokens;
    std::string backend_id;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual BackendReply complete(const RenderedPrompt& prompt) = 0;
    virtual std::string id() const = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    double timeout_ms = 30000.0;
    double backoff_base_ms = 1000.0;
    double backoff_factor = 2.0;
    bool jitter = true;
    std::uint64_t jitter_seed = 0;
};

// Dispatches one prompt with exponential backoff on retryable failures.
// Latency covers the successful attempt's round trip.
inline CompletionResult complete_with_retry(ChatBackend& backend, const RenderedPrompt& prompt,
                                            const RetryPolicy& policy) {
    if (policy.timeout_ms <= 0.0) throw GatewayError(GatewayErrorKind::timeout, "timeout budget is zero");
    SeededRng jitter_rng(policy.jitter_seed ? policy.jitter_seed : 0x9e3779b97f4a7c15ULL);
    int attempt = 0;
    while (true) {
        const auto start = std::chrono::steady_clock::now();
        try {
            BackendReply reply = backend.complete(prompt);
            const auto elapsed =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            CompletionResult result;
            result.text = std::move(reply.text);
            result.latency_ms = reply.latency_ms.value_or(elapsed);
            result.prompt_tokens = reply.prompt_tokens;
            result.completion_tokens = reply.completion_tokens;
            result.backend_id = backend.id();
            return result;
        } catch (const GatewayError& e) {
            if (!gateway_error_retryable(e.kind) || attempt >= policy.max_retries) throw;
            double delay = policy.backoff_base_ms;
            for (int i = 0; i < attempt; ++i) delay *= policy.backoff_factor;
            if (policy.jitter) delay *= 1.0 + 0.25 * jitter_rng.unit();
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
            ++attempt;
        }
    }
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

struct ParsedRecommendation {
    std::vector<ItemId> items;  // <= 10, no duplicates, in range, first-occurrence order
    std::size_t raw_matches = 0;
    std::size_t dropped_out_of_range = 0;
    std::size_t dropped_duplicate = 0;
    bool short_list = false;  // fewer than 10 valid IDs found
};

// Scans the text for maximal digit runs in order; drops out-of-range values
// and duplicates of accepted items; keeps the first 10 valid IDs. Total on
// arbitrary input.
inline ParsedRecommendation parse_recommendations(std::string_view text, std::uint32_t n_items) {
    ParsedRecommendation out;
    std::unordered_set<ItemId> accepted;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::uint64_t value = 0;
        bool overflow = false;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            if (value > 1000000000000ULL) {
                overflow = true;
            } else {
                value = value * 10 + static_cast<std::uint64_t>(text[i] - '0');
            }
            ++i;
        }
        ++out.raw_matches;
        if (overflow || value >= n_items) {
            ++out.dropped_out_of_range;
            continue;
        }
        const auto item = static_cast<ItemId>(value);
        if (accepted.count(item)) {
            ++out.dropped_duplicate;
            continue;
        }
        if (out.items.size() >= 10) continue;  // counted in raw_matches only
        accepted.insert(item);
        out.items.push_back(item);
    }
    out.short_list = out.items.size() < 10;
    return out;
}

// ---------------------------------------------------------------------------
// Mock backends
//
// All mocks answer with a comma-separated ID list and report a
// deterministic synthetic latency derived from the prompt size, so runs are
// reproducible regardless of scheduling.
// ---------------------------------------------------------------------------

enum class MockKind { oracle_leak, popularity, random, echo };

inline MockKind mock_kind_from_name(std::string_view name) {
    if (name == "oracle_leak") return MockKind::oracle_leak;
    if (name == "popularity") return MockKind::popularity;
    if (name == "random") return MockKind::random;
    if (name == "echo") return MockKind::echo;
    throw ConfigError("unknown mock backend kind: " + std::string(name));
}

// Per-user data a mock needs to answer: known/masked item sets plus a
// global popularity ordering (most-rated first, ties by item id).
struct MockContext {
    std::uint32_t n_items = 0;
    std::unordered_map<UserId, std::vector<ItemId>> known_items;
    std::unordered_map<UserId, std::vector<ItemId>> masked_items;  // sorted ascending
    std::vector<ItemId> popularity_order;
};

inline MockContext make_mock_context(std::uint32_t n_items, const std::vector<UserSplit>& splits,
                                     const PopularityStats& stats) {
    MockContext ctx;
    ctx.n_items = n_items;
    for (const auto& s : splits) {
        auto& known = ctx.known_items[s.user];
        for (const auto& r : s.known) known.push_back(r.item);
        std::sort(known.begin(), known.end());
        auto& masked = ctx.masked_items[s.user];
        for (const auto& r : s.masked) masked.push_back(r.item);
        std::sort(masked.begin(), masked.end());
    }
    std::vector<std::pair<std::uint32_t, ItemId>> by_count;
    for (ItemId i = 0; i < n_items && i < stats.count.size(); ++i) by_count.emplace_back(stats.count[i], i);
    std::sort(by_count.begin(), by_count.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [count, item] : by_count) ctx.popularity_order.push_back(item);
    return ctx;
}

namespace detail {

inline double mock_latency_ms(const RenderedPrompt& prompt) {
    return 1.0 + 0.01 * static_cast<double>(prompt.token_estimate);
}

inline std::string id_reply(const std::vector<ItemId>& items) {
    std::string text = "Recommended movies: ";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) text += ", ";
        text += std::to_string(items[i]);
    }
    return text;
}

inline bool contains(const std::vector<ItemId>& sorted, ItemId item) {
    return std::binary_search(sorted.begin(), sorted.end(), item);
}

}  // namespace detail

// Answers with the target's masked items first (evaluation ceiling), padded
// with the most popular unseen items up to 10.
class OracleLeakBackend final : public ChatBackend {
public:
    explicit OracleLeakBackend(MockContext ctx) : ctx_(std::move(ctx)) {
        if (ctx_.masked_items.empty()) throw ConfigError("oracle_leak mock requires masked sets");
    }

    BackendReply complete(const RenderedPrompt& prompt) override {
        const auto mit = ctx_.masked_items.find(prompt.target);
        if (mit == ctx_.masked_items.end()) {
            throw ConfigError("oracle_leak mock has no masked set for user " + std::to_string(prompt.target));
        }
        std::vector<ItemId> items = mit->second;
        if (items.size() > 10) items.resize(10);
        const auto kit = ctx_.known_items.find(prompt.target);
        static const std::vector<ItemId> kEmpty;
        const auto& known = kit == ctx_.known_items.end() ? kEmpty : kit->second;
        for (ItemId candidate : ctx_.popularity_order) {
            if (items.size() >= 10) break;
            if (detail::contains(known, candidate) || detail::contains(mit->second, candidate)) continue;
            items.push_back(candidate);
        }
        return {detail::id_reply(items), std::nullopt, std::nullopt, detail::mock_latency_ms(prompt)};
    }

    std::string id() const override { return "mock:oracle_leak"; }

private:
    MockContext ctx_;
};

// The 10 most-rated items the target has not rated.
class PopularityBackend final : public ChatBackend {
public:
    explicit PopularityBackend(MockContext ctx) : ctx_(std::move(ctx)) {
        if (ctx_.popularity_order.empty()) throw ConfigError("popularity mock requires popularity stats");
    }

    BackendReply complete(const RenderedPrompt& prompt) override {
        const auto kit = ctx_.known_items.find(prompt.target);
        static const std::vector<ItemId> kEmpty;
        const auto& known = kit == ctx_.known_items.end() ? kEmpty : kit->second;
        std::vector<ItemId> items;
        for (ItemId candidate : ctx_.popularity_order) {
            if (items.size() >= 10) break;
            if (detail::contains(known, candidate)) continue;
            items.push_back(candidate);
        }
        return {detail::id_reply(items), std::nullopt, std::nullopt, detail::mock_latency_ms(prompt)};
    }

    std::string id() const override { return "mock:popularity"; }

private:
    MockContext ctx_;
};

// 10 uniform random unseen items, seeded per target user so output is
// independent of request order.
class RandomBackend final : public ChatBackend {
public:
    RandomBackend(MockContext ctx, std::uint64_t seed) : ctx_(std::move(ctx)), seed_(seed) {
        if (ctx_.n_items == 0) throw ConfigError("random mock requires item count");
    }

    BackendReply complete(const RenderedPrompt& prompt) override {
        const auto kit = ctx_.known_items.find(prompt.target);
        static const std::vector<ItemId> kEmpty;
        const auto& known = kit == ctx_.known_items.end() ? kEmpty : kit->second;
        std::vector<ItemId> unseen;
        unseen.reserve(ctx_.n_items);
        for (ItemId i = 0; i < ctx_.n_items; ++i) {
            if (!detail::contains(known, i)) unseen.push_back(i);
        }
        SeededRng rng(stable_seed(seed_, "mockrand|t=" + std::to_string(prompt.target)));
        const auto idx = rng.sample_indices(static_cast<std::uint32_t>(unseen.size()),
                                            static_cast<std::uint32_t>(std::min<std::size_t>(10, unseen.size())));
        std::vector<ItemId> items;
        items.reserve(idx.size());
        for (auto i : idx) items.push_back(unseen[i]);
        return {detail::id_reply(items), std::nullopt, std::nullopt, detail::mock_latency_ms(prompt)};
    }

    std::string id() const override { return "mock:random"; }

private:
    MockContext ctx_;
    std::uint64_t seed_;
};

class EchoBackend final : public ChatBackend {
public:
    explicit EchoBackend(std::string text) : text_(std::move(text)) {}

    BackendReply complete(const RenderedPrompt& prompt) override {
        return {text_, std::nullopt, std::nullopt, detail::mock_latency_ms(prompt)};
    }

    std::string id() const override { return "mock:echo"; }

private:
    std::string text_;
};

inline std::unique_ptr<ChatBackend> make_mock_backend(MockKind kind, MockContext ctx, std::uint64_t seed,
                                                      const std::string& echo_text = "1, 2, 3") {
    switch (kind) {
        case MockKind::oracle_leak: return std::make_unique<OracleLeakBackend>(std::move(ctx));
        case MockKind::popularity: return std::make_unique<PopularityBackend>(std::move(ctx));
        case MockKind::random: return std::make_unique<RandomBackend>(std::move(ctx), seed);
        case MockKind::echo: return std::make_unique<EchoBackend>(echo_text);
    }
    throw ConfigError("unknown mock kind");
}

}  // namespace ragrec
