#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragrec/common.hpp"
#include "ragrec/promptgen.hpp"

namespace ragrec {

enum class Method { baseline, sentiment, reasoning, full_reasoning, mf };

inline std::string_view method_name(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::sentiment: return "sentiment";
        case Method::reasoning: return "reasoning";
        case Method::full_reasoning: return "full_reasoning";
        case Method::mf: return "mf";
    }
    return "unknown";
}

inline Method method_from_name(std::string_view name) {
    if (name == "mf") return Method::mf;
    return static_cast<Method>(strategy_from_name(name));
}

inline Method method_from_strategy(Strategy s) { return static_cast<Method>(s); }

enum class Outcome { ok, short_list, failed };

inline std::string_view outcome_name(Outcome o) {
    switch (o) {
        case Outcome::ok: return "ok";
        case Outcome::short_list: return "short";
        case Outcome::failed: return "failed";
    }
    return "unknown";
}

inline Outcome outcome_from_name(std::string_view name) {
    if (name == "ok") return Outcome::ok;
    if (name == "short") return Outcome::short_list;
    if (name == "failed") return Outcome::failed;
    throw ValidationError("unknown outcome: " + std::string(name));
}

// One (user, method, k, fraction) trial. Metric fields are absent for
// failed trials. MF trials carry k=0, fraction=0.
struct EvalRecord {
    UserId user = 0;
    std::string group;  // "hot" | "cold"
    Method method = Method::baseline;
    int k = 0;
    double fraction = 0.0;
    std::optional<double> ndcg;
    std::optional<double> hit_score;
    std::optional<double> hit_any;
    std::optional<double> latency_ms;
    std::optional<long> prompt_tokens;
    Outcome outcome = Outcome::ok;
};

namespace detail {

inline void check_scoring_preconditions(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    if (masked.empty()) throw ValidationError("masked set must be non-empty");
    std::unordered_set<ItemId> seen;
    for (auto item : recommended) {
        if (!seen.insert(item).second) {
            throw ValidationError("recommended list contains duplicate item " + std::to_string(item));
        }
    }
}

}  // namespace detail

// Binary-relevance NDCG over the top 10: DCG sums 1/log2(rank+1) at the
// ranks holding masked items; IDCG assumes min(10, |masked|) leading hits.
inline double ndcg_at_10(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    detail::check_scoring_preconditions(recommended, masked);
    const std::size_t depth = std::min<std::size_t>(10, recommended.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (masked.count(recommended[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    const std::size_t ideal = std::min<std::size_t>(10, masked.size());
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

inline std::size_t hits_in_top10(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    const std::size_t depth = std::min<std::size_t>(10, recommended.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth; ++i) {
        if (masked.count(recommended[i])) ++hits;
    }
    return hits;
}

// |top-10 intersect masked| / min(10, |masked|); cold users with few
// masked items can still reach 1.0.
inline double hit_at_10(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    detail::check_scoring_preconditions(recommended, masked);
    const auto hits = hits_in_top10(recommended, masked);
    return static_cast<double>(hits) / static_cast<double>(std::min<std::size_t>(10, masked.size()));
}

// 1.0 iff any masked item appears in the top 10.
inline double hit_any_at_10(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    detail::check_scoring_preconditions(recommended, masked);
    return hits_in_top10(recommended, masked) > 0 ? 1.0 : 0.0;
}

// Flat |top-10 intersect masked| / 10 variant, available for comparison.
inline double hit_flat10_at_10(const std::vector<ItemId>& recommended, const std::set<ItemId>& masked) {
    detail::check_scoring_preconditions(recommended, masked);
    return static_cast<double>(hits_in_top10(recommended, masked)) / 10.0;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

enum class GroupField { group, method, k, fraction };

struct AggregateKey {
    std::string group;
    std::string method;
    int k = -1;
    double fraction = -1.0;

    auto operator<=>(const AggregateKey&) const = default;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample stddev, 0 when fewer than 2 values
    std::size_t count = 0;
};

struct AggregateRow {
    AggregateKey key;
    std::size_t total = 0;
    std::size_t failed = 0;
    double failure_rate = 0.0;
    MetricSummary ndcg, hit_score, hit_any, latency_ms, prompt_tokens;
};

namespace detail {

inline MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return s;
}

}  // namespace detail

// Mean/stddev/count per group cell. Failed trials are excluded from metric
// means but drive the failure-rate column. Rows come out sorted by key.
inline std::vector<AggregateRow> aggregate(const std::vector<EvalRecord>& records,
                                           const std::vector<GroupField>& group_by) {
    const auto uses = [&](GroupField f) {
        return std::find(group_by.begin(), group_by.end(), f) != group_by.end();
    };
    struct Bucket {
        std::vector<double> ndcg, hit, hit_any, latency, tokens;
        std::size_t total = 0, failed = 0;
    };
    std::map<AggregateKey, Bucket> cells;
    for (const auto& r : records) {
        AggregateKey key;
        if (uses(GroupField::group)) key.group = r.group;
        if (uses(GroupField::method)) key.method = method_name(r.method);
        if (uses(GroupField::k)) key.k = r.k;
        if (uses(GroupField::fraction)) key.fraction = r.fraction;
        auto& cell = cells[key];
        ++cell.total;
        if (r.outcome == Outcome::failed) {
            ++cell.failed;
            continue;
        }
        if (r.ndcg) cell.ndcg.push_back(*r.ndcg);
        if (r.hit_score) cell.hit.push_back(*r.hit_score);
        if (r.hit_any) cell.hit_any.push_back(*r.hit_any);
        if (r.latency_ms) cell.latency.push_back(*r.latency_ms);
        if (r.prompt_tokens) cell.tokens.push_back(static_cast<double>(*r.prompt_tokens));
    }

    std::vector<AggregateRow> rows;
    rows.reserve(cells.size());
    for (const auto& [key, cell] : cells) {
        AggregateRow row;
        row.key = key;
        row.total = cell.total;
        row.failed = cell.failed;
        row.failure_rate = cell.total ? static_cast<double>(cell.failed) / static_cast<double>(cell.total) : 0.0;
        row.ndcg = detail::summarize(cell.ndcg);
        row.hit_score = detail::summarize(cell.hit);
        row.hit_any = detail::summarize(cell.hit_any);
        row.latency_ms = detail::summarize(cell.latency);
        row.prompt_tokens = detail::summarize(cell.tokens);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Empirical CDF
// ---------------------------------------------------------------------------

struct CdfSeries {
    std::vector<double> values;         // distinct, ascending
    std::vector<double> cum_fraction;   // strictly increasing, ends at 1.0
};

inline CdfSeries cdf(std::vector<double> values) {
    if (values.empty()) throw ValidationError("cdf: empty value list");
    std::sort(values.begin(), values.end());
    CdfSeries series;
    const auto n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && values[i + 1] == values[i]) continue;  // step at last duplicate
        series.values.push_back(values[i]);
        series.cum_fraction.push_back(static_cast<double>(i + 1) / static_cast<double>(n));
    }
    return series;
}

// ---------------------------------------------------------------------------
// CSV serialization
//
// Results CSV columns, exactly:
//   user,group,method,k,fraction,ndcg,hit_score,hit_any,latency_ms,prompt_tokens,outcome
// preceded by a "# config_hash=<hex>" comment line. Absent metric values
// (failed trials) are empty cells.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kResultsCsvHeader =
    "user,group,method,k,fraction,ndcg,hit_score,hit_any,latency_ms,prompt_tokens,outcome";

namespace detail {

inline std::string opt_cell(const std::optional<double>& v, int decimals) {
    return v ? format_fixed(*v, decimals) : std::string();
}

}  // namespace detail

inline std::string results_csv_row(const EvalRecord& r) {
    std::string row = std::to_string(r.user);
    row += ',';
    row += r.group;
    row += ',';
    row += method_name(r.method);
    row += ',';
    row += std::to_string(r.k);
    row += ',';
    row += format_compact(r.fraction);
    row += ',';
    row += detail::opt_cell(r.ndcg, 6);
    row += ',';
    row += detail::opt_cell(r.hit_score, 6);
    row += ',';
    row += r.hit_any ? format_compact(*r.hit_any) : std::string();
    row += ',';
    row += detail::opt_cell(r.latency_ms, 3);
    row += ',';
    row += r.prompt_tokens ? std::to_string(*r.prompt_tokens) : std::string();
    row += ',';
    row += outcome_name(r.outcome);
    return row;
}

inline void write_results_csv(const std::vector<EvalRecord>& records, const std::string& path,
                              const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write results CSV: " + path);
    out << "# config_hash=" << config_hash << '\n';
    out << kResultsCsvHeader << '\n';
    for (const auto& r : records) out << results_csv_row(r) << '\n';
}

struct ResultsFile {
    std::string config_hash;
    std::vector<EvalRecord> records;
};

inline ResultsFile read_results_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open results CSV: " + path);
    ResultsFile out;
    std::string line;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# config_hash=", 0) == 0) {
            out.config_hash = line.substr(std::string_view("# config_hash=").size());
            continue;
        }
        if (line[0] == '#') continue;
        if (!header_seen) {
            const auto have = split_string(line, ",");
            const auto want = split_string(kResultsCsvHeader, ",");
            for (const auto& col : want) {
                if (std::find(have.begin(), have.end(), col) == have.end()) {
                    throw ValidationError("results CSV missing column: " + col);
                }
            }
            if (have.size() != want.size()) throw ValidationError("results CSV has unexpected extra columns");
            header_seen = true;
            continue;
        }
        const auto f = split_string(line, ",");
        if (f.size() != 11) {
            throw ParseError("results CSV line " + std::to_string(line_no) + ": expected 11 fields");
        }
        EvalRecord r;
        r.user = static_cast<UserId>(std::stoul(f[0]));
        r.group = f[1];
        r.method = method_from_name(f[2]);
        r.k = std::stoi(f[3]);
        r.fraction = std::stod(f[4]);
        if (!f[5].empty()) r.ndcg = std::stod(f[5]);
        if (!f[6].empty()) r.hit_score = std::stod(f[6]);
        if (!f[7].empty()) r.hit_any = std::stod(f[7]);
        if (!f[8].empty()) r.latency_ms = std::stod(f[8]);
        if (!f[9].empty()) r.prompt_tokens = std::stol(f[9]);
        r.outcome = outcome_from_name(f[10]);
        out.records.push_back(std::move(r));
    }
    if (!header_seen) throw ValidationError("results CSV missing header row");
    return out;
}

inline void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path,
                                const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write aggregate CSV: " + path);
    out << "# config_hash=" << config_hash << '\n';
    out << "group,method,k,fraction,count,failed,failure_rate,"
           "ndcg_mean,ndcg_std,hit_mean,hit_std,hit_any_mean,latency_ms_mean,latency_ms_std,prompt_tokens_mean\n";
    for (const auto& row : rows) {
        out << row.key.group << ',' << row.key.method << ',' << row.key.k << ','
            << format_compact(row.key.fraction) << ',' << row.total << ',' << row.failed << ','
            << format_fixed(row.failure_rate, 6) << ',' << format_fixed(row.ndcg.mean, 6) << ','
            << format_fixed(row.ndcg.stddev, 6) << ',' << format_fixed(row.hit_score.mean, 6) << ','
            << format_fixed(row.hit_score.stddev, 6) << ',' << format_fixed(row.hit_any.mean, 6) << ','
            << format_fixed(row.latency_ms.mean, 3) << ',' << format_fixed(row.latency_ms.stddev, 3) << ','
            << format_fixed(row.prompt_tokens.mean, 2) << '\n';
    }
}

inline void write_cdf_csv(const CdfSeries& series, const std::string& path, const std::string& config_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write CDF CSV: " + path);
    out << "# config_hash=" << config_hash << '\n';
    out << "value,cum_fraction\n";
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        out << format_compact(series.values[i]) << ',' << format_fixed(series.cum_fraction[i], 6) << '\n';
    }
}

}  // namespace ragrec
