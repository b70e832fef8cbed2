#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragrec/common.hpp"

namespace ragrec {

struct MfRating {
    UserId user = 0;
    ItemId item = 0;
    double value = 0.0;
};

struct MfConfig {
    int d = 32;
    double learning_rate = 0.01;
    double l2 = 0.05;
    int epochs = 200;
    std::uint64_t seed = 1;
    std::uint64_t shuffle_seed = 0;  // 0: derived from seed
    double val_fraction = 0.1;       // internal hold-out for early stopping
    int early_stop_patience = 20;
};

struct DivergenceError : Error {
    using Error::Error;
};

// Biased matrix factorization:
//   prediction(u, i) = global_mean + user_bias[u] + item_bias[i]
//                      + dot(user_factors[u], item_factors[i])
struct MfModel {
    int d = 0;
    std::uint32_t n_users = 0;
    std::uint32_t n_items = 0;
    double global_mean = 0.0;
    std::vector<double> user_factors;  // n_users x d, row-major
    std::vector<double> item_factors;  // n_items x d, row-major
    std::vector<double> user_bias;
    std::vector<double> item_bias;

    double predict_unchecked(UserId u, ItemId i) const {
        const double* pu = user_factors.data() + static_cast<std::size_t>(u) * d;
        const double* qi = item_factors.data() + static_cast<std::size_t>(i) * d;
        double dot = 0.0;
        for (int f = 0; f < d; ++f) dot += pu[f] * qi[f];
        return global_mean + user_bias[u] + item_bias[i] + dot;
    }
};

inline double mf_predict(const MfModel& m, UserId u, ItemId i) {
    if (u >= m.n_users) throw ValidationError("mf_predict: user " + std::to_string(u) + " out of range");
    if (i >= m.n_items) throw ValidationError("mf_predict: item " + std::to_string(i) + " out of range");
    return m.predict_unchecked(u, i);
}

// Per-sample objective used by the SGD updates:
//   L = (r - prediction)^2 + l2 * (|p_u|^2 + |q_i|^2 + b_u^2 + b_i^2)
inline double mf_sample_loss(const MfModel& m, const MfRating& r, double l2) {
    const double err = r.value - m.predict_unchecked(r.user, r.item);
    const double* pu = m.user_factors.data() + static_cast<std::size_t>(r.user) * m.d;
    const double* qi = m.item_factors.data() + static_cast<std::size_t>(r.item) * m.d;
    double reg = m.user_bias[r.user] * m.user_bias[r.user] + m.item_bias[r.item] * m.item_bias[r.item];
    for (int f = 0; f < m.d; ++f) reg += pu[f] * pu[f] + qi[f] * qi[f];
    return err * err + l2 * reg;
}

// Analytic gradient of mf_sample_loss with respect to the touched
// parameters. grad_pu and grad_qi must have length d. Returns the residual
// r - prediction.
inline double mf_sample_gradient(const MfModel& m, const MfRating& r, double l2, double& grad_bu, double& grad_bi,
                                 std::span<double> grad_pu, std::span<double> grad_qi) {
    const double err = r.value - m.predict_unchecked(r.user, r.item);
    const double* pu = m.user_factors.data() + static_cast<std::size_t>(r.user) * m.d;
    const double* qi = m.item_factors.data() + static_cast<std::size_t>(r.item) * m.d;
    grad_bu = -2.0 * err + 2.0 * l2 * m.user_bias[r.user];
    grad_bi = -2.0 * err + 2.0 * l2 * m.item_bias[r.item];
    for (int f = 0; f < m.d; ++f) {
        grad_pu[f] = -2.0 * err * qi[f] + 2.0 * l2 * pu[f];
        grad_qi[f] = -2.0 * err * pu[f] + 2.0 * l2 * qi[f];
    }
    return err;
}

inline double mf_rmse(const MfModel& m, const std::vector<MfRating>& ratings) {
    if (ratings.empty()) return 0.0;
    double sq = 0.0;
    for (const auto& r : ratings) {
        const double err = r.value - m.predict_unchecked(r.user, r.item);
        sq += err * err;
    }
    return std::sqrt(sq / static_cast<double>(ratings.size()));
}

// SGD training over the squared error with L2 regularization. Factor
// entries start from a seeded Gaussian (std 0.1), biases from zero, and the
// sample order is reshuffled each epoch. A fraction of the input is held
// out internally for early stopping; the parameters with the best
// validation RMSE are kept. Training halts with DivergenceError when the
// epoch loss goes NaN, grows 10x above its running minimum, or fails to be
// non-increasing over a 50-epoch window.
inline MfModel train_mf(std::uint32_t n_users, std::uint32_t n_items, const std::vector<MfRating>& ratings,
                        const MfConfig& cfg) {
    if (ratings.empty()) throw ValidationError("train_mf: empty rating list");
    if (cfg.d < 1) throw ValidationError("train_mf: latent dimension must be at least 1");
    for (const auto& r : ratings) {
        if (r.user >= n_users || r.item >= n_items) throw ValidationError("train_mf: rating index out of range");
    }

    MfModel m;
    m.d = cfg.d;
    m.n_users = n_users;
    m.n_items = n_items;
    double sum = 0.0;
    for (const auto& r : ratings) sum += r.value;
    m.global_mean = sum / static_cast<double>(ratings.size());
    m.user_bias.assign(n_users, 0.0);
    m.item_bias.assign(n_items, 0.0);
    m.user_factors.resize(static_cast<std::size_t>(n_users) * cfg.d);
    m.item_factors.resize(static_cast<std::size_t>(n_items) * cfg.d);
    {
        SeededRng init_rng(stable_seed(cfg.seed, "mf|init"));
        for (auto& v : m.user_factors) v = 0.1 * init_rng.gaussian();
        for (auto& v : m.item_factors) v = 0.1 * init_rng.gaussian();
    }

    // Internal validation split for early stopping.
    std::vector<MfRating> train = ratings, val;
    const auto n_val = static_cast<std::uint32_t>(cfg.val_fraction * static_cast<double>(ratings.size()));
    if (n_val > 0 && n_val < ratings.size()) {
        SeededRng val_rng(stable_seed(cfg.seed, "mf|val"));
        auto idx = val_rng.sample_indices(static_cast<std::uint32_t>(ratings.size()), n_val);
        std::vector<bool> in_val(ratings.size(), false);
        for (auto i : idx) in_val[i] = true;
        train.clear();
        for (std::size_t i = 0; i < ratings.size(); ++i) {
            (in_val[i] ? val : train).push_back(ratings[i]);
        }
    }
    if (train.empty()) {
        train = ratings;
        val.clear();
    }

    const std::uint64_t shuffle_seed = cfg.shuffle_seed ? cfg.shuffle_seed : stable_seed(cfg.seed, "mf|shuffle");
    SeededRng shuffle_rng(shuffle_seed);

    std::vector<double> grad_pu(cfg.d), grad_qi(cfg.d);
    std::vector<double> loss_history;
    double min_loss = std::numeric_limits<double>::infinity();
    double best_val = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;
    MfModel best = m;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(train);
        double sq_err = 0.0;
        for (const auto& r : train) {
            double grad_bu = 0.0, grad_bi = 0.0;
            const double err = mf_sample_gradient(m, r, cfg.l2, grad_bu, grad_bi, grad_pu, grad_qi);
            sq_err += err * err;
            m.user_bias[r.user] -= cfg.learning_rate * grad_bu;
            m.item_bias[r.item] -= cfg.learning_rate * grad_bi;
            double* pu = m.user_factors.data() + static_cast<std::size_t>(r.user) * cfg.d;
            double* qi = m.item_factors.data() + static_cast<std::size_t>(r.item) * cfg.d;
            for (int f = 0; f < cfg.d; ++f) {
                pu[f] -= cfg.learning_rate * grad_pu[f];
                qi[f] -= cfg.learning_rate * grad_qi[f];
            }
        }
        const double epoch_loss = sq_err / static_cast<double>(train.size());
        if (!std::isfinite(epoch_loss)) {
            throw DivergenceError("mf training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        }
        if (epoch_loss > 10.0 * min_loss) {
            throw DivergenceError("mf training diverged (loss grew 10x) at epoch " + std::to_string(epoch));
        }
        loss_history.push_back(epoch_loss);
        if (loss_history.size() > 50 && epoch_loss > loss_history[loss_history.size() - 51]) {
            throw DivergenceError("mf training loss increased over a 50-epoch window at epoch " +
                                  std::to_string(epoch));
        }
        min_loss = std::min(min_loss, epoch_loss);

        if (!val.empty()) {
            const double val_rmse = mf_rmse(m, val);
            if (val_rmse < best_val - 1e-9) {
                best_val = val_rmse;
                best = m;
                stale_epochs = 0;
            } else if (++stale_epochs >= cfg.early_stop_patience) {
                return best;
            }
        }
    }
    return val.empty() ? m : best;
}

struct RecommendList {
    std::vector<ItemId> items;
    bool short_list = false;  // fewer than 10 unseen items existed
};

// Top predicted unseen items, ties broken by item id ascending.
inline RecommendList recommend_top10(const MfModel& m, UserId user, const std::unordered_set<ItemId>& known_items) {
    if (user >= m.n_users) throw ValidationError("recommend_top10: user out of range");
    std::vector<std::pair<double, ItemId>> scored;
    scored.reserve(m.n_items);
    for (ItemId i = 0; i < m.n_items; ++i) {
        if (known_items.count(i)) continue;
        scored.emplace_back(m.predict_unchecked(user, i), i);
    }
    const std::size_t take = std::min<std::size_t>(10, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    RecommendList out;
    out.short_list = scored.size() < 10;
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.items.push_back(scored[i].second);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint file: little-endian u64 header (d, n_users, n_items), f64
// global_mean, then row-major user_factors, item_factors, user_bias,
// item_bias as 8-byte reals.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::ifstream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ofstream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(out, bits);
}

inline double read_f64(std::ifstream& in) {
    const std::uint64_t bits = read_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace detail

inline void save_mf_checkpoint(const MfModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint: " + path);
    detail::write_u64(out, static_cast<std::uint64_t>(m.d));
    detail::write_u64(out, m.n_users);
    detail::write_u64(out, m.n_items);
    detail::write_f64(out, m.global_mean);
    for (double v : m.user_factors) detail::write_f64(out, v);
    for (double v : m.item_factors) detail::write_f64(out, v);
    for (double v : m.user_bias) detail::write_f64(out, v);
    for (double v : m.item_bias) detail::write_f64(out, v);
}

inline MfModel load_mf_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint: " + path);
    MfModel m;
    m.d = static_cast<int>(detail::read_u64(in));
    m.n_users = static_cast<std::uint32_t>(detail::read_u64(in));
    m.n_items = static_cast<std::uint32_t>(detail::read_u64(in));
    m.global_mean = detail::read_f64(in);
    m.user_factors.resize(static_cast<std::size_t>(m.n_users) * m.d);
    m.item_factors.resize(static_cast<std::size_t>(m.n_items) * m.d);
    m.user_bias.resize(m.n_users);
    m.item_bias.resize(m.n_items);
    for (auto& v : m.user_factors) v = detail::read_f64(in);
    for (auto& v : m.item_factors) v = detail::read_f64(in);
    for (auto& v : m.user_bias) v = detail::read_f64(in);
    for (auto& v : m.item_bias) v = detail::read_f64(in);
    if (!in) throw ValidationError("checkpoint truncated: " + path);
    return m;
}

}  // namespace ragrec
