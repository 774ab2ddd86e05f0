#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mmrec/error.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

struct RawRecord {
    std::string user;
    std::string item;
    std::optional<std::uint64_t> timestamp;
};

struct RawInteractions {
    std::vector<RawRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

/// Bijection between string tokens and contiguous indices, one per side.
struct IdMaps {
    std::vector<std::string> user_tokens;  // index -> token
    std::vector<std::string> item_tokens;
    std::unordered_map<std::string, std::int32_t> user_index;  // token -> index
    std::unordered_map<std::string, std::int32_t> item_index;

    std::int32_t n_users() const { return static_cast<std::int32_t>(user_tokens.size()); }
    std::int32_t n_items() const { return static_cast<std::int32_t>(item_tokens.size()); }
};

struct TrainEntry {
    std::int32_t user = 0;
    std::int32_t item = 0;
    std::uint64_t timestamp = 0;
};

struct PairEntry {
    std::int32_t user = 0;
    std::int32_t item = 0;
};

/// Encoded interactions after leave-one-out splitting. Every user holds
/// exactly one test interaction (the most recent one); users with at least
/// three interactions also hold one validation interaction (second most
/// recent) when the split was built with validation enabled.
struct SplitDataset {
    std::int32_t n_users = 0;
    std::int32_t n_items = 0;
    std::vector<TrainEntry> train;      // user-major, time-ascending per user
    std::vector<PairEntry> validation;  // user-ascending
    std::vector<PairEntry> test;        // user-ascending, one per user
    std::vector<std::vector<std::int32_t>> train_pos;  // per user, sorted item ids
    std::vector<std::int32_t> test_item;               // per user; -1 if absent
    std::vector<std::int32_t> validation_item;         // per user; -1 if absent

    bool user_trained_on(std::int32_t user, std::int32_t item) const {
        const auto& pos = train_pos[static_cast<std::size_t>(user)];
        return std::binary_search(pos.begin(), pos.end(), item);
    }
};

struct TrainingExample {
    std::int32_t user = 0;
    std::int32_t item = 0;
    std::int8_t label = 0;
};

namespace detail {

inline std::string_view trim_cr(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    const char sep = line.find('\t') != std::string_view::npos ? '\t' : ',';
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    }
    return true;
}

}  // namespace detail

/// Read an interactions file: one record per line, tab- or comma-separated
/// fields (user, item[, timestamp]). A leading header whose first field is
/// "user" (case-insensitive) is skipped.
inline RawInteractions load_interactions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interactions file: " + path);

    RawInteractions out;
    std::string line;
    std::size_t line_no = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view body = detail::trim_cr(line);
        if (body.empty()) continue;
        const auto fields = detail::split_fields(body);
        if (first_content_line) {
            first_content_line = false;
            if (detail::iequals(fields[0], "user")) continue;
        }
        if (fields.size() != 2 && fields.size() != 3) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 2 or 3 fields, got " +
                             std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty user or item token");
        }
        RawRecord rec;
        rec.user = std::string(fields[0]);
        rec.item = std::string(fields[1]);
        if (fields.size() == 3 && !fields[2].empty()) {
            std::uint64_t ts = 0;
            const auto* begin = fields[2].data();
            const auto* end = begin + fields[2].size();
            const auto [ptr, ec] = std::from_chars(begin, end, ts);
            if (ec != std::errc() || ptr != end) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad timestamp '" +
                                 std::string(fields[2]) + "'");
            }
            rec.timestamp = ts;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

/// Remove duplicate (user, item) pairs keeping the first occurrence, then
/// assign a pseudo-timestamp drawn uniformly from [0, 2^32) to every record
/// that lacks one. Records with real timestamps keep them. Output order is
/// the input order of surviving records.
inline RawInteractions canonicalize(const RawInteractions& raw, std::uint64_t seed) {
    RawInteractions out;
    out.records.reserve(raw.records.size());
    std::unordered_set<std::string> seen;
    seen.reserve(raw.records.size() * 2);
    for (const RawRecord& rec : raw.records) {
        std::string key = rec.user;
        key.push_back('\x1f');
        key.append(rec.item);
        if (!seen.insert(std::move(key)).second) continue;
        out.records.push_back(rec);
    }
    for (std::size_t k = 0; k < out.records.size(); ++k) {
        if (!out.records[k].timestamp) {
            const std::uint64_t word = rng::draw(seed, rng::Stream::timestamps, k);
            out.records[k].timestamp = word >> 32;  // uniform over [0, 2^32)
        }
    }
    return out;
}

struct KCoreResult {
    RawInteractions interactions;
    // Set when filtering removed everything from a non-empty input.
    bool emptied = false;
};

/// Iterative k-core filter over distinct-partner degrees: repeatedly drop
/// users with fewer than k distinct items and items with fewer than k
/// distinct users, until a fixed point. Returns the maximal surviving subset
/// in original record order.
inline KCoreResult k_core_filter(const RawInteractions& raw, int k = 5) {
    if (k < 1) throw ConfigError("k_core_filter: k must be >= 1");

    std::unordered_map<std::string, std::int32_t> user_ids, item_ids;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;  // deduplicated
    edges.reserve(raw.records.size());
    {
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(raw.records.size() * 2);
        for (const RawRecord& rec : raw.records) {
            const auto [uit, u_new] = user_ids.try_emplace(
                rec.user, static_cast<std::int32_t>(user_ids.size()));
            const auto [iit, i_new] = item_ids.try_emplace(
                rec.item, static_cast<std::int32_t>(item_ids.size()));
            const std::uint64_t key =
                (static_cast<std::uint64_t>(uit->second) << 32) | static_cast<std::uint32_t>(iit->second);
            if (seen.insert(key).second) edges.emplace_back(uit->second, iit->second);
        }
    }

    const std::size_t nu = user_ids.size();
    const std::size_t ni = item_ids.size();
    std::vector<std::vector<std::int32_t>> user_adj(nu), item_adj(ni);
    for (const auto& [u, i] : edges) {
        user_adj[static_cast<std::size_t>(u)].push_back(i);
        item_adj[static_cast<std::size_t>(i)].push_back(u);
    }

    std::vector<std::int32_t> user_deg(nu), item_deg(ni);
    std::vector<char> user_dead(nu, 0), item_dead(ni, 0);
    std::vector<std::int32_t> queue;
    // queue entries: user v encoded as v, item v encoded as nu + v
    for (std::size_t u = 0; u < nu; ++u) {
        user_deg[u] = static_cast<std::int32_t>(user_adj[u].size());
        if (user_deg[u] < k) {
            user_dead[u] = 1;
            queue.push_back(static_cast<std::int32_t>(u));
        }
    }
    for (std::size_t i = 0; i < ni; ++i) {
        item_deg[i] = static_cast<std::int32_t>(item_adj[i].size());
        if (item_deg[i] < k) {
            item_dead[i] = 1;
            queue.push_back(static_cast<std::int32_t>(nu + i));
        }
    }
    while (!queue.empty()) {
        const std::int32_t v = queue.back();
        queue.pop_back();
        if (v < static_cast<std::int32_t>(nu)) {
            for (std::int32_t i : user_adj[static_cast<std::size_t>(v)]) {
                if (!item_dead[static_cast<std::size_t>(i)] &&
                    --item_deg[static_cast<std::size_t>(i)] < k) {
                    item_dead[static_cast<std::size_t>(i)] = 1;
                    queue.push_back(static_cast<std::int32_t>(nu) + i);
                }
            }
        } else {
            const std::int32_t i = v - static_cast<std::int32_t>(nu);
            for (std::int32_t u : item_adj[static_cast<std::size_t>(i)]) {
                if (!user_dead[static_cast<std::size_t>(u)] &&
                    --user_deg[static_cast<std::size_t>(u)] < k) {
                    user_dead[static_cast<std::size_t>(u)] = 1;
                    queue.push_back(u);
                }
            }
        }
    }

    KCoreResult result;
    for (const RawRecord& rec : raw.records) {
        const std::int32_t u = user_ids.at(rec.user);
        const std::int32_t i = item_ids.at(rec.item);
        if (!user_dead[static_cast<std::size_t>(u)] && !item_dead[static_cast<std::size_t>(i)]) {
            result.interactions.records.push_back(rec);
        }
    }
    result.emptied = !raw.records.empty() && result.interactions.records.empty();
    return result;
}

/// Label-encode tokens (lexicographic order) and split leave-one-out: per
/// user the interaction with the largest timestamp becomes test (timestamp
/// ties broken toward the larger item index); with validation enabled, the
/// second largest becomes validation for users holding at least three
/// interactions. Everything else is train.
inline std::pair<SplitDataset, IdMaps> encode_and_split(const RawInteractions& raw,
                                                        bool with_validation) {
    IdMaps maps;
    {
        std::unordered_set<std::string> users, items;
        for (const RawRecord& rec : raw.records) {
            users.insert(rec.user);
            items.insert(rec.item);
        }
        maps.user_tokens.assign(users.begin(), users.end());
        maps.item_tokens.assign(items.begin(), items.end());
        std::sort(maps.user_tokens.begin(), maps.user_tokens.end());
        std::sort(maps.item_tokens.begin(), maps.item_tokens.end());
        for (std::size_t k = 0; k < maps.user_tokens.size(); ++k)
            maps.user_index[maps.user_tokens[k]] = static_cast<std::int32_t>(k);
        for (std::size_t k = 0; k < maps.item_tokens.size(); ++k)
            maps.item_index[maps.item_tokens[k]] = static_cast<std::int32_t>(k);
    }

    SplitDataset split;
    split.n_users = maps.n_users();
    split.n_items = maps.n_items();

    std::vector<std::vector<TrainEntry>> per_user(static_cast<std::size_t>(split.n_users));
    for (const RawRecord& rec : raw.records) {
        if (!rec.timestamp) throw ProtocolError("encode_and_split: record lacks a timestamp; run canonicalize first");
        TrainEntry e;
        e.user = maps.user_index.at(rec.user);
        e.item = maps.item_index.at(rec.item);
        e.timestamp = *rec.timestamp;
        per_user[static_cast<std::size_t>(e.user)].push_back(e);
    }

    split.train_pos.resize(static_cast<std::size_t>(split.n_users));
    split.test_item.assign(static_cast<std::size_t>(split.n_users), -1);
    split.validation_item.assign(static_cast<std::size_t>(split.n_users), -1);

    for (std::int32_t u = 0; u < split.n_users; ++u) {
        auto& entries = per_user[static_cast<std::size_t>(u)];
        if (entries.size() < 2) {
            throw ProtocolError("encode_and_split: user '" + maps.user_tokens[static_cast<std::size_t>(u)] +
                                "' has fewer than 2 interactions");
        }
        std::sort(entries.begin(), entries.end(), [](const TrainEntry& a, const TrainEntry& b) {
            if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
            return a.item < b.item;
        });

        const TrainEntry test = entries.back();
        entries.pop_back();
        split.test.push_back({u, test.item});
        split.test_item[static_cast<std::size_t>(u)] = test.item;

        if (with_validation && entries.size() >= 2) {
            const TrainEntry val = entries.back();
            entries.pop_back();
            split.validation.push_back({u, val.item});
            split.validation_item[static_cast<std::size_t>(u)] = val.item;
        }

        auto& pos = split.train_pos[static_cast<std::size_t>(u)];
        for (const TrainEntry& e : entries) {
            split.train.push_back(e);
            pos.push_back(e.item);
        }
        std::sort(pos.begin(), pos.end());
    }
    return {std::move(split), std::move(maps)};
}

/// Online negative sampling for one epoch. For every train positive (u, i),
/// emits the positive followed by `ratio` negatives (u, j) with j neither a
/// train positive of u nor u's held-out test item. Each draw is a pure
/// function of (seed, epoch, user, position, slot), so epochs differ but
/// reruns match bit for bit.
inline std::vector<TrainingExample> sample_negatives(const SplitDataset& split, int ratio,
                                                     std::uint64_t seed, std::uint64_t epoch) {
    if (ratio < 0) throw ConfigError("sample_negatives: ratio must be >= 0");
    std::vector<TrainingExample> out;
    out.reserve(split.train.size() * static_cast<std::size_t>(1 + ratio));

    std::vector<std::int32_t> position_of_user(static_cast<std::size_t>(split.n_users), 0);
    for (const TrainEntry& e : split.train) {
        const std::int32_t u = e.user;
        const std::int32_t pos = position_of_user[static_cast<std::size_t>(u)]++;
        out.push_back({u, e.item, 1});

        const auto& trained = split.train_pos[static_cast<std::size_t>(u)];
        const std::int32_t test = split.test_item[static_cast<std::size_t>(u)];
        const std::int64_t eligible = static_cast<std::int64_t>(split.n_items) -
                                      static_cast<std::int64_t>(trained.size()) - (test >= 0 ? 1 : 0);
        if (eligible <= 0) {
            throw SamplingError("sample_negatives: user " + std::to_string(u) +
                                " has interacted with every item");
        }
        for (int r = 0; r < ratio; ++r) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                const std::uint64_t word = rng::draw(seed, rng::Stream::negatives, epoch,
                                                     static_cast<std::uint64_t>(u),
                                                     static_cast<std::uint64_t>(pos),
                                                     static_cast<std::uint64_t>(r), attempt);
                const auto j = static_cast<std::int32_t>(
                    rng::to_bounded(word, static_cast<std::uint64_t>(split.n_items)));
                if (j == test) continue;
                if (std::binary_search(trained.begin(), trained.end(), j)) continue;
                out.push_back({u, j, 0});
                break;
            }
        }
    }
    return out;
}

}  // namespace mmrec
