#include "distillstream/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>

#include <nlohmann/json.hpp>

#include "distillstream/errors.hpp"

namespace distillstream {

namespace {

// Below this many retained entries a parallel scan costs more than it saves.
constexpr std::size_t kParallelScanMin = 4096;

std::vector<float> unit_normalize(std::span<const float> v) {
    double norm2 = 0.0;
    for (float x : v) {
        if (!std::isfinite(x)) throw DomainError("embedding has a non-finite component");
        norm2 += static_cast<double>(x) * x;
    }
    if (norm2 == 0.0) throw DomainError("embedding has zero norm");
    const double inv = 1.0 / std::sqrt(norm2);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("cosine of vectors with dimensions " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw DomainError("cosine of a zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

IndexKind index_kind_from_string(const std::string& s) {
    if (s == "exact") return IndexKind::exact;
    if (s == "lsh") return IndexKind::lsh;
    throw ConfigError("unknown dedup index kind '" + s + "' (expected exact or lsh)");
}

std::string to_string(IndexKind kind) {
    return kind == IndexKind::exact ? "exact" : "lsh";
}

void validate(const DedupConfig& config) {
    if (!(config.tau > -1.0 && config.tau <= 1.0)) throw ConfigError("dedup.tau must lie in (-1, 1]");
    if (config.lsh_planes == 0 || config.lsh_planes > 64) {
        throw ConfigError("dedup.lsh_planes must lie in [1, 64]");
    }
    if (config.lsh_tables == 0) throw ConfigError("dedup.lsh_tables must be positive");
    if (config.threads == 0) throw ConfigError("thread count must be positive");
}

RetainedSet::RetainedSet(std::size_t dim, DedupConfig config) : dim_(dim), config_(config) {
    if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
    validate(config_);
    if (config_.index_kind == IndexKind::lsh) {
        std::mt19937_64 rng(config_.lsh_seed);
        std::normal_distribution<float> normal(0.0f, 1.0f);
        planes_.resize(config_.lsh_tables * config_.lsh_planes * dim_);
        for (auto& p : planes_) p = normal(rng);
        buckets_.resize(config_.lsh_tables);
    }
}

double RetainedSet::dot(std::size_t entry, std::span<const float> unit) const {
    const float* row = unit_.data() + entry * dim_;
    double acc = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) acc += static_cast<double>(row[k]) * unit[k];
    return acc;
}

std::optional<std::size_t> RetainedSet::find_exact(std::span<const float> unit) {
    const std::size_t n = ids_.size();
    const auto scan = [&](std::size_t begin, std::size_t end) -> std::optional<std::size_t> {
        for (std::size_t i = begin; i < end; ++i) {
            if (dot(i, unit) > config_.tau) return i;
        }
        return std::nullopt;
    };

    if (config_.threads <= 1 || n < kParallelScanMin) {
        const auto hit = scan(0, n);
        stats_.comparisons += hit ? *hit + 1 : n;
        return hit;
    }

    // Each worker finds the first match in its chunk; the earliest chunk hit wins.
    const std::size_t workers = std::min(config_.threads, n / (kParallelScanMin / 4));
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::future<std::optional<std::size_t>>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        jobs.push_back(std::async(std::launch::async, scan, begin, end));
    }
    std::optional<std::size_t> best;
    for (auto& job : jobs) {
        auto hit = job.get();
        if (hit && !best) best = hit;
    }
    stats_.comparisons += n;
    return best;
}

std::uint64_t RetainedSet::hash_key(std::size_t table, std::span<const float> unit) const {
    std::uint64_t key = 0;
    const float* plane = planes_.data() + table * config_.lsh_planes * dim_;
    for (std::size_t p = 0; p < config_.lsh_planes; ++p, plane += dim_) {
        double proj = 0.0;
        for (std::size_t k = 0; k < dim_; ++k) proj += static_cast<double>(plane[k]) * unit[k];
        key = (key << 1) | (proj >= 0.0 ? 1u : 0u);
    }
    return key;
}

std::optional<std::size_t> RetainedSet::find_lsh(std::span<const float> unit, std::vector<std::uint64_t>& keys) {
    keys.resize(config_.lsh_tables);
    std::vector<std::uint32_t> candidates;
    for (std::size_t t = 0; t < config_.lsh_tables; ++t) {
        keys[t] = hash_key(t, unit);
        const auto it = buckets_[t].find(keys[t]);
        if (it != buckets_[t].end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    for (auto c : candidates) {
        ++stats_.comparisons;
        if (dot(c, unit) > config_.tau) return c;
    }
    return std::nullopt;
}

OfferDecision RetainedSet::offer(const ImageItem& item) {
    if (item.embedding.size() != dim_) {
        throw DimensionMismatch("image " + item.image_id + " has embedding dimension " +
                                std::to_string(item.embedding.size()) + ", index expects " + std::to_string(dim_));
    }
    const auto unit = unit_normalize(item.embedding);
    std::vector<std::uint64_t> keys;
    const auto hit = config_.index_kind == IndexKind::exact ? find_exact(unit) : find_lsh(unit, keys);

    ++stats_.seen;
    if (hit) {
        ++stats_.dropped;
        return {false, ids_[*hit]};
    }
    const auto index = static_cast<std::uint32_t>(ids_.size());
    unit_.insert(unit_.end(), unit.begin(), unit.end());
    ids_.push_back(item.image_id);
    for (std::size_t t = 0; t < keys.size(); ++t) buckets_[t][keys[t]].push_back(index);
    ++stats_.retained;
    return {true, {}};
}

double DedupReport::reduction_fraction() const {
    return stats.seen == 0 ? 0.0 : static_cast<double>(stats.dropped) / static_cast<double>(stats.seen);
}

nlohmann::json DedupReport::to_json(bool verbose) const {
    nlohmann::json j = {{"seen", stats.seen},
                        {"retained", stats.retained},
                        {"dropped", stats.dropped},
                        {"reduction_fraction", reduction_fraction()}};
    if (verbose) {
        auto list = nlohmann::json::array();
        for (const auto& d : decisions) {
            nlohmann::json entry = {{"image_id", d.image_id}, {"action", d.retained ? "retained" : "dropped"}};
            if (!d.retained) entry["duplicate_of"] = d.duplicate_of;
            list.push_back(std::move(entry));
        }
        j["decisions"] = std::move(list);
    }
    return j;
}

DedupResult dedup_stream(std::span<const TextImagePair> pairs, std::size_t dim, const DedupConfig& config) {
    RetainedSet set(dim, config);
    DedupResult result;
    result.report.decisions.reserve(pairs.size());
    for (const auto& pair : pairs) {
        auto decision = set.offer(pair.image);
        if (decision.retained) result.retained.push_back(pair);
        result.report.decisions.push_back({pair.image.image_id, decision.retained, std::move(decision.duplicate_of)});
    }
    result.report.stats = set.stats();
    return result;
}

}  // namespace distillstream
