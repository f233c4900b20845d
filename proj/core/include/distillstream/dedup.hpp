#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "distillstream/corpus.hpp"

namespace distillstream {

// Cosine similarity clamped to [-1, 1]. Throws DomainError on a zero-norm
// input and DimensionMismatch on unequal lengths.
double cosine(std::span<const float> a, std::span<const float> b);

enum class IndexKind { exact, lsh };

IndexKind index_kind_from_string(const std::string& s);
std::string to_string(IndexKind kind);

struct DedupConfig {
    double tau = 0.98875;
    IndexKind index_kind = IndexKind::exact;
    std::size_t lsh_planes = 16;
    std::size_t lsh_tables = 8;
    std::uint64_t lsh_seed = 0x6c73685f73656564ull;
    // Worker cap for the exact scan; 1 keeps everything on the calling thread.
    std::size_t threads = 1;
};

void validate(const DedupConfig& config);

struct DedupStats {
    std::size_t seen = 0;
    std::size_t retained = 0;
    std::size_t dropped = 0;
    // Exact cosine evaluations performed, a cost measure for comparing index kinds.
    std::size_t comparisons = 0;
};

struct OfferDecision {
    bool retained = true;
    std::string duplicate_of;  // empty when retained
};

/// Append-only set of unit-normalized embeddings against which new images are
/// checked. Greedy and order-dependent: an offered item is compared only with
/// previously retained entries, and the earliest retained match is reported.
class RetainedSet {
public:
    RetainedSet(std::size_t dim, DedupConfig config);

    OfferDecision offer(const ImageItem& item);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const DedupStats& stats() const noexcept { return stats_; }
    const DedupConfig& config() const noexcept { return config_; }
    const std::string& image_id(std::size_t i) const { return ids_.at(i); }
    std::span<const float> embedding(std::size_t i) const {
        return {unit_.data() + i * dim_, dim_};
    }

private:
    std::optional<std::size_t> find_exact(std::span<const float> unit);
    std::optional<std::size_t> find_lsh(std::span<const float> unit, std::vector<std::uint64_t>& keys);
    std::uint64_t hash_key(std::size_t table, std::span<const float> unit) const;
    double dot(std::size_t entry, std::span<const float> unit) const;

    std::size_t dim_;
    DedupConfig config_;
    std::vector<float> unit_;  // row-major, one row per retained entry
    std::vector<std::string> ids_;
    DedupStats stats_;

    std::vector<float> planes_;  // tables * planes * dim
    std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> buckets_;
};

struct DedupDecisionRecord {
    std::string image_id;
    bool retained = true;
    std::string duplicate_of;
};

struct DedupReport {
    DedupStats stats;
    std::vector<DedupDecisionRecord> decisions;

    double reduction_fraction() const;
    nlohmann::json to_json(bool verbose) const;
};

struct DedupResult {
    std::vector<TextImagePair> retained;
    DedupReport report;
};

/// Emits the retained pairs in input order. Input is expected in
/// (created_at, record_id, image_pos) order; see sort_pairs.
DedupResult dedup_stream(std::span<const TextImagePair> pairs, std::size_t dim, const DedupConfig& config);

}  // namespace distillstream
