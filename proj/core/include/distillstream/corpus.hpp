#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace distillstream {

struct ImageItem {
    std::string image_id;
    std::vector<float> embedding;
};

// One post of the crawled stream. Image order is preserved through every stage.
struct MultimodalRecord {
    std::string id;
    std::string text;
    bool is_retweet = false;
    std::int64_t created_at = 0;
    std::vector<ImageItem> images;
};

// A text-image training pair. Multi-image records yield one pair per image.
struct TextImagePair {
    std::string record_id;
    std::string text;
    std::int64_t created_at = 0;
    std::size_t image_pos = 0;
    ImageItem image;
};

struct FilterPolicy {
    std::size_t min_words = 5;
    bool require_image = true;
    bool reject_retweets = true;
    double english_stopword_ratio_min = 0.12;
};

void validate(const FilterPolicy& policy);

/// Decides whether a text is English. The default implementation is a
/// stopword-ratio heuristic; swap in a real language identifier if available.
class LanguageCheck {
public:
    virtual ~LanguageCheck() = default;
    virtual bool is_english(std::string_view text) const = 0;
};

class StopwordRatioCheck final : public LanguageCheck {
public:
    explicit StopwordRatioCheck(double min_ratio) : min_ratio_(min_ratio) {}
    bool is_english(std::string_view text) const override;

private:
    double min_ratio_;
};

// Maximal runs of non-whitespace bytes.
std::vector<std::string_view> split_words(std::string_view text);
std::size_t word_count(std::string_view text);

// Lowercases ASCII letters and removes ASCII punctuation. Non-ASCII bytes pass through.
std::string normalize_word(std::string_view word);

const std::unordered_set<std::string>& english_stopwords();

// Fraction of words whose normalized form is an English stopword; 0 for empty text.
double stopword_ratio(std::string_view text);

enum class Rejection { none, too_few_words, no_image, retweet, not_english };

std::string_view to_string(Rejection r);

// First failing admission rule, checked in the order of the enum.
Rejection screen(const MultimodalRecord& record, const FilterPolicy& policy,
                 const LanguageCheck* language = nullptr);

/// Admission filter: long-enough English text, at least one image, not a retweet.
/// A non-null `language` replaces the stopword-ratio check.
bool admit(const MultimodalRecord& record, const FilterPolicy& policy,
           const LanguageCheck* language = nullptr);

std::vector<TextImagePair> explode_pairs(const MultimodalRecord& record);

// Orders pairs by (created_at, record_id, image_pos).
void sort_pairs(std::vector<TextImagePair>& pairs);

enum class MalformedPolicy { skip, abort };

/// Binary embedding store: "EMB1" magic, uint32 count, uint32 dim, then
/// count*dim little-endian float32. A text index file maps image ids to the
/// byte offset of each vector, one "<image_id>\t<offset>" per line.
class EmbeddingSidecar {
public:
    static EmbeddingSidecar open(const std::filesystem::path& data_path,
                                 const std::filesystem::path& index_path);

    static void write(const std::filesystem::path& data_path,
                      const std::filesystem::path& index_path,
                      std::span<const ImageItem> items, std::size_t dim);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t count() const noexcept { return count_; }
    bool contains(const std::string& image_id) const { return offsets_.contains(image_id); }
    std::vector<float> read(const std::string& image_id) const;

private:
    std::filesystem::path data_path_;
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::unordered_map<std::string, std::uint64_t> offsets_;
    std::shared_ptr<std::ifstream> stream_;
};

struct CorpusOptions {
    std::size_t expected_dim = 0;
    MalformedPolicy on_malformed = MalformedPolicy::skip;
    std::optional<std::filesystem::path> sidecar_data;
    std::optional<std::filesystem::path> sidecar_index;
};

struct CorpusStats {
    std::size_t lines = 0;
    std::size_t records = 0;
    std::size_t malformed = 0;
    std::vector<std::size_t> malformed_lines;
};

/// Streams records from a JSON-Lines corpus file in file order.
/// Malformed lines are skipped and counted, or thrown as RecordError under
/// MalformedPolicy::abort. A wrong embedding dimension always throws.
class CorpusReader {
public:
    CorpusReader(const std::filesystem::path& path, CorpusOptions options);

    std::optional<MultimodalRecord> next();
    const CorpusStats& stats() const noexcept { return stats_; }

private:
    MultimodalRecord parse_line(const std::string& line, std::size_t line_no) const;

    std::ifstream in_;
    CorpusOptions options_;
    std::optional<EmbeddingSidecar> sidecar_;
    CorpusStats stats_;
    std::unordered_set<std::string> seen_ids_;
};

std::vector<MultimodalRecord> load_corpus(const std::filesystem::path& path,
                                          const CorpusOptions& options,
                                          CorpusStats* stats = nullptr);

std::string record_to_json_line(const MultimodalRecord& record, bool embedding_ref = false);

void write_corpus(const std::filesystem::path& path, std::span<const MultimodalRecord> records);

// Stage artifact: one text-image pair per line.
void write_pairs(const std::filesystem::path& path, std::span<const TextImagePair> pairs);
std::vector<TextImagePair> read_pairs(const std::filesystem::path& path, std::size_t expected_dim);

}  // namespace distillstream
