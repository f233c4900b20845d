#include "distillstream/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "distillstream/errors.hpp"

namespace distillstream {

using nlohmann::json;

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

float float_from_little(std::uint32_t bits) {
    return std::bit_cast<float>(to_little(bits));
}

std::uint32_t float_to_little(float v) {
    return to_little(std::bit_cast<std::uint32_t>(v));
}

}  // namespace

void validate(const FilterPolicy& policy) {
    if (policy.min_words < 1) {
        throw ConfigError("filter.min_words must be >= 1");
    }
    if (!(policy.english_stopword_ratio_min >= 0.0 && policy.english_stopword_ratio_min <= 1.0)) {
        throw ConfigError("filter.english_stopword_ratio_min must lie in [0, 1]");
    }
}

std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) words.push_back(text.substr(start, i - start));
    }
    return words;
}

std::size_t word_count(std::string_view text) {
    return split_words(text).size();
}

std::string normalize_word(std::string_view word) {
    std::string out;
    out.reserve(word.size());
    for (char c : word) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::ispunct(u)) continue;
        out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
    return out;
}

const std::unordered_set<std::string>& english_stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",       "about",  "above", "after", "again",  "against", "all",    "am",     "an",
        "and",     "any",    "are",   "as",    "at",     "be",      "because", "been",  "before",
        "being",   "below",  "between", "both", "but",   "by",      "can",    "could",  "did",
        "do",      "does",   "doing", "down",  "during", "each",    "few",    "for",    "from",
        "further", "had",    "has",   "have",  "having", "he",      "her",    "here",   "hers",
        "herself", "him",    "himself", "his", "how",    "i",       "if",     "in",     "into",
        "is",      "it",     "its",   "itself", "just",  "me",      "more",   "most",   "my",
        "myself",  "no",     "nor",   "not",   "now",    "of",      "off",    "on",     "once",
        "only",    "or",     "other", "our",   "ours",   "ourselves", "out",  "over",   "own",
        "same",    "she",    "should", "so",   "some",   "such",    "than",   "that",   "the",
        "their",   "theirs", "them",  "themselves", "then", "there", "these", "they",   "this",
        "those",   "through", "to",   "too",   "under",  "until",   "up",     "very",   "was",
        "we",      "were",   "what",  "when",  "where",  "which",   "while",  "who",    "whom",
        "why",     "will",   "with",  "would", "you",    "your",    "yours",  "yourself",
        "yourselves"};
    return words;
}

double stopword_ratio(std::string_view text) {
    const auto words = split_words(text);
    if (words.empty()) return 0.0;
    const auto& stop = english_stopwords();
    std::size_t hits = 0;
    for (auto w : words) {
        if (stop.contains(normalize_word(w))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(words.size());
}

bool StopwordRatioCheck::is_english(std::string_view text) const {
    return stopword_ratio(text) >= min_ratio_;
}

std::string_view to_string(Rejection r) {
    switch (r) {
        case Rejection::none: return "none";
        case Rejection::too_few_words: return "too_few_words";
        case Rejection::no_image: return "no_image";
        case Rejection::retweet: return "retweet";
        case Rejection::not_english: return "not_english";
    }
    return "unknown";
}

Rejection screen(const MultimodalRecord& record, const FilterPolicy& policy, const LanguageCheck* language) {
    if (word_count(record.text) < policy.min_words) return Rejection::too_few_words;
    if (policy.require_image && record.images.empty()) return Rejection::no_image;
    if (policy.reject_retweets && record.is_retweet) return Rejection::retweet;
    const bool english = language != nullptr
                             ? language->is_english(record.text)
                             : StopwordRatioCheck(policy.english_stopword_ratio_min).is_english(record.text);
    return english ? Rejection::none : Rejection::not_english;
}

bool admit(const MultimodalRecord& record, const FilterPolicy& policy, const LanguageCheck* language) {
    return screen(record, policy, language) == Rejection::none;
}

std::vector<TextImagePair> explode_pairs(const MultimodalRecord& record) {
    std::vector<TextImagePair> pairs;
    pairs.reserve(record.images.size());
    for (std::size_t i = 0; i < record.images.size(); ++i) {
        pairs.push_back({record.id, record.text, record.created_at, i, record.images[i]});
    }
    return pairs;
}

void sort_pairs(std::vector<TextImagePair>& pairs) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const TextImagePair& a, const TextImagePair& b) {
        return std::tie(a.created_at, a.record_id, a.image_pos) <
               std::tie(b.created_at, b.record_id, b.image_pos);
    });
}

// ---------------------------------------------------------------------------
// EmbeddingSidecar

EmbeddingSidecar EmbeddingSidecar::open(const std::filesystem::path& data_path,
                                        const std::filesystem::path& index_path) {
    EmbeddingSidecar sidecar;
    sidecar.data_path_ = data_path;
    sidecar.stream_ = std::make_shared<std::ifstream>(data_path, std::ios::binary);
    auto& in = *sidecar.stream_;
    if (!in) throw SchemaError("cannot open embedding sidecar " + data_path.string());

    char magic[4];
    std::uint32_t header[2];
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || std::memcmp(magic, "EMB1", 4) != 0) {
        throw SchemaError("bad embedding sidecar header in " + data_path.string());
    }
    sidecar.count_ = to_little(header[0]);
    sidecar.dim_ = to_little(header[1]);

    std::ifstream index(index_path);
    if (!index) throw SchemaError("cannot open embedding index " + index_path.string());
    const std::uint64_t data_end = 12 + static_cast<std::uint64_t>(sidecar.count_) * sidecar.dim_ * 4;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw RecordError(line_no, "embedding index line lacks a tab");
        std::uint64_t offset = 0;
        try {
            offset = std::stoull(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw RecordError(line_no, "embedding index offset is not an integer");
        }
        if (offset < 12 || (offset - 12) % (4ull * sidecar.dim_) != 0 ||
            offset + 4ull * sidecar.dim_ > data_end) {
            throw RecordError(line_no, "embedding index offset out of range");
        }
        sidecar.offsets_.emplace(line.substr(0, tab), offset);
    }
    return sidecar;
}

void EmbeddingSidecar::write(const std::filesystem::path& data_path,
                             const std::filesystem::path& index_path,
                             std::span<const ImageItem> items, std::size_t dim) {
    std::ofstream out(data_path, std::ios::binary);
    std::ofstream index(index_path);
    if (!out || !index) throw SchemaError("cannot write embedding sidecar " + data_path.string());
    out.write("EMB1", 4);
    const std::uint32_t header[2] = {to_little(static_cast<std::uint32_t>(items.size())),
                                     to_little(static_cast<std::uint32_t>(dim))};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::uint64_t offset = 12;
    for (const auto& item : items) {
        if (item.embedding.size() != dim) {
            throw DimensionMismatch("sidecar item " + item.image_id + " has dimension " +
                                    std::to_string(item.embedding.size()));
        }
        for (float v : item.embedding) {
            const std::uint32_t bits = float_to_little(v);
            out.write(reinterpret_cast<const char*>(&bits), 4);
        }
        index << item.image_id << '\t' << offset << '\n';
        offset += 4ull * dim;
    }
}

std::vector<float> EmbeddingSidecar::read(const std::string& image_id) const {
    const auto it = offsets_.find(image_id);
    if (it == offsets_.end()) throw LookupError("image id not in embedding sidecar: " + image_id);
    std::vector<std::uint32_t> raw(dim_);
    stream_->clear();
    stream_->seekg(static_cast<std::streamoff>(it->second));
    stream_->read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(4 * dim_));
    if (!*stream_) throw SchemaError("truncated embedding sidecar " + data_path_.string());
    std::vector<float> out(dim_);
    std::transform(raw.begin(), raw.end(), out.begin(), float_from_little);
    return out;
}

// ---------------------------------------------------------------------------
// CorpusReader

CorpusReader::CorpusReader(const std::filesystem::path& path, CorpusOptions options)
    : in_(path), options_(std::move(options)) {
    if (!in_) throw SchemaError("cannot open corpus file " + path.string());
    if (options_.expected_dim == 0) throw ConfigError("expected embedding dimension must be positive");
    if (options_.sidecar_data) {
        const auto index = options_.sidecar_index.value_or(options_.sidecar_data->string() + ".idx");
        sidecar_ = EmbeddingSidecar::open(*options_.sidecar_data, index);
    }
}

MultimodalRecord CorpusReader::parse_line(const std::string& line, std::size_t line_no) const {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw RecordError(line_no, std::string("invalid JSON: ") + e.what());
    }
    MultimodalRecord record;
    try {
        record.id = j.at("id").get<std::string>();
        record.text = j.at("text").get<std::string>();
        record.is_retweet = j.at("is_retweet").get<bool>();
        record.created_at = j.at("created_at").get<std::int64_t>();
        for (const auto& img : j.at("images")) {
            ImageItem item;
            item.image_id = img.at("image_id").get<std::string>();
            if (img.value("embedding_ref", false)) {
                if (!sidecar_) throw RecordError(line_no, "embedding_ref without a sidecar file");
                item.embedding = sidecar_->read(item.image_id);
            } else {
                item.embedding = img.at("embedding").get<std::vector<float>>();
            }
            record.images.push_back(std::move(item));
        }
    } catch (const json::exception& e) {
        throw RecordError(line_no, std::string("schema violation: ") + e.what());
    } catch (const LookupError& e) {
        throw RecordError(line_no, e.what());
    }
    if (record.id.empty()) throw RecordError(line_no, "empty record id");
    for (const auto& item : record.images) {
        if (item.image_id.empty()) throw RecordError(line_no, "empty image id");
        if (item.embedding.size() != options_.expected_dim) {
            throw DimensionMismatch("line " + std::to_string(line_no) + ": image " + item.image_id +
                                    " has embedding dimension " + std::to_string(item.embedding.size()) +
                                    ", expected " + std::to_string(options_.expected_dim));
        }
        if (!std::all_of(item.embedding.begin(), item.embedding.end(),
                         [](float v) { return std::isfinite(v); })) {
            throw RecordError(line_no, "non-finite embedding component in image " + item.image_id);
        }
    }
    return record;
}

std::optional<MultimodalRecord> CorpusReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        const std::size_t line_no = ++stats_.lines;
        if (std::all_of(line.begin(), line.end(), is_space)) continue;
        try {
            auto record = parse_line(line, line_no);
            if (!seen_ids_.insert(record.id).second) {
                throw RecordError(line_no, "duplicate record id " + record.id);
            }
            ++stats_.records;
            return record;
        } catch (const RecordError&) {
            if (options_.on_malformed == MalformedPolicy::abort) throw;
            ++stats_.malformed;
            stats_.malformed_lines.push_back(line_no);
        }
    }
    return std::nullopt;
}

std::vector<MultimodalRecord> load_corpus(const std::filesystem::path& path, const CorpusOptions& options,
                                          CorpusStats* stats) {
    CorpusReader reader(path, options);
    std::vector<MultimodalRecord> records;
    while (auto record = reader.next()) records.push_back(std::move(*record));
    if (stats != nullptr) *stats = reader.stats();
    return records;
}

std::string record_to_json_line(const MultimodalRecord& record, bool embedding_ref) {
    json images = json::array();
    for (const auto& item : record.images) {
        if (embedding_ref) {
            images.push_back({{"image_id", item.image_id}, {"embedding_ref", true}});
        } else {
            images.push_back({{"image_id", item.image_id}, {"embedding", item.embedding}});
        }
    }
    json j = {{"id", record.id},
              {"text", record.text},
              {"is_retweet", record.is_retweet},
              {"created_at", record.created_at},
              {"images", std::move(images)}};
    return j.dump();
}

void write_corpus(const std::filesystem::path& path, std::span<const MultimodalRecord> records) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write corpus file " + path.string());
    for (const auto& r : records) out << record_to_json_line(r) << '\n';
}

void write_pairs(const std::filesystem::path& path, std::span<const TextImagePair> pairs) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write pairs file " + path.string());
    for (const auto& p : pairs) {
        json j = {{"record_id", p.record_id},   {"text", p.text},
                  {"created_at", p.created_at}, {"image_pos", p.image_pos},
                  {"image_id", p.image.image_id}, {"embedding", p.image.embedding}};
        out << j.dump() << '\n';
    }
}

std::vector<TextImagePair> read_pairs(const std::filesystem::path& path, std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open pairs file " + path.string());
    std::vector<TextImagePair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            TextImagePair p;
            p.record_id = j.at("record_id").get<std::string>();
            p.text = j.at("text").get<std::string>();
            p.created_at = j.at("created_at").get<std::int64_t>();
            p.image_pos = j.at("image_pos").get<std::size_t>();
            p.image.image_id = j.at("image_id").get<std::string>();
            p.image.embedding = j.at("embedding").get<std::vector<float>>();
            if (p.image.embedding.size() != expected_dim) {
                throw DimensionMismatch("line " + std::to_string(line_no) + ": embedding dimension " +
                                        std::to_string(p.image.embedding.size()) + ", expected " +
                                        std::to_string(expected_dim));
            }
            pairs.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw RecordError(line_no, e.what());
        }
    }
    return pairs;
}

}  // namespace distillstream
