#include "distillstream/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "distillstream/corpus.hpp"
#include "distillstream/errors.hpp"
#include "distillstream/hash.hpp"

namespace distillstream {

std::string_view to_string(Polarity p) {
    switch (p) {
        case Polarity::positive: return "positive";
        case Polarity::neutral: return "neutral";
        case Polarity::negative: return "negative";
    }
    return "unknown";
}

Polarity polarity_from_string(std::string_view s) {
    if (s == "positive") return Polarity::positive;
    if (s == "neutral") return Polarity::neutral;
    if (s == "negative") return Polarity::negative;
    throw SchemaError("unknown polarity '" + std::string(s) + "'");
}

bool is_simplex_point(const std::array<double, kNumClasses>& p, double tol) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

SentimentDistribution::SentimentDistribution(const std::array<double, kNumClasses>& p, double tol) : p_(p) {
    if (!is_simplex_point(p, tol)) {
        throw DomainError("not a probability distribution: (" + std::to_string(p[0]) + ", " +
                          std::to_string(p[1]) + ", " + std::to_string(p[2]) + ")");
    }
}

SentimentDistribution SentimentDistribution::one_hot(Polarity p) {
    std::array<double, kNumClasses> v{};
    v[index_of(p)] = 1.0;
    return SentimentDistribution(v);
}

Polarity SentimentDistribution::argmax() const noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumClasses; ++k) {
        if (p_[k] > p_[best]) best = k;
    }
    return static_cast<Polarity>(best);
}

double SentimentDistribution::entropy() const noexcept {
    double h = 0.0;
    for (double v : p_) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::array<double, kNumClasses> e{};
    double sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        e[k] = std::exp(z[k] - m);
        sum += e[k];
    }
    for (auto& v : e) v /= sum;
    return e;
}

void validate(const GatingConfig& config) {
    for (double c : config.c) {
        if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("gating thresholds must lie in [0, 1]");
    }
}

GateResult gate(const SentimentDistribution& dist, const GatingConfig& config) {
    const Polarity top = dist.argmax();
    const int multiplier = dist[top] >= config.c[index_of(top)] ? 1 : 0;
    return {multiplier, top};
}

// ---------------------------------------------------------------------------

WordSet load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open word list " + path.string());
    WordSet words;
    std::string line;
    while (std::getline(in, line)) {
        const auto tokens = split_words(line);
        if (tokens.empty() || tokens.front().starts_with('#')) continue;
        words.insert(normalize_word(tokens.front()));
    }
    return words;
}

LexiconScorer::LexiconScorer(WordSet positive, WordSet negative, double temperature)
    : positive_(std::move(positive)), negative_(std::move(negative)), temperature_(temperature) {
    if (!(temperature_ > 0.0)) throw ConfigError("lexicon temperature must be positive");
    for (const auto& w : positive_) {
        if (negative_.contains(w)) throw ConfigError("word '" + w + "' is in both lexicons");
    }
}

LexiconScorer LexiconScorer::load(const std::filesystem::path& positive_path,
                                  const std::filesystem::path& negative_path, double temperature) {
    return LexiconScorer(load_word_list(positive_path), load_word_list(negative_path), temperature);
}

SentimentDistribution LexiconScorer::score(const TeacherQuery& query) const {
    const auto words = split_words(query.text);
    double pos = 0.0, neg = 0.0;
    for (auto w : words) {
        const auto norm = normalize_word(w);
        if (positive_.contains(norm)) {
            pos += 1.0;
        } else if (negative_.contains(norm)) {
            neg += 1.0;
        }
    }
    const double rest = std::max(0.0, static_cast<double>(words.size()) - pos - neg);
    const auto p = softmax({pos / temperature_, rest * kNeutralDamping / temperature_, neg / temperature_});
    return SentimentDistribution(p);
}

std::uint64_t LexiconScorer::fingerprint() const {
    Fnv1a h;
    for (const auto* set : {&positive_, &negative_}) {
        std::vector<std::string> sorted(set->begin(), set->end());
        std::sort(sorted.begin(), sorted.end());
        for (const auto& w : sorted) {
            h.update(w);
            h.update(std::string_view("\n", 1));
        }
        h.update(std::string_view("\0", 1));
    }
    const double t = temperature_;
    h.update(std::span<const double>(&t, 1));
    return h.digest();
}

std::string LexiconScorer::describe() const {
    return "lexicon(" + std::to_string(positive_.size()) + " positive, " + std::to_string(negative_.size()) +
           " negative, temperature " + std::to_string(temperature_) + ")";
}

PrecomputedTeacher::PrecomputedTeacher(std::unordered_map<std::string, SentimentDistribution> table)
    : table_(std::move(table)) {}

PrecomputedTeacher PrecomputedTeacher::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open teacher file " + path.string());
    std::unordered_map<std::string, SentimentDistribution> table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto p = j.at("p").get<std::vector<double>>();
            if (p.size() != kNumClasses) throw RecordError(line_no, "teacher distribution must have 3 entries");
            // Files written with limited precision may drift slightly from 1.
            const std::array<double, kNumClasses> raw = {p[0], p[1], p[2]};
            if (!is_simplex_point(raw, 1e-6)) throw DomainError("teacher distribution is not on the simplex");
            const double sum = raw[0] + raw[1] + raw[2];
            table.insert_or_assign(j.at("id").get<std::string>(),
                                   SentimentDistribution({raw[0] / sum, raw[1] / sum, raw[2] / sum}));
        } catch (const nlohmann::json::exception& e) {
            throw RecordError(line_no, e.what());
        } catch (const DomainError& e) {
            throw RecordError(line_no, e.what());
        }
    }
    return PrecomputedTeacher(std::move(table));
}

SentimentDistribution PrecomputedTeacher::score(const TeacherQuery& query) const {
    if (auto it = table_.find(std::string(query.id)); it != table_.end()) return it->second;
    if (auto it = table_.find(std::string(query.text)); it != table_.end()) return it->second;
    throw LookupError("no precomputed teacher distribution for key '" + std::string(query.id) + "'");
}

std::uint64_t PrecomputedTeacher::fingerprint() const {
    std::vector<const std::pair<const std::string, SentimentDistribution>*> entries;
    entries.reserve(table_.size());
    for (const auto& e : table_) entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
    Fnv1a h;
    for (const auto* e : entries) {
        h.update(e->first);
        h.update(std::span<const double>(e->second.probs()));
    }
    return h.digest();
}

std::string PrecomputedTeacher::describe() const {
    return "precomputed(" + std::to_string(table_.size()) + " entries)";
}

}  // namespace distillstream
