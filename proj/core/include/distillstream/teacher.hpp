#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace distillstream {

// Global class order for every file, report and parameter column.
enum class Polarity : std::size_t { positive = 0, neutral = 1, negative = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Polarity, kNumClasses> kAllPolarities = {Polarity::positive, Polarity::neutral,
                                                                      Polarity::negative};

std::string_view to_string(Polarity p);
Polarity polarity_from_string(std::string_view s);

constexpr std::size_t index_of(Polarity p) { return static_cast<std::size_t>(p); }

/// A point on the 3-class simplex ordered (positive, neutral, negative).
class SentimentDistribution {
public:
    SentimentDistribution() : p_{1.0 / 3, 1.0 / 3, 1.0 / 3} {}

    // Throws DomainError unless every component is in [0,1] and they sum to 1 within `tol`.
    explicit SentimentDistribution(const std::array<double, kNumClasses>& p, double tol = 1e-9);

    static SentimentDistribution one_hot(Polarity p);

    const std::array<double, kNumClasses>& probs() const noexcept { return p_; }
    double operator[](std::size_t k) const { return p_[k]; }
    double operator[](Polarity k) const { return p_[index_of(k)]; }

    // Ties resolve to the lowest index.
    Polarity argmax() const noexcept;

    double entropy() const noexcept;

    friend bool operator==(const SentimentDistribution&, const SentimentDistribution&) = default;

private:
    std::array<double, kNumClasses> p_;
};

bool is_simplex_point(const std::array<double, kNumClasses>& p, double tol = 1e-9);

// Numerically stable softmax over three logits.
std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& z);

struct GatingConfig {
    std::array<double, kNumClasses> c = {0.90, 0.90, 0.70};
};

void validate(const GatingConfig& config);

struct GateResult {
    int multiplier = 0;
    Polarity argmax_class = Polarity::positive;
};

// Multiplier is 1 iff the teacher's top probability reaches that class's threshold.
GateResult gate(const SentimentDistribution& dist, const GatingConfig& config);

struct TeacherQuery {
    std::string_view id;
    std::string_view text;
};

/// Frozen textual teacher. Implementations are immutable after construction.
class TeacherProvider {
public:
    virtual ~TeacherProvider() = default;

    virtual SentimentDistribution score(const TeacherQuery& query) const = 0;

    // Content hash; identical before and after any training run.
    virtual std::uint64_t fingerprint() const = 0;

    virtual std::string describe() const = 0;

    SentimentDistribution score(std::string_view text) const { return score(TeacherQuery{text, text}); }
};

using WordSet = std::unordered_set<std::string>;

/// Lexicon stand-in for a pretrained text classifier:
/// softmax((P, max(0, W - P - G) * 0.25, G) / temperature) where P and G count
/// positive and negative lexicon hits among the W normalized words.
class LexiconScorer final : public TeacherProvider {
public:
    static constexpr double kNeutralDamping = 0.25;

    LexiconScorer(WordSet positive, WordSet negative, double temperature = 1.0);

    // One word per line; blank lines and '#' comments ignored.
    static LexiconScorer load(const std::filesystem::path& positive_path,
                              const std::filesystem::path& negative_path, double temperature = 1.0);

    using TeacherProvider::score;
    SentimentDistribution score(const TeacherQuery& query) const override;
    std::uint64_t fingerprint() const override;
    std::string describe() const override;

    const WordSet& positive_words() const noexcept { return positive_; }
    const WordSet& negative_words() const noexcept { return negative_; }
    double temperature() const noexcept { return temperature_; }

private:
    WordSet positive_;
    WordSet negative_;
    double temperature_;
};

/// Teacher outputs computed elsewhere, keyed by record id (falls back to text).
class PrecomputedTeacher final : public TeacherProvider {
public:
    explicit PrecomputedTeacher(std::unordered_map<std::string, SentimentDistribution> table);

    // JSON-Lines: {"id": str, "p": [pos, neu, neg]}
    static PrecomputedTeacher load(const std::filesystem::path& path);

    using TeacherProvider::score;
    SentimentDistribution score(const TeacherQuery& query) const override;
    std::uint64_t fingerprint() const override;
    std::string describe() const override;

    std::size_t size() const noexcept { return table_.size(); }

private:
    std::unordered_map<std::string, SentimentDistribution> table_;
};

WordSet load_word_list(const std::filesystem::path& path);

}  // namespace distillstream
