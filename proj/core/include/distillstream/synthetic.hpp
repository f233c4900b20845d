#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "distillstream/corpus.hpp"
#include "distillstream/eval.hpp"
#include "distillstream/teacher.hpp"

namespace distillstream {

// Lexicon the synthetic texts are written with.
const std::vector<std::string>& synthetic_positive_words();
const std::vector<std::string>& synthetic_negative_words();
LexiconScorer synthetic_lexicon();

/// Parameters of the synthetic corpus. Each record has a latent class; its
/// text carries that class's lexicon words and its images point along the
/// class axis (dims 0/1/2 for positive/neutral/negative) plus isotropic
/// noise of scale noise_sigma.
struct SyntheticSpec {
    std::size_t n_records = 1000;
    double dup_rate = 0.2;
    double noise_sigma = 0.05;
    std::array<double, kNumClasses> class_priors = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::uint64_t seed = 1;
    std::size_t dim = 64;
    // Records built to fail admission (retweet, short, no image, non-English).
    double junk_rate = 0.05;
    double multi_image_rate = 0.25;
};

void validate(const SyntheticSpec& spec);

struct PlantedDuplicate {
    std::string image_id;
    std::string duplicate_of;
    bool exact = true;
};

struct RecordTruth {
    std::string id;
    Polarity label = Polarity::neutral;
    std::optional<std::string> junk;  // why the record fails admission
};

struct GroundTruth {
    SyntheticSpec spec;
    std::vector<RecordTruth> records;
    std::vector<PlantedDuplicate> duplicates;

    nlohmann::json to_json() const;
    static GroundTruth from_json(const nlohmann::json& j);
};

struct SyntheticCorpus {
    std::vector<MultimodalRecord> records;
    GroundTruth truth;
};

/// Exactly round(dup_rate * n_records) duplicate images are planted, half
/// exact copies and half small perturbations, each pointing at an image of an
/// earlier admissible record.
SyntheticCorpus generate_corpus(const SyntheticSpec& spec);

struct SyntheticBenchmarkSpec {
    std::string name = "synthetic";
    std::size_t n = 200;
    std::size_t dim = 64;
    double noise_sigma = 0.05;
    double positive_fraction = 0.5;
    LabelSpace label_space = LabelSpace::binary_polarity;
    std::uint64_t seed = 1;
};

// Labeled samples whose embeddings follow the corpus class axes.
std::vector<LabeledSample> generate_benchmark(const SyntheticBenchmarkSpec& spec);

}  // namespace distillstream
