#include "distillstream/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "distillstream/dedup.hpp"
#include "distillstream/errors.hpp"

namespace distillstream {

using nlohmann::json;

namespace {

constexpr std::int64_t kEpochStart = 1648771200;  // 2022-04-01T00:00:00Z
constexpr double kNearDuplicateSigma = 0.005;
constexpr double kNearDuplicateMinCosine = 0.995;

const std::vector<std::string>& filler_stopwords() {
    static const std::vector<std::string> words = {"the", "is", "a",  "this", "with", "and", "of",
                                                   "to",  "in", "at", "on",   "for",  "my",  "our"};
    return words;
}

const std::vector<std::string>& filler_content() {
    static const std::vector<std::string> words = {
        "photo", "today",   "city",    "street", "morning", "weekend", "coffee", "dog",   "sky",
        "picture", "friends", "park",  "train",  "lunch",   "view",    "river",  "market", "office",
        "garden", "evening", "bridge", "window", "station", "beach"};
    return words;
}

const std::vector<std::string>& foreign_words() {
    static const std::vector<std::string> words = {"gato", "perro", "casa",  "sol",   "luna",  "playa",
                                                   "calle", "noche", "ciudad", "cielo", "campo", "lago"};
    return words;
}

template <class Rng>
const std::string& pick(const std::vector<std::string>& words, Rng& rng) {
    std::uniform_int_distribution<std::size_t> d(0, words.size() - 1);
    return words[d(rng)];
}

template <class Rng>
std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Lexicon words of the class plus fillers; at least half the fillers are stopwords.
template <class Rng>
std::string class_text(Polarity label, Rng& rng) {
    std::vector<std::string> words;
    std::size_t fillers = 0;
    if (label == Polarity::neutral) {
        fillers = uniform_int(rng, 6, 16);
    } else {
        const auto& lex = label == Polarity::positive ? synthetic_positive_words() : synthetic_negative_words();
        const std::size_t hits = uniform_int(rng, 2, 5);
        for (std::size_t i = 0; i < hits; ++i) words.push_back(pick(lex, rng));
        fillers = uniform_int(rng, 3, 8);
    }
    for (std::size_t i = 0; i < fillers; ++i) {
        words.push_back(i % 2 == 0 ? pick(filler_stopwords(), rng) : pick(filler_content(), rng));
    }
    std::shuffle(words.begin(), words.end(), rng);
    std::ostringstream out;
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    return out.str();
}

// One-hot class axis plus isotropic noise.
template <class Rng>
std::vector<float> class_embedding(std::size_t class_axis, std::size_t dim, double noise_sigma, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> v(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        v[i] = static_cast<float>((i == class_axis ? 1.0 : 0.0) + noise_sigma * normal(rng));
    }
    return v;
}

template <class Rng>
std::vector<float> near_copy(const std::vector<float>& src, Rng& rng) {
    std::normal_distribution<double> normal(0.0, kNearDuplicateSigma);
    for (;;) {
        std::vector<float> v(src.size());
        for (std::size_t i = 0; i < src.size(); ++i) v[i] = static_cast<float>(src[i] + normal(rng));
        if (cosine(v, src) >= kNearDuplicateMinCosine) return v;
    }
}

std::string record_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "r%06zu", i);
    return buf;
}

}  // namespace

const std::vector<std::string>& synthetic_positive_words() {
    static const std::vector<std::string> words = {
        "good",   "great",  "happy", "love",  "beautiful", "amazing", "wonderful", "excellent", "awesome", "nice",
        "fantastic", "joy", "best",  "lovely", "perfect",  "glad",    "fun",       "brilliant", "sweet",   "cheerful"};
    return words;
}

const std::vector<std::string>& synthetic_negative_words() {
    static const std::vector<std::string> words = {
        "bad",   "sad",   "terrible", "awful", "hate",   "horrible", "angry", "worst",  "ugly",   "poor",
        "disgusting", "upset", "scary", "pain", "broken", "lonely", "sick",  "tragic", "annoying", "miserable"};
    return words;
}

LexiconScorer synthetic_lexicon() {
    const auto& p = synthetic_positive_words();
    const auto& n = synthetic_negative_words();
    return LexiconScorer(WordSet(p.begin(), p.end()), WordSet(n.begin(), n.end()));
}

void validate(const SyntheticSpec& spec) {
    if (spec.n_records < 2) throw ConfigError("synthetic corpus needs at least 2 records");
    if (!(spec.dup_rate >= 0.0 && spec.dup_rate < 1.0)) throw ConfigError("dup_rate must lie in [0, 1)");
    if (!(spec.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be nonnegative");
    if (!(spec.junk_rate >= 0.0 && spec.junk_rate < 1.0)) throw ConfigError("junk_rate must lie in [0, 1)");
    if (!(spec.multi_image_rate >= 0.0 && spec.multi_image_rate <= 1.0)) {
        throw ConfigError("multi_image_rate must lie in [0, 1]");
    }
    if (spec.dim < 8) throw ConfigError("synthetic embedding dimension must be at least 8");
    if (!is_simplex_point(spec.class_priors, 1e-6)) throw ConfigError("class priors must lie on the simplex");
}

json GroundTruth::to_json() const {
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"id", r.id}, {"label", std::string(distillstream::to_string(r.label))},
                        {"junk", r.junk ? json(*r.junk) : json(nullptr)}});
    }
    json dups = json::array();
    std::size_t exact = 0;
    for (const auto& d : duplicates) {
        dups.push_back({{"image_id", d.image_id}, {"duplicate_of", d.duplicate_of}, {"kind", d.exact ? "exact" : "near"}});
        exact += d.exact ? 1 : 0;
    }
    return {{"spec",
             {{"n_records", spec.n_records},
              {"dup_rate", spec.dup_rate},
              {"noise_sigma", spec.noise_sigma},
              {"class_priors", spec.class_priors},
              {"seed", spec.seed},
              {"dim", spec.dim},
              {"junk_rate", spec.junk_rate},
              {"multi_image_rate", spec.multi_image_rate}}},
            {"planted_duplicates", duplicates.size()},
            {"planted_exact", exact},
            {"planted_near", duplicates.size() - exact},
            {"records", std::move(recs)},
            {"duplicates", std::move(dups)}};
}

GroundTruth GroundTruth::from_json(const json& j) {
    GroundTruth t;
    const auto& s = j.at("spec");
    t.spec.n_records = s.at("n_records").get<std::size_t>();
    t.spec.dup_rate = s.at("dup_rate").get<double>();
    t.spec.noise_sigma = s.at("noise_sigma").get<double>();
    t.spec.class_priors = s.at("class_priors").get<std::array<double, kNumClasses>>();
    t.spec.seed = s.at("seed").get<std::uint64_t>();
    t.spec.dim = s.at("dim").get<std::size_t>();
    t.spec.junk_rate = s.at("junk_rate").get<double>();
    t.spec.multi_image_rate = s.at("multi_image_rate").get<double>();
    for (const auto& r : j.at("records")) {
        RecordTruth rt{r.at("id").get<std::string>(), polarity_from_string(r.at("label").get<std::string>()), {}};
        if (!r.at("junk").is_null()) rt.junk = r.at("junk").get<std::string>();
        t.records.push_back(std::move(rt));
    }
    for (const auto& d : j.at("duplicates")) {
        t.duplicates.push_back({d.at("image_id").get<std::string>(), d.at("duplicate_of").get<std::string>(),
                                d.at("kind").get<std::string>() == "exact"});
    }
    return t;
}

SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const std::size_t n = spec.n_records;
    const auto n_dups = static_cast<std::size_t>(std::llround(spec.dup_rate * static_cast<double>(n)));
    if (n_dups > n - 1) throw ConfigError("dup_rate too high for the record count");

    // Record 0 is always an admissible original so every duplicate has a source.
    std::vector<std::size_t> candidates(n - 1);
    std::iota(candidates.begin(), candidates.end(), 1);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    std::vector<char> is_dup(n, 0), is_junk(n, 0);
    for (std::size_t i = 0; i < n_dups; ++i) is_dup[candidates[i]] = 1;
    std::bernoulli_distribution junk_coin(spec.junk_rate);
    for (std::size_t i = n_dups; i < candidates.size(); ++i) is_junk[candidates[i]] = junk_coin(rng) ? 1 : 0;

    std::discrete_distribution<std::size_t> class_dist(spec.class_priors.begin(), spec.class_priors.end());
    std::bernoulli_distribution multi_coin(spec.multi_image_rate), exact_coin(0.5);
    std::uniform_int_distribution<int> junk_kind(0, 3);

    SyntheticCorpus out;
    out.truth.spec = spec;
    struct Source {
        std::size_t record;
        std::size_t image;
    };
    std::vector<Source> sources;

    for (std::size_t i = 0; i < n; ++i) {
        MultimodalRecord rec;
        rec.id = record_id(i);
        rec.created_at = kEpochStart + static_cast<std::int64_t>(37 * i);
        RecordTruth truth{rec.id, Polarity::neutral, std::nullopt};

        if (is_dup[i]) {
            const auto src = sources[uniform_int(rng, 0, sources.size() - 1)];
            const auto& src_rec = out.records[src.record];
            const auto& src_img = src_rec.images[src.image];
            truth.label = out.truth.records[src.record].label;
            rec.text = class_text(truth.label, rng);
            const bool exact = exact_coin(rng);
            ImageItem img{rec.id + "_0", exact ? src_img.embedding : near_copy(src_img.embedding, rng)};
            out.truth.duplicates.push_back({img.image_id, src_img.image_id, exact});
            rec.images.push_back(std::move(img));
        } else {
            truth.label = static_cast<Polarity>(class_dist(rng));
            rec.text = class_text(truth.label, rng);
            const std::size_t n_images = multi_coin(rng) ? 2 : 1;
            for (std::size_t k = 0; k < n_images; ++k) {
                rec.images.push_back({rec.id + "_" + std::to_string(k),
                                      class_embedding(index_of(truth.label), spec.dim, spec.noise_sigma, rng)});
            }
            if (is_junk[i]) {
                switch (junk_kind(rng)) {
                    case 0:
                        rec.is_retweet = true;
                        truth.junk = "retweet";
                        break;
                    case 1:
                        rec.text = pick(filler_content(), rng) + " " + pick(filler_content(), rng);
                        truth.junk = "short_text";
                        break;
                    case 2:
                        rec.images.clear();
                        truth.junk = "no_image";
                        break;
                    default: {
                        std::string text;
                        for (std::size_t w = 0; w < 7; ++w) text += (w ? " " : "") + pick(foreign_words(), rng);
                        rec.text = text;
                        truth.junk = "non_english";
                        break;
                    }
                }
            } else {
                for (std::size_t k = 0; k < rec.images.size(); ++k) sources.push_back({i, k});
            }
        }
        out.records.push_back(std::move(rec));
        out.truth.records.push_back(std::move(truth));
    }
    return out;
}

std::vector<LabeledSample> generate_benchmark(const SyntheticBenchmarkSpec& spec) {
    if (spec.n == 0 || spec.dim < 8) throw ConfigError("synthetic benchmark needs n > 0 and dim >= 8");
    std::mt19937_64 rng(spec.seed);
    std::bernoulli_distribution positive_coin(spec.positive_fraction);
    const auto& remap = default_remap(spec.label_space);
    std::vector<std::string> pos_labels, neg_labels;
    for (const auto& [label, p] : remap) (p == Polarity::positive ? pos_labels : neg_labels).push_back(label);

    std::vector<LabeledSample> out;
    out.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const Polarity p = positive_coin(rng) ? Polarity::positive : Polarity::negative;
        LabeledSample s;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "b%05zu", i);
        s.id = buf;
        s.label = pick(p == Polarity::positive ? pos_labels : neg_labels, rng);
        s.embedding = class_embedding(index_of(p), spec.dim, spec.noise_sigma, rng);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace distillstream
