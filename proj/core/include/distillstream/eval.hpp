#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "distillstream/student.hpp"
#include "distillstream/trainer.hpp"

namespace distillstream {

enum class LabelSpace { binary_polarity, emotions6, emotions8 };
enum class SplitProtocol { kfold5, random_80_5_15 };

LabelSpace label_space_from_string(const std::string& s);
std::string to_string(LabelSpace s);
SplitProtocol split_protocol_from_string(const std::string& s);
std::string to_string(SplitProtocol p);

using RemapTable = std::map<std::string, Polarity>;

// FI: 8 emotions, 4 per polarity.
const RemapTable& fi_remap();
// EmotionROI: 6 emotions, Joy and Surprise positive.
const RemapTable& emotion_roi_remap();
const RemapTable& binary_remap();
const RemapTable& default_remap(LabelSpace space);

/// Benchmark descriptor. `remap` keys are the source labels of the label space.
struct EvalSpec {
    std::string name;
    LabelSpace label_space = LabelSpace::binary_polarity;
    RemapTable remap = binary_remap();
    SplitProtocol split_protocol = SplitProtocol::kfold5;
    std::size_t n_repeats = 5;
    std::uint64_t seed = 0;
    // Benchmark data file; relative paths resolve against the spec file.
    std::optional<std::filesystem::path> data;
};

EvalSpec make_eval_spec(std::string name, LabelSpace space, SplitProtocol protocol, std::uint64_t seed = 0);
void validate(const EvalSpec& spec);
EvalSpec load_eval_spec(const std::filesystem::path& path);
nlohmann::json to_json(const EvalSpec& spec);

struct LabeledSample {
    std::string id;
    std::vector<float> embedding;
    std::string label;
};

// JSON-Lines {"id", "label", "embedding"}; labels are checked against the spec.
std::vector<LabeledSample> load_benchmark(const std::filesystem::path& path, std::size_t expected_dim,
                                          const EvalSpec& spec);
void write_benchmark(const std::filesystem::path& path, std::span<const LabeledSample> samples);

// Case-insensitive lookup in spec.remap; SchemaError on an unknown label.
Polarity remap_label(const std::string& label, const EvalSpec& spec);

// Argmax over positive and negative only; ties go to positive.
Polarity masked_predict(const StudentModel& model, std::span<const float> x);
Polarity masked_predict(const SentimentDistribution& dist);

double accuracy(std::span<const Polarity> predictions, std::span<const Polarity> labels);

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

// Seeded shuffle, then k contiguous folds; the first M mod k folds get one extra id.
std::vector<Fold> kfold_splits(std::span<const std::string> ids, std::size_t k, std::uint64_t seed);

struct Split3 {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Per repeat r: shuffle with seed + r, cut floor(0.80 M), floor(0.05 M), remainder.
std::vector<Split3> random_splits_80_5_15(std::span<const std::string> ids, std::size_t n_repeats,
                                          std::uint64_t seed);

struct SplitResult {
    std::size_t split = 0;
    double accuracy = 0.0;
    std::size_t n_test = 0;
};

struct EvalResult {
    std::string benchmark;
    bool fine_tune = false;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over splits
    std::vector<SplitResult> per_split;

    nlohmann::json to_json() const;
    std::string summary() const;  // e.g. "92.4±2.0"
};

// Percentages with one decimal: 0.924, 0.02 -> "92.4±2.0".
std::string format_mean_std(double mean, double std);

/// Continues training on binary targets (one-hot positive/negative); the
/// neutral column of W2 and b2 stays frozen. With a validation set the epoch
/// with best validation accuracy is kept, otherwise the final epoch.
StudentModel fine_tune(const StudentModel& model, std::span<const LabeledSample> train,
                       std::span<const LabeledSample> val, const EvalSpec& spec, const TrainConfig& config);

/// Runs the benchmark protocol. Zero-shot (fine_tune=false) never modifies
/// `model`; fine-tuning works on per-split copies seeded with seed + split.
EvalResult evaluate(const StudentModel& model, const EvalSpec& spec, std::span<const LabeledSample> data,
                    bool fine_tune, const TrainConfig& config = {});

}  // namespace distillstream
