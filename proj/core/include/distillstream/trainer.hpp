#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "distillstream/corpus.hpp"
#include "distillstream/student.hpp"
#include "distillstream/teacher.hpp"

namespace distillstream {

struct TrainConfig {
    double lr = 1e-4;
    double adam_eps = 1e-7;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    std::uint64_t seed = 0;
    GatingConfig gating;
    double feature_noise_sigma = 0.0;
    Architecture architecture = Architecture::linear;
    std::size_t hidden = 64;
    // Replace the teacher distribution by the one-hot of its argmax.
    bool hard_labels = false;
    double heldout_fraction = 0.1;
    std::size_t threads = 1;

    AdamConfig adam() const { return {lr, adam_eps, adam_beta1, adam_beta2}; }
};

void validate(const TrainConfig& config);
nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double heldout_loss = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    std::size_t best_epoch = 0;  // 0: initial model returned
    bool stopped_early = false;
    std::size_t n_samples = 0;
    std::size_t n_train = 0;
    std::size_t n_heldout = 0;
    std::array<std::size_t, kNumClasses> total_per_class{};
    std::array<std::size_t, kNumClasses> gated_per_class{};
    // Student argmax == teacher argmax on the held-out gated samples.
    std::optional<double> heldout_agreement;
    std::uint64_t teacher_fingerprint = 0;

    std::size_t gated_total() const;
    nlohmann::json to_json() const;
};

struct TrainResult {
    StudentModel model;
    TrainReport report;
};

/// Scores each record's text once (first pair wins) and gates every pair.
std::vector<TrainingSample> label_pairs(std::span<const TextImagePair> pairs, const TeacherProvider& teacher,
                                        const GatingConfig& gating, std::size_t threads = 1);

/// Gated distillation with Adam and early stopping on held-out gated loss.
/// Multiplier-0 samples are counted, then removed before the split, so they
/// cannot perturb the optimization trajectory. Throws ConfigError when no
/// sample passes the gate.
TrainResult train_samples(std::span<const TrainingSample> samples, std::size_t dim, const TrainConfig& config);

TrainResult train(std::span<const TextImagePair> pairs, const TeacherProvider& teacher, const TrainConfig& config);

nlohmann::json checkpoint_json(const StudentModel& model, const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, const StudentModel& model, const TrainConfig& config);

struct Checkpoint {
    StudentModel model;
    TrainConfig config;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace distillstream
