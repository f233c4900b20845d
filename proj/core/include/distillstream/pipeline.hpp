#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distillstream/corpus.hpp"
#include "distillstream/dedup.hpp"
#include "distillstream/errors.hpp"
#include "distillstream/eval.hpp"
#include "distillstream/synthetic.hpp"
#include "distillstream/teacher.hpp"
#include "distillstream/trainer.hpp"

namespace distillstream {

inline constexpr const char* kToolVersion = "0.1.0";

// Process exit codes, one per failure class. Stable across releases.
enum class ExitCode : int {
    ok = 0,
    internal = 1,
    usage = 2,
    ingest = 3,
    dedup = 4,
    label = 5,
    train = 6,
    eval = 7,
    generate = 8,
};

enum class Stage { ingest, dedup, label, train, eval, generate };

std::string_view to_string(Stage s);
ExitCode exit_code_for(Stage s);

/// A stage failure: names the stage and carries the underlying cause.
class StageError : public Error {
public:
    StageError(Stage stage, const std::string& cause)
        : Error(std::string(to_string(stage)) + " stage failed: " + cause), stage_(stage), cause_(cause) {}

    Stage stage() const noexcept { return stage_; }
    const std::string& cause() const noexcept { return cause_; }
    ExitCode exit_code() const noexcept { return exit_code_for(stage_); }

private:
    Stage stage_;
    std::string cause_;
};

struct RunPaths {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> sidecar;
    std::optional<std::filesystem::path> sidecar_index;
    std::optional<std::filesystem::path> positive_lexicon;
    std::optional<std::filesystem::path> negative_lexicon;
    std::optional<std::filesystem::path> teacher;
    std::filesystem::path output_dir = "out";
    std::vector<std::filesystem::path> eval_specs;
};

struct RunConfig {
    RunPaths paths;
    std::size_t embedding_dim = 0;
    MalformedPolicy on_malformed = MalformedPolicy::skip;
    FilterPolicy filter;
    DedupConfig dedup;
    TrainConfig train;  // train.gating holds the confidence thresholds
    double lexicon_temperature = 1.0;
    bool eval_fine_tune = false;
    std::size_t fine_tune_epochs = 20;
    std::vector<GatingConfig> ablation_grid;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool verbose = false;

    // Propagates seed and thread cap into the stage configs.
    void apply_globals();
    std::unique_ptr<TeacherProvider> make_teacher() const;
};

/// Reads a TOML run configuration. `overrides` are "dotted.key=value" strings
/// (values parsed as TOML, bare words as strings). Relative paths resolve
/// against the config file's directory; DISTILLSTREAM_OUT replaces the
/// output directory when set.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

void validate(const RunConfig& config);
nlohmann::json to_json(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Artifact file names inside the output directory.
namespace artifacts {
inline constexpr const char* kAdmittedPairs = "admitted_pairs.jsonl";
inline constexpr const char* kIngestReport = "ingest_report.json";
inline constexpr const char* kRetainedPairs = "retained_pairs.jsonl";
inline constexpr const char* kDedupReport = "dedup_report.json";
inline constexpr const char* kLabels = "labels.jsonl";
inline constexpr const char* kLabelReport = "label_report.json";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kManifestText = "manifest.txt";
inline constexpr const char* kAblation = "ablation.json";
inline constexpr const char* kAblationText = "ablation.txt";
}  // namespace artifacts

struct ClassRow {
    std::size_t tweets = 0;
    std::size_t images = 0;
    std::size_t dedup_images = 0;
};

// Per-class corpus bookkeeping by teacher argmax: collected tweets and images, deduplicated images.
using ClassTable = std::array<ClassRow, kNumClasses>;

nlohmann::json class_table_json(const ClassTable& table);

struct IngestSummary {
    CorpusStats corpus;
    std::size_t admitted_records = 0;
    std::size_t pairs = 0;
    std::map<std::string, std::size_t> rejected;

    nlohmann::json to_json() const;
};

struct LabelSummary {
    std::size_t scored_records = 0;
    ClassTable table{};
    std::array<std::size_t, kNumClasses> gated{};

    nlohmann::json to_json() const;
};

// Individual stages. Each reads its inputs from and writes its outputs to the output directory.
IngestSummary run_ingest(const RunConfig& config);
DedupReport run_dedup(const RunConfig& config);
LabelSummary run_label(const RunConfig& config);
TrainReport run_train(const RunConfig& config);
std::vector<EvalResult> run_eval(const RunConfig& config,
                                 const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

struct StageRecord {
    Stage stage;
    std::chrono::milliseconds wall{0};
};

struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string status = "complete";
    std::optional<Stage> failed_stage;
    std::string error;
    std::vector<StageRecord> stages;
    std::optional<IngestSummary> ingest;
    std::optional<DedupReport> dedup;
    std::optional<LabelSummary> label;
    std::optional<TrainReport> train;
    std::vector<EvalResult> eval;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Runs ingest, dedup, label, train and eval in order. Always writes the
/// manifest; on failure the manifest is marked partial and a StageError is thrown.
RunManifest run_pipeline(const RunConfig& config);

struct AblationRow {
    GatingConfig gating;
    std::array<std::size_t, kNumClasses> gated{};
    std::size_t gated_total = 0;
    std::optional<double> heldout_agreement;
    std::vector<EvalResult> zero_shot;

    nlohmann::json to_json() const;
};

struct AblationTable {
    std::vector<AblationRow> rows;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// One training run per gating entry over a shared ingest/dedup/label cache.
AblationTable run_ablation(const RunConfig& base, const std::vector<GatingConfig>& grid);

struct GeneratedFiles {
    std::filesystem::path corpus;
    std::filesystem::path ground_truth;
    std::filesystem::path positive_lexicon;
    std::filesystem::path negative_lexicon;
    std::filesystem::path benchmark_spec;
    std::filesystem::path benchmark_data;
    std::filesystem::path config;
};

struct GenerateOptions {
    bool sidecar = false;
    std::size_t benchmark_size = 200;
};

/// Writes a synthetic corpus, its ground truth, the matching lexicons, a
/// synthetic binary benchmark and a ready-to-run config.toml into `out_dir`.
GeneratedFiles gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir,
                             const GenerateOptions& options = {});

}  // namespace distillstream
