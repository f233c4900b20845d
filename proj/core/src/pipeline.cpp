#include "distillstream/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <cctype>
#include <sstream>
#include <unordered_map>

namespace distillstream {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::dedup: return "dedup";
        case Stage::label: return "label";
        case Stage::train: return "train";
        case Stage::eval: return "eval";
        case Stage::generate: return "generate";
    }
    return "unknown";
}

ExitCode exit_code_for(Stage s) {
    switch (s) {
        case Stage::ingest: return ExitCode::ingest;
        case Stage::dedup: return ExitCode::dedup;
        case Stage::label: return ExitCode::label;
        case Stage::train: return ExitCode::train;
        case Stage::eval: return ExitCode::eval;
        case Stage::generate: return ExitCode::generate;
    }
    return ExitCode::internal;
}

namespace {

template <class F>
auto guarded(Stage stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
}

fs::path require(const fs::path& dir, const char* name, Stage producer) {
    fs::path p = dir / name;
    if (!fs::exists(p)) {
        throw Error("missing " + p.string() + " (run the " + std::string(to_string(producer)) + " stage first)");
    }
    return p;
}

json per_class(const std::array<std::size_t, kNumClasses>& v) {
    json j = json::object();
    for (auto p : kAllPolarities) j[std::string(to_string(p))] = v[index_of(p)];
    return j;
}

std::string eval_file_name(const std::string& benchmark) {
    std::string safe;
    for (char ch : benchmark) safe += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
    return "eval_" + safe + ".json";
}

std::string percent(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * x);
    return buf;
}

// Right-aligns text whose only multibyte character is the plus-minus sign.
std::string pad(const std::string& s, std::size_t width) {
    const std::size_t shown = s.size() - (s.find("\u00b1") != std::string::npos ? 1 : 0);
    return std::string(width > shown ? width - shown : 0, ' ') + s;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Training reads the retained pairs and labels from `cache`, writes checkpoint and report to `out`.
TrainReport train_into(const RunConfig& config, const fs::path& cache, const fs::path& out) {
    const auto pairs = read_pairs(require(cache, artifacts::kRetainedPairs, Stage::dedup), config.embedding_dim);
    if (pairs.empty()) throw Error("no retained pairs to train on");
    const auto labels = PrecomputedTeacher::load(require(cache, artifacts::kLabels, Stage::label));

    const std::uint64_t before = labels.fingerprint();
    auto result = train(pairs, labels, config.train);
    if (labels.fingerprint() != before) throw Error("teacher fingerprint changed during training");

    save_checkpoint(out / artifacts::kCheckpoint, result.model, config.train);
    write_json(out / artifacts::kTrainReport, result.report.to_json());
    return result.report;
}

std::vector<EvalResult> eval_into(const RunConfig& config, const fs::path& checkpoint, const fs::path& out,
                                  bool allow_fine_tune) {
    const auto ckpt = load_checkpoint(checkpoint);
    TrainConfig ft = config.train;
    ft.max_epochs = config.fine_tune_epochs;

    std::vector<EvalResult> results;
    for (const auto& spec_path : config.paths.eval_specs) {
        const auto spec = load_eval_spec(spec_path);
        if (!spec.data) throw ConfigError("eval spec " + spec.name + " has no data file");
        const auto data = load_benchmark(*spec.data, ckpt.model.input_dim(), spec);

        json runs = json::array();
        results.push_back(evaluate(ckpt.model, spec, data, false, ft));
        runs.push_back(results.back().to_json());
        if (allow_fine_tune && config.eval_fine_tune) {
            results.push_back(evaluate(ckpt.model, spec, data, true, ft));
            runs.push_back(results.back().to_json());
        }
        write_json(out / eval_file_name(spec.name), {{"benchmark", spec.name},
                                                     {"label_space", to_string(spec.label_space)},
                                                     {"split_protocol", to_string(spec.split_protocol)},
                                                     {"n_samples", data.size()},
                                                     {"results", std::move(runs)}});
    }
    return results;
}

void clear_artifacts(const fs::path& dir) {
    if (!fs::is_directory(dir)) return;
    for (const char* name : {artifacts::kAdmittedPairs, artifacts::kIngestReport, artifacts::kRetainedPairs,
                             artifacts::kDedupReport, artifacts::kLabels, artifacts::kLabelReport,
                             artifacts::kCheckpoint, artifacts::kTrainReport, artifacts::kManifest,
                             artifacts::kManifestText}) {
        fs::remove(dir / name);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("eval_", 0) == 0 && entry.path().extension() == ".json") fs::remove(entry.path());
    }
}

}  // namespace

json class_table_json(const ClassTable& table) {
    json j = json::object();
    ClassRow total;
    for (auto p : kAllPolarities) {
        const auto& row = table[index_of(p)];
        j[std::string(to_string(p))] = {{"tweets", row.tweets}, {"images", row.images}, {"dedup_images", row.dedup_images}};
        total.tweets += row.tweets;
        total.images += row.images;
        total.dedup_images += row.dedup_images;
    }
    j["total"] = {{"tweets", total.tweets}, {"images", total.images}, {"dedup_images", total.dedup_images}};
    return j;
}

json IngestSummary::to_json() const {
    return {{"lines", corpus.lines},
            {"records", corpus.records},
            {"malformed", corpus.malformed},
            {"malformed_lines", corpus.malformed_lines},
            {"admitted_records", admitted_records},
            {"pairs", pairs},
            {"rejected", rejected}};
}

json LabelSummary::to_json() const {
    return {{"scored_records", scored_records}, {"table", class_table_json(table)}, {"gated", per_class(gated)}};
}

IngestSummary run_ingest(const RunConfig& config) {
    return guarded(Stage::ingest, [&] {
        ensure_dir(config.paths.output_dir);
        CorpusOptions options;
        options.expected_dim = config.embedding_dim;
        options.on_malformed = config.on_malformed;
        options.sidecar_data = config.paths.sidecar;
        options.sidecar_index = config.paths.sidecar_index;

        IngestSummary summary;
        for (auto r : {Rejection::too_few_words, Rejection::no_image, Rejection::retweet, Rejection::not_english}) {
            summary.rejected[std::string(to_string(r))] = 0;
        }
        const StopwordRatioCheck language(config.filter.english_stopword_ratio_min);
        std::vector<TextImagePair> pairs;
        CorpusReader reader(config.paths.corpus, options);
        while (auto record = reader.next()) {
            const auto why = screen(*record, config.filter, &language);
            if (why != Rejection::none) {
                ++summary.rejected[std::string(to_string(why))];
                continue;
            }
            ++summary.admitted_records;
            for (auto& p : explode_pairs(*record)) pairs.push_back(std::move(p));
        }
        summary.corpus = reader.stats();
        summary.pairs = pairs.size();
        sort_pairs(pairs);
        write_pairs(config.paths.output_dir / artifacts::kAdmittedPairs, pairs);
        write_json(config.paths.output_dir / artifacts::kIngestReport, summary.to_json());
        return summary;
    });
}

DedupReport run_dedup(const RunConfig& config) {
    return guarded(Stage::dedup, [&] {
        const auto& dir = config.paths.output_dir;
        const auto pairs = read_pairs(require(dir, artifacts::kAdmittedPairs, Stage::ingest), config.embedding_dim);
        auto result = dedup_stream(pairs, config.embedding_dim, config.dedup);
        write_pairs(dir / artifacts::kRetainedPairs, result.retained);
        write_json(dir / artifacts::kDedupReport, result.report.to_json(true));
        return std::move(result.report);
    });
}

LabelSummary run_label(const RunConfig& config) {
    return guarded(Stage::label, [&] {
        const auto& dir = config.paths.output_dir;
        const auto admitted = read_pairs(require(dir, artifacts::kAdmittedPairs, Stage::ingest), config.embedding_dim);
        const auto retained = read_pairs(require(dir, artifacts::kRetainedPairs, Stage::dedup), config.embedding_dim);
        const auto teacher = config.make_teacher();

        LabelSummary summary;
        std::unordered_map<std::string, SentimentDistribution> scores;
        std::ofstream out(dir / artifacts::kLabels);
        if (!out) throw Error("cannot write labels file");
        for (const auto& pair : admitted) {
            auto it = scores.find(pair.record_id);
            if (it == scores.end()) {
                it = scores.emplace(pair.record_id, teacher->score(TeacherQuery{pair.record_id, pair.text})).first;
                ++summary.table[index_of(it->second.argmax())].tweets;
                out << json{{"id", pair.record_id}, {"p", it->second.probs()}}.dump() << '\n';
            }
            ++summary.table[index_of(it->second.argmax())].images;
        }
        out.close();
        summary.scored_records = scores.size();

        for (const auto& pair : retained) {
            const auto it = scores.find(pair.record_id);
            if (it == scores.end()) throw Error("retained pair " + pair.image.image_id + " has no admitted record");
            const auto g = gate(it->second, config.train.gating);
            ++summary.table[index_of(g.argmax_class)].dedup_images;
            if (g.multiplier == 1) ++summary.gated[index_of(g.argmax_class)];
        }

        json report = summary.to_json();
        report["teacher"] = teacher->describe();
        report["teacher_fingerprint"] = hex64(teacher->fingerprint());
        report["gating"] = config.train.gating.c;
        write_json(dir / artifacts::kLabelReport, report);
        return summary;
    });
}

TrainReport run_train(const RunConfig& config) {
    return guarded(Stage::train, [&] { return train_into(config, config.paths.output_dir, config.paths.output_dir); });
}

std::vector<EvalResult> run_eval(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
    return guarded(Stage::eval, [&] {
        const auto& dir = config.paths.output_dir;
        ensure_dir(dir);
        const fs::path ckpt = checkpoint ? *checkpoint : require(dir, artifacts::kCheckpoint, Stage::train);
        return eval_into(config, ckpt, dir, true);
    });
}

json RunManifest::to_json() const {
    json stage_counts = json::object();
    if (ingest) stage_counts["ingest"] = ingest->to_json();
    if (dedup) stage_counts["dedup"] = dedup->to_json(false);
    if (label) stage_counts["label"] = label->to_json();
    if (train) {
        json t = train->to_json();
        t.erase("epochs");
        t["epochs_run"] = train->epochs.size();
        stage_counts["train"] = std::move(t);
    }
    json evals = json::array();
    for (const auto& e : eval) evals.push_back(e.to_json());

    json timing = json::object();
    for (const auto& s : stages) timing[std::string(to_string(s.stage))] = s.wall.count();

    json stage_status = json::array();
    for (const auto& s : stages) stage_status.push_back(to_string(s.stage));

    return {{"tool", "distillstream"},
            {"tool_version", kToolVersion},
            {"config_hash", config_hash},
            {"seed", seed},
            {"status", status},
            {"failed_stage", failed_stage ? json(to_string(*failed_stage)) : json(nullptr)},
            {"error", error.empty() ? json(nullptr) : json(error)},
            {"completed_stages", std::move(stage_status)},
            {"table", label ? class_table_json(label->table) : json(nullptr)},
            {"stages", std::move(stage_counts)},
            {"eval", std::move(evals)},
            {"timing_ms", std::move(timing)}};
}

std::string RunManifest::to_text() const {
    std::ostringstream os;
    os << "distillstream " << kToolVersion << "  config " << config_hash << "  seed " << seed << "  status "
       << status;
    if (failed_stage) os << " (failed at " << to_string(*failed_stage) << ")";
    os << "\n";
    if (!error.empty()) os << "error: " << error << "\n";

    if (label) {
        os << "\n" << std::left << std::setw(10) << "class" << std::right << std::setw(10) << "tweets"
           << std::setw(10) << "images" << std::setw(14) << "dedup images" << std::setw(10) << "gated" << "\n";
        ClassRow total;
        std::size_t gated_total = 0;
        for (auto p : kAllPolarities) {
            const auto& row = label->table[index_of(p)];
            os << std::left << std::setw(10) << to_string(p) << std::right << std::setw(10) << row.tweets
               << std::setw(10) << row.images << std::setw(14) << row.dedup_images << std::setw(10)
               << label->gated[index_of(p)] << "\n";
            total.tweets += row.tweets;
            total.images += row.images;
            total.dedup_images += row.dedup_images;
            gated_total += label->gated[index_of(p)];
        }
        os << std::left << std::setw(10) << "total" << std::right << std::setw(10) << total.tweets << std::setw(10)
           << total.images << std::setw(14) << total.dedup_images << std::setw(10) << gated_total << "\n";
    }

    os << "\n";
    if (ingest) {
        os << "records read      " << ingest->corpus.records << " (" << ingest->corpus.malformed << " malformed lines)\n";
        os << "admitted records  " << ingest->admitted_records << "\n";
        os << "admitted pairs    " << ingest->pairs << "\n";
    }
    if (dedup) {
        os << "retained pairs    " << dedup->stats.retained << " (" << dedup->stats.dropped << " dropped, "
           << percent(dedup->reduction_fraction()) << " reduction)\n";
    }
    if (train) {
        os << "gated samples     " << train->gated_total() << "\n";
        os << "best epoch        " << train->best_epoch << " of " << train->epochs.size() << "\n";
        if (train->heldout_agreement) os << "held-out agreement " << percent(*train->heldout_agreement) << "\n";
    }
    if (!eval.empty()) {
        os << "\n" << std::left << std::setw(20) << "benchmark" << std::setw(12) << "mode" << "accuracy\n";
        for (const auto& e : eval) {
            os << std::left << std::setw(20) << e.benchmark << std::setw(12) << (e.fine_tune ? "fine-tune" : "zero-shot")
               << e.summary() << "\n";
        }
    }
    return os.str();
}

RunManifest run_pipeline(const RunConfig& config) {
    const auto& dir = config.paths.output_dir;
    ensure_dir(dir);
    clear_artifacts(dir);

    RunManifest m;
    m.config_hash = distillstream::config_hash(config);
    m.seed = config.seed;

    const auto timed = [&](Stage stage, auto&& body) {
        const auto start = std::chrono::steady_clock::now();
        body();
        m.stages.push_back(
            {stage, std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)});
    };

    try {
        timed(Stage::ingest, [&] { m.ingest = run_ingest(config); });
        timed(Stage::dedup, [&] { m.dedup = run_dedup(config); });
        timed(Stage::label, [&] { m.label = run_label(config); });
        timed(Stage::train, [&] { m.train = run_train(config); });
        timed(Stage::eval, [&] { m.eval = run_eval(config); });
    } catch (const StageError& e) {
        m.status = "partial";
        m.failed_stage = e.stage();
        m.error = e.cause();
        write_json(dir / artifacts::kManifest, m.to_json());
        write_text(dir / artifacts::kManifestText, m.to_text());
        throw;
    }
    write_json(dir / artifacts::kManifest, m.to_json());
    write_text(dir / artifacts::kManifestText, m.to_text());
    return m;
}

json AblationRow::to_json() const {
    json evals = json::array();
    for (const auto& e : zero_shot) evals.push_back(e.to_json());
    return {{"c", gating.c},
            {"gated", per_class(gated)},
            {"gated_total", gated_total},
            {"heldout_agreement", heldout_agreement ? json(*heldout_agreement) : json(nullptr)},
            {"zero_shot", std::move(evals)}};
}

json AblationTable::to_json() const {
    json j = json::array();
    for (const auto& r : rows) j.push_back(r.to_json());
    return {{"rows", std::move(j)}};
}

std::string AblationTable::to_text() const {
    std::ostringstream os;
    os << std::right << std::setw(6) << "c_pos" << std::setw(7) << "c_neu" << std::setw(7) << "c_neg"
       << std::setw(10) << "gated" << std::setw(11) << "agreement";
    if (!rows.empty()) {
        for (const auto& e : rows.front().zero_shot) os << std::setw(14) << e.benchmark;
    }
    os << "\n";
    for (const auto& r : rows) {
        char c[64];
        std::snprintf(c, sizeof(c), "%6.2f %6.2f %6.2f", r.gating.c[0], r.gating.c[1], r.gating.c[2]);
        os << c << std::setw(10) << r.gated_total << std::setw(11)
           << (r.heldout_agreement ? percent(*r.heldout_agreement) : std::string("-"));
        for (const auto& e : r.zero_shot) os << pad(e.summary(), 14);
        os << "\n";
    }
    return os.str();
}

AblationTable run_ablation(const RunConfig& base, const std::vector<GatingConfig>& grid) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    for (const auto& g : grid) validate(g);
    const auto& dir = base.paths.output_dir;
    ensure_dir(dir);

    // Shared cache: ingest, dedup and teacher labels do not depend on the gating thresholds.
    run_ingest(base);
    run_dedup(base);
    run_label(base);

    AblationTable table;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        RunConfig row_config = base;
        row_config.train.gating = grid[i];
        const fs::path row_dir = dir / "ablation" / ("row_" + std::to_string(i));
        ensure_dir(row_dir);

        AblationRow row;
        row.gating = grid[i];
        const auto report =
            guarded(Stage::train, [&] { return train_into(row_config, dir, row_dir); });
        row.gated = report.gated_per_class;
        row.gated_total = report.gated_total();
        row.heldout_agreement = report.heldout_agreement;
        row.zero_shot = guarded(Stage::eval, [&] {
            return eval_into(row_config, row_dir / artifacts::kCheckpoint, row_dir, false);
        });
        table.rows.push_back(std::move(row));
    }
    write_json(dir / artifacts::kAblation, table.to_json());
    write_text(dir / artifacts::kAblationText, table.to_text());
    return table;
}

GeneratedFiles gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir, const GenerateOptions& options) {
    return guarded(Stage::generate, [&] {
        validate(spec);
        ensure_dir(out_dir);
        const auto corpus = generate_corpus(spec);

        GeneratedFiles files;
        files.corpus = out_dir / "corpus.jsonl";
        files.ground_truth = out_dir / "ground_truth.json";
        files.positive_lexicon = out_dir / "positive.txt";
        files.negative_lexicon = out_dir / "negative.txt";
        files.benchmark_data = out_dir / "td_synth.jsonl";
        files.benchmark_spec = out_dir / "td_synth.json";
        files.config = out_dir / "config.toml";

        if (options.sidecar) {
            std::vector<ImageItem> items;
            for (const auto& r : corpus.records) items.insert(items.end(), r.images.begin(), r.images.end());
            EmbeddingSidecar::write(out_dir / "embeddings.emb", out_dir / "embeddings.emb.idx", items, spec.dim);
            std::ofstream out(files.corpus);
            if (!out) throw Error("cannot write " + files.corpus.string());
            for (const auto& r : corpus.records) out << record_to_json_line(r, true) << '\n';
        } else {
            write_corpus(files.corpus, corpus.records);
        }
        write_json(files.ground_truth, corpus.truth.to_json());

        std::string pos, neg;
        for (const auto& w : synthetic_positive_words()) pos += w + "\n";
        for (const auto& w : synthetic_negative_words()) neg += w + "\n";
        write_text(files.positive_lexicon, pos);
        write_text(files.negative_lexicon, neg);

        SyntheticBenchmarkSpec bench;
        bench.name = "td_synth";
        bench.n = options.benchmark_size;
        bench.dim = spec.dim;
        bench.noise_sigma = spec.noise_sigma;
        bench.seed = spec.seed + 1;
        const auto samples = generate_benchmark(bench);
        write_benchmark(files.benchmark_data, samples);
        write_json(files.benchmark_spec, {{"name", bench.name},
                                          {"label_space", to_string(LabelSpace::binary_polarity)},
                                          {"split_protocol", to_string(SplitProtocol::kfold5)},
                                          {"seed", spec.seed},
                                          {"data", files.benchmark_data.filename().string()}});

        std::ostringstream toml;
        toml << "seed = " << spec.seed << "\n"
             << "embedding_dim = " << spec.dim << "\n"
             << "threads = 1\n\n"
             << "[paths]\n"
             << "corpus = \"corpus.jsonl\"\n";
        if (options.sidecar) {
            toml << "sidecar = \"embeddings.emb\"\n"
                 << "sidecar_index = \"embeddings.emb.idx\"\n";
        }
        toml << "positive_lexicon = \"positive.txt\"\n"
             << "negative_lexicon = \"negative.txt\"\n"
             << "output_dir = \"out\"\n"
             << "eval_specs = [\"td_synth.json\"]\n\n"
             << "[gating]\n"
             << "c = [0.90, 0.90, 0.70]\n\n"
             << "[ablation]\n"
             << "grid = [[0.0, 0.0, 0.0], [0.70, 0.70, 0.70], [0.90, 0.90, 0.70]]\n";
        write_text(files.config, toml.str());
        return files;
    });
}

}  // namespace distillstream
