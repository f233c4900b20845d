#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distillstream/pipeline.hpp"

namespace ds = distillstream;

namespace {

struct GlobalOptions {
    std::string config_path = "config.toml";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool verbose = false;
    std::vector<std::string> overrides;
};

ds::RunConfig load(const GlobalOptions& g) {
    auto config = ds::load_run_config(g.config_path, g.overrides);
    if (g.seed) config.seed = *g.seed;
    if (g.threads) config.threads = *g.threads;
    config.verbose = config.verbose || g.verbose;
    config.apply_globals();
    ds::validate(config);
    return config;
}

std::vector<ds::GatingConfig> parse_grid(const std::string& text) {
    // "0,0,0;.7,.7,.7"
    std::vector<ds::GatingConfig> grid;
    std::stringstream rows(text);
    std::string row;
    while (std::getline(rows, row, ';')) {
        std::stringstream cells(row);
        std::string cell;
        std::vector<double> values;
        while (std::getline(cells, cell, ',')) values.push_back(std::stod(cell));
        if (values.size() != ds::kNumClasses) throw ds::ConfigError("grid rows need 3 thresholds: '" + row + "'");
        ds::GatingConfig g;
        for (std::size_t k = 0; k < ds::kNumClasses; ++k) g.c[k] = values[k];
        ds::validate(g);
        grid.push_back(g);
    }
    return grid;
}

void print_eval(const std::vector<ds::EvalResult>& results) {
    for (const auto& r : results) {
        std::cout << r.benchmark << (r.fine_tune ? " fine-tune " : " zero-shot ") << r.summary() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distillstream: cross-modal sentiment distillation over image/text streams"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", ds::kToolVersion);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Run configuration (TOML)");
    app.add_option("--seed", g.seed, "Override the configured seed");
    app.add_option("--threads", g.threads, "Worker cap for every stage")->check(CLI::PositiveNumber);
    app.add_flag("--verbose,-v", g.verbose, "Print stage details");
    app.add_option("--set", g.overrides, "Config override key=value (repeatable)");

    auto* ingest = app.add_subcommand("ingest", "Filter the corpus into text-image pairs");
    auto* dedup = app.add_subcommand("dedup", "Drop near-duplicate images");
    auto* label = app.add_subcommand("label", "Score texts with the teacher");
    auto* train = app.add_subcommand("train", "Train the image student");
    auto* eval = app.add_subcommand("eval", "Evaluate the student on the configured benchmarks");
    std::optional<std::string> checkpoint;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (default: output dir)");
    auto* run = app.add_subcommand("run", "Run every stage and write the manifest");
    auto* ablate = app.add_subcommand("ablate", "Train once per gating threshold row");
    std::string grid_text;
    ablate->add_option("--grid", grid_text, "Rows like \"0,0,0;.7,.7,.7\" (default: [ablation] grid)");

    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus with ground truth");
    ds::SyntheticSpec spec;
    std::string gen_out = "synthetic";
    std::vector<double> priors;
    ds::GenerateOptions gen_options;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--n-records", spec.n_records)->check(CLI::PositiveNumber);
    gen->add_option("--dup-rate", spec.dup_rate);
    gen->add_option("--noise-sigma", spec.noise_sigma);
    gen->add_option("--priors", priors, "Class priors: positive neutral negative")->expected(3);
    gen->add_option("--dim", spec.dim)->check(CLI::PositiveNumber);
    gen->add_option("--junk-rate", spec.junk_rate);
    gen->add_option("--multi-image-rate", spec.multi_image_rate);
    gen->add_option("--benchmark-size", gen_options.benchmark_size);
    gen->add_flag("--sidecar", gen_options.sidecar, "Store embeddings in a binary sidecar file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ds::ExitCode::usage);
    }

    try {
        if (gen->parsed()) {
            if (g.seed) spec.seed = *g.seed;
            if (!priors.empty()) spec.class_priors = {priors[0], priors[1], priors[2]};
            const auto files = ds::gen_synthetic(spec, gen_out, gen_options);
            std::cout << "wrote " << files.corpus.string() << " and " << files.config.string() << "\n";
            return 0;
        }

        ds::RunConfig config;
        try {
            config = load(g);
        } catch (const ds::ConfigError& e) {
            std::cerr << "distillstream: " << e.what() << "\n";
            return static_cast<int>(ds::ExitCode::usage);
        }

        if (ingest->parsed()) {
            const auto s = ds::run_ingest(config);
            std::cout << "admitted " << s.admitted_records << " of " << s.corpus.records << " records, " << s.pairs
                      << " pairs";
            if (s.corpus.malformed > 0) std::cout << " (" << s.corpus.malformed << " malformed lines skipped)";
            std::cout << "\n";
        } else if (dedup->parsed()) {
            const auto r = ds::run_dedup(config);
            std::cout << "retained " << r.stats.retained << " of " << r.stats.seen << " pairs\n";
        } else if (label->parsed()) {
            const auto s = ds::run_label(config);
            std::cout << "scored " << s.scored_records << " records\n";
            if (config.verbose) std::cout << ds::class_table_json(s.table).dump(2) << "\n";
        } else if (train->parsed()) {
            const auto r = ds::run_train(config);
            std::cout << "trained on " << r.n_train << " gated samples, best epoch " << r.best_epoch << "\n";
            if (config.verbose) std::cout << r.to_json().dump(2) << "\n";
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> ckpt;
            if (checkpoint) ckpt = *checkpoint;
            print_eval(ds::run_eval(config, ckpt));
        } else if (run->parsed()) {
            const auto m = ds::run_pipeline(config);
            std::cout << m.to_text();
        } else if (ablate->parsed()) {
            auto grid = grid_text.empty() ? config.ablation_grid : parse_grid(grid_text);
            if (grid.empty()) grid.push_back(config.train.gating);
            std::cout << ds::run_ablation(config, grid).to_text();
        }
    } catch (const ds::StageError& e) {
        std::cerr << "distillstream: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const ds::ConfigError& e) {
        std::cerr << "distillstream: " << e.what() << "\n";
        return static_cast<int>(ds::ExitCode::usage);
    } catch (const std::exception& e) {
        std::cerr << "distillstream: internal error: " << e.what() << "\n";
        return static_cast<int>(ds::ExitCode::internal);
    }
    return 0;
}
