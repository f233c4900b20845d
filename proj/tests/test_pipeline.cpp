#include <doctest.h>

#include <cstdlib>
#include <set>

#include <nlohmann/json.hpp>

#include "distillstream/dedup.hpp"
#include "distillstream/pipeline.hpp"
#include "support.hpp"

using namespace distillstream;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = DISTILLSTREAM_DATA_DIR;
const fs::path kGolden = DISTILLSTREAM_GOLDEN_DIR;

RunConfig demo_config(const fs::path& out, std::vector<std::string> overrides = {}) {
    overrides.push_back("paths.output_dir=\"" + out.string() + "\"");
    return load_run_config(kData / "demo" / "config.toml", overrides);
}

json load_json(const fs::path& p) { return json::parse(testing::read_file(p)); }

// The integer bookkeeping of a run, independent of float formatting.
json counts_of(const json& manifest) {
    const auto& s = manifest.at("stages");
    json train = s.at("train");
    return {{"table", manifest.at("table")},
            {"ingest", s.at("ingest")},
            {"dedup", {{"seen", s.at("dedup").at("seen")},
                       {"retained", s.at("dedup").at("retained")},
                       {"dropped", s.at("dedup").at("dropped")}}},
            {"gated", s.at("label").at("gated")},
            {"train", {{"n_samples", train.at("n_samples")},
                       {"n_gated", train.at("n_gated")},
                       {"n_train", train.at("n_train")},
                       {"n_heldout", train.at("n_heldout")}}}};
}

std::size_t sum(const json& per_class) {
    std::size_t n = 0;
    for (const auto& [k, v] : per_class.items()) n += v.get<std::size_t>();
    return n;
}

class ScopedEnv {
public:
    ScopedEnv(const char* name, const std::string& value) : name_(name) { setenv(name, value.c_str(), 1); }
    ~ScopedEnv() { unsetenv(name_); }

private:
    const char* name_;
};

}  // namespace

TEST_CASE("config loading resolves paths and applies overrides") {
    testing::TempDir dir;
    const auto c = demo_config(dir.path());
    CHECK(c.paths.corpus == kData / "demo" / "corpus.jsonl");
    CHECK(c.paths.eval_specs.size() == 1);
    CHECK(c.seed == 7);
    CHECK(c.train.seed == 7);
    CHECK(c.train.gating.c == std::array<double, 3>{0.90, 0.90, 0.70});
    CHECK(c.dedup.tau == 0.98875);

    const auto o = demo_config(dir.path(), {"seed=11", "gating.c=[0.1,0.2,0.3]", "dedup.index=lsh", "threads=3"});
    CHECK(o.seed == 11);
    CHECK(o.train.seed == 11);
    CHECK(o.train.gating.c == std::array<double, 3>{0.1, 0.2, 0.3});
    CHECK(o.dedup.index_kind == IndexKind::lsh);
    CHECK(o.dedup.threads == 3);
    CHECK(o.train.threads == 3);
}

TEST_CASE("config errors") {
    testing::TempDir dir;
    CHECK_THROWS_AS(demo_config(dir.path(), {"gating.bogus=1"}), ConfigError);
    CHECK_THROWS_AS(demo_config(dir.path(), {"seed=\"seven\""}), ConfigError);
    CHECK_THROWS_AS(demo_config(dir.path(), {"no-equals-sign"}), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir / "missing.toml"), ConfigError);
    testing::write_file(dir / "bad.toml", "seed = 1\n[unknown]\nx = 2\n");
    CHECK_THROWS_AS(load_run_config(dir / "bad.toml"), ConfigError);
    testing::write_file(dir / "broken.toml", "seed = = 1\n");
    CHECK_THROWS_AS(load_run_config(dir / "broken.toml"), ConfigError);
}

TEST_CASE("DISTILLSTREAM_OUT replaces the output directory") {
    testing::TempDir dir;
    ScopedEnv env("DISTILLSTREAM_OUT", (dir / "elsewhere").string());
    const auto c = load_run_config(kData / "demo" / "config.toml");
    CHECK(c.paths.output_dir == dir / "elsewhere");
}

TEST_CASE("config hash ignores the output directory but not the settings") {
    testing::TempDir a, b;
    CHECK(config_hash(demo_config(a.path())) == config_hash(demo_config(b.path())));
    CHECK(config_hash(demo_config(a.path())) != config_hash(demo_config(a.path(), {"seed=8"})));
    CHECK(config_hash(demo_config(a.path())).size() == 16);
}

TEST_CASE("demo run matches the golden counts and the count algebra holds") {
    testing::TempDir dir;
    const auto m = run_pipeline(demo_config(dir.path()));
    CHECK(m.status == "complete");
    const auto manifest = load_json(dir / artifacts::kManifest);
    CHECK(manifest == m.to_json());

    const auto golden_path = kGolden / "demo_counts.json";
    REQUIRE_MESSAGE(fs::exists(golden_path), "golden file missing");
    CHECK(counts_of(manifest) == load_json(golden_path));

    const auto& s = manifest.at("stages");
    const auto& ingest = s.at("ingest");
    CHECK(ingest.at("admitted_records").get<std::size_t>() + sum(ingest.at("rejected")) ==
          ingest.at("records").get<std::size_t>());
    CHECK(ingest.at("pairs") == s.at("dedup").at("seen"));
    CHECK(s.at("dedup").at("retained").get<std::size_t>() + s.at("dedup").at("dropped").get<std::size_t>() ==
          s.at("dedup").at("seen").get<std::size_t>());
    const auto& total = manifest.at("table").at("total");
    CHECK(total.at("tweets") == ingest.at("admitted_records"));
    CHECK(total.at("images") == ingest.at("pairs"));
    CHECK(total.at("dedup_images") == s.at("dedup").at("retained"));
    CHECK(sum(s.at("label").at("gated")) == s.at("train").at("n_gated").get<std::size_t>());
    CHECK(s.at("train").at("n_samples") == s.at("dedup").at("retained"));
    CHECK(s.at("train").at("n_train").get<std::size_t>() + s.at("train").at("n_heldout").get<std::size_t>() ==
          s.at("train").at("n_gated").get<std::size_t>());
    for (auto p : {"positive", "neutral", "negative"}) {
        const auto& row = manifest.at("table").at(p);
        CHECK(row.at("dedup_images").get<std::size_t>() <= row.at("images").get<std::size_t>());
        CHECK(s.at("label").at("gated").at(p).get<std::size_t>() <= row.at("dedup_images").get<std::size_t>());
    }
    CHECK(manifest.at("eval").size() == 1);
    CHECK(fs::exists(dir / "eval_td_synth.json"));
    CHECK(testing::read_file(dir / artifacts::kManifestText).find("td_synth") != std::string::npos);
}

TEST_CASE("two runs with the same seed produce identical artifacts") {
    testing::TempDir a, b;
    run_pipeline(demo_config(a.path(), {"threads=1"}));
    run_pipeline(demo_config(b.path(), {"threads=4"}));
    for (const char* f : {artifacts::kAdmittedPairs, artifacts::kRetainedPairs, artifacts::kLabels,
                          artifacts::kCheckpoint, artifacts::kManifestText, "eval_td_synth.json"}) {
        CAPTURE(f);
        CHECK(testing::read_file(a / f) == testing::read_file(b / f));
    }
    auto ma = load_json(a / artifacts::kManifest);
    auto mb = load_json(b / artifacts::kManifest);
    ma.erase("timing_ms");
    mb.erase("timing_ms");
    CHECK(ma == mb);
}

TEST_CASE("a failing stage leaves a partial manifest") {
    testing::TempDir dir;
    try {
        run_pipeline(demo_config(dir.path(), {"gating.c=[1.0,1.0,1.0]"}));
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == Stage::train);
        CHECK(e.exit_code() == ExitCode::train);
    }
    const auto m = load_json(dir / artifacts::kManifest);
    CHECK(m.at("status") == "partial");
    CHECK(m.at("failed_stage") == "train");
    CHECK(m.at("completed_stages") == json({"ingest", "dedup", "label"}));
    CHECK(m.at("table").at("total").at("tweets").get<std::size_t>() > 0);
    CHECK_FALSE(fs::exists(dir / artifacts::kCheckpoint));
}

TEST_CASE("stages run alone need the previous stage's artifacts") {
    testing::TempDir dir;
    const auto c = demo_config(dir.path());
    CHECK_THROWS_AS(run_dedup(c), StageError);
    CHECK_THROWS_AS(run_train(c), StageError);
    CHECK_THROWS_AS(run_eval(c), StageError);
    run_ingest(c);
    run_dedup(c);
    run_label(c);
    const auto r = run_train(c);
    CHECK(r.n_train > 0);
    CHECK(run_eval(c).size() == 1);
    CHECK(exit_code_for(Stage::ingest) == ExitCode::ingest);
    CHECK(exit_code_for(Stage::eval) == ExitCode::eval);
}

TEST_CASE("ablation: gated counts are monotone and rows match plain runs") {
    testing::TempDir dir, plain;
    const std::vector<GatingConfig> grid = {{{0, 0, 0}}, {{0.7, 0.7, 0.7}}, {{0.9, 0.9, 0.7}}, {{0.95, 0.95, 0.95}}};
    const auto table = run_ablation(demo_config(dir.path()), grid);
    REQUIRE(table.rows.size() == grid.size());
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        CHECK(table.rows[i].gated_total <= table.rows[i - 1].gated_total);
        for (std::size_t k = 0; k < 3; ++k) CHECK(table.rows[i].gated[k] <= table.rows[i - 1].gated[k]);
    }
    CHECK(fs::exists(dir / artifacts::kAblation));
    CHECK(load_json(dir / artifacts::kAblation).at("rows").size() == grid.size());

    // Row 2 uses the configured thresholds, so it must equal a full run.
    const auto m = run_pipeline(demo_config(plain.path()));
    CHECK(testing::read_file(dir / "ablation" / "row_2" / artifacts::kCheckpoint) ==
          testing::read_file(plain / artifacts::kCheckpoint));
    CHECK(table.rows[2].gated_total == m.train->gated_total());
    CHECK(table.rows[2].zero_shot.at(0).mean == m.eval.at(0).mean);
    CHECK_THROWS_AS(run_ablation(demo_config(dir.path()), {}), ConfigError);
}

TEST_CASE("generated corpus plants the requested duplicates") {
    testing::TempDir dir;
    SyntheticSpec spec;
    const auto files = gen_synthetic(spec, dir.path());
    const auto truth = GroundTruth::from_json(load_json(files.ground_truth));
    CHECK(truth.records.size() == 1000);
    CHECK(truth.duplicates.size() == 200);
    std::set<std::string> ids;
    for (const auto& d : truth.duplicates) ids.insert(d.image_id);
    CHECK(ids.size() == 200);
    for (const fs::path& p : {files.config, files.positive_lexicon, files.negative_lexicon, files.benchmark_spec,
                              files.benchmark_data}) {
        CHECK(fs::exists(p));
    }
    const auto records = load_corpus(files.corpus, CorpusOptions{64});
    CHECK(records.size() == 1000);
}

TEST_CASE("sidecar and inline embeddings load the same records") {
    testing::TempDir a, b;
    SyntheticSpec spec;
    spec.n_records = 120;
    const auto fa = gen_synthetic(spec, a.path());
    gen_synthetic(spec, b.path(), GenerateOptions{true, 50});
    CHECK(fs::exists(b / "embeddings.emb"));
    CorpusOptions with_sidecar{64};
    with_sidecar.sidecar_data = b / "embeddings.emb";
    with_sidecar.sidecar_index = b / "embeddings.emb.idx";
    const auto inline_records = load_corpus(fa.corpus, CorpusOptions{64});
    const auto sidecar_records = load_corpus(b / "corpus.jsonl", with_sidecar);
    REQUIRE(inline_records.size() == sidecar_records.size());
    for (std::size_t i = 0; i < inline_records.size(); ++i) {
        REQUIRE(inline_records[i].images.size() == sidecar_records[i].images.size());
        for (std::size_t k = 0; k < inline_records[i].images.size(); ++k) {
            CHECK(inline_records[i].images[k].embedding == sidecar_records[i].images[k].embedding);
        }
    }
}

TEST_CASE("zero duplicate rate gives no pair above tau") {
    SyntheticSpec spec;
    spec.dup_rate = 0;
    spec.seed = 5;
    const auto corpus = generate_corpus(spec);
    CHECK(corpus.truth.duplicates.empty());
    std::vector<const std::vector<float>*> emb;
    for (const auto& r : corpus.records) {
        for (const auto& img : r.images) emb.push_back(&img.embedding);
    }
    double worst = -1;
    for (std::size_t i = 0; i < emb.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, cosine(*emb[i], *emb[j]));
    }
    CHECK(worst < 0.98875);
}

TEST_CASE("all-positive priors give all-positive labels") {
    SyntheticSpec spec;
    spec.class_priors = {1, 0, 0};
    spec.dup_rate = 0.1;
    const auto corpus = generate_corpus(spec);
    const auto lexicon = synthetic_lexicon();
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        CHECK(corpus.truth.records[i].label == Polarity::positive);
        if (!corpus.truth.records[i].junk) {
            CHECK(lexicon.score(corpus.records[i].text).argmax() == Polarity::positive);
        }
    }
}

TEST_CASE("junk records are exactly the rejected ones") {
    SyntheticSpec spec;
    spec.junk_rate = 0.2;
    const auto corpus = generate_corpus(spec);
    std::size_t junk = 0;
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        const bool is_junk = corpus.truth.records[i].junk.has_value();
        junk += is_junk;
        CHECK(admit(corpus.records[i], FilterPolicy{}) == !is_junk);
    }
    CHECK(junk > 100);
}

TEST_CASE("generator validation") {
    SyntheticSpec spec;
    spec.dup_rate = 1.5;
    CHECK_THROWS_AS(validate(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.class_priors = {0, 0, 0};
    CHECK_THROWS_AS(validate(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.n_records = 0;
    CHECK_THROWS_AS(validate(spec), ConfigError);
}
