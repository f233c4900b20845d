#include <doctest.h>

#include <atomic>
#include <random>

#include <nlohmann/json.hpp>

#include "distillstream/errors.hpp"
#include "distillstream/synthetic.hpp"
#include "distillstream/trainer.hpp"
#include "support.hpp"

using namespace distillstream;

namespace {

// Teacher that counts how often it is asked.
class CountingTeacher final : public TeacherProvider {
public:
    explicit CountingTeacher(const TeacherProvider& inner) : inner_(inner) {}
    SentimentDistribution score(const TeacherQuery& q) const override {
        ++calls;
        return inner_.score(q);
    }
    std::uint64_t fingerprint() const override { return inner_.fingerprint(); }
    std::string describe() const override { return "counting"; }
    mutable std::atomic<std::size_t> calls{0};

private:
    const TeacherProvider& inner_;
};

std::vector<TextImagePair> synthetic_pairs(std::size_t n_records, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.n_records = n_records;
    spec.seed = seed;
    std::vector<TextImagePair> pairs;
    for (const auto& r : generate_corpus(spec).records) {
        if (!admit(r, FilterPolicy{})) continue;
        for (auto& p : explode_pairs(r)) pairs.push_back(std::move(p));
    }
    return pairs;
}

TrainConfig quick(std::size_t epochs = 5) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.lr = 1e-2;
    c.seed = 17;
    return c;
}

}  // namespace

TEST_CASE("max_epochs = 0 returns the initialized model") {
    const auto pairs = synthetic_pairs(100, 1);
    auto config = quick(0);
    const auto result = train(pairs, synthetic_lexicon(), config);
    CHECK(result.report.epochs.empty());
    CHECK(result.report.best_epoch == 0);
    auto fresh = StudentModel::linear(64);
    fresh.initialize(config.seed);
    CHECK(result.model.param_hash() == fresh.param_hash());
}

TEST_CASE("impossible thresholds raise a configuration error") {
    const auto pairs = synthetic_pairs(100, 1);
    auto config = quick();
    config.gating = GatingConfig{{1, 1, 1}};
    CHECK_THROWS_AS(train(pairs, synthetic_lexicon(), config), ConfigError);
}

TEST_CASE("each record text is scored exactly once") {
    const auto pairs = synthetic_pairs(200, 2);
    std::unordered_set<std::string> records;
    for (const auto& p : pairs) records.insert(p.record_id);
    REQUIRE(records.size() < pairs.size());
    const auto lexicon = synthetic_lexicon();
    for (std::size_t threads : {1, 3}) {
        CountingTeacher counting(lexicon);
        const auto samples = label_pairs(pairs, counting, GatingConfig{}, threads);
        CHECK(counting.calls == records.size());
        CHECK(samples.size() == pairs.size());
    }
}

TEST_CASE("training on gated-out samples is bitwise identical to training without them") {
    const auto pairs = synthetic_pairs(300, 3);
    const auto samples = label_pairs(pairs, synthetic_lexicon(), GatingConfig{});
    std::vector<TrainingSample> gated_only;
    for (const auto& s : samples) {
        if (s.multiplier == 1) gated_only.push_back(s);
    }
    REQUIRE(gated_only.size() < samples.size());
    for (auto arch : {Architecture::linear, Architecture::mlp1}) {
        auto config = quick(4);
        config.architecture = arch;
        config.hidden = 8;
        const auto a = train_samples(samples, 64, config);
        const auto b = train_samples(gated_only, 64, config);
        CHECK(a.model.params().w2.data == b.model.params().w2.data);
        CHECK(a.model.params().w1.data == b.model.params().w1.data);
        CHECK(a.model.params().b2.data == b.model.params().b2.data);
        CHECK(a.report.gated_per_class == b.report.gated_per_class);
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto pairs = synthetic_pairs(200, 4);
    auto config = quick(6);
    config.feature_noise_sigma = 0.01;
    config.threads = 3;
    const auto a = train(pairs, synthetic_lexicon(), config);
    config.threads = 1;
    const auto b = train(pairs, synthetic_lexicon(), config);
    CHECK(a.model.param_hash() == b.model.param_hash());
    CHECK(a.report.to_json() == b.report.to_json());
    config.seed = 18;
    CHECK(train(pairs, synthetic_lexicon(), config).model.param_hash() != a.model.param_hash());
}

TEST_CASE("report bookkeeping") {
    const auto pairs = synthetic_pairs(300, 5);
    const auto config = quick(3);
    const auto r = train(pairs, synthetic_lexicon(), config).report;
    std::size_t total = 0;
    for (auto n : r.total_per_class) total += n;
    CHECK(total == pairs.size());
    CHECK(r.n_samples == pairs.size());
    CHECK(r.n_train + r.n_heldout == r.gated_total());
    CHECK(r.n_heldout == static_cast<std::size_t>(0.1 * r.gated_total()));
    CHECK(r.epochs.size() <= 3);
    CHECK(r.heldout_agreement.has_value());
    for (std::size_t k = 0; k < 3; ++k) CHECK(r.gated_per_class[k] <= r.total_per_class[k]);
    CHECK(r.teacher_fingerprint == synthetic_lexicon().fingerprint());
}

TEST_CASE("early stopping with patience") {
    const auto pairs = synthetic_pairs(200, 6);
    auto config = quick(200);
    config.lr = 0.5;  // overshoots quickly, so held-out loss stops improving
    config.patience = 2;
    const auto r = train(pairs, synthetic_lexicon(), config).report;
    CHECK(r.stopped_early);
    CHECK(r.epochs.size() == r.best_epoch + 2);
    for (const auto& e : r.epochs) CHECK(e.heldout_loss >= r.epochs[r.best_epoch - 1].heldout_loss);
}

TEST_CASE("hard labels replace the teacher by its argmax") {
    const auto pairs = synthetic_pairs(200, 7);
    auto soft = quick(3);
    auto hard = soft;
    hard.hard_labels = true;
    const auto a = train(pairs, synthetic_lexicon(), soft);
    const auto b = train(pairs, synthetic_lexicon(), hard);
    CHECK(a.model.param_hash() != b.model.param_hash());
    CHECK(a.report.gated_per_class == b.report.gated_per_class);
}

TEST_CASE("checkpoint round-trip is exact") {
    testing::TempDir dir;
    std::mt19937_64 rng(3);
    for (auto arch : {Architecture::linear, Architecture::mlp1}) {
        auto m = StudentModel::create(arch, 6, 5);
        m.initialize(9);
        for (auto* t : m.params().tensors()) {
            for (auto& v : t->data) v = std::ldexp(static_cast<double>(rng() >> 11), -50) - 4.0;
        }
        auto config = quick();
        config.architecture = arch;
        config.gating = GatingConfig{{0.1, 0.2, 0.3}};
        save_checkpoint(dir / "c.json", m, config);
        const auto back = load_checkpoint(dir / "c.json");
        CHECK(back.model.param_hash() == m.param_hash());
        CHECK(back.model.architecture() == arch);
        CHECK(to_json(back.config) == to_json(config));

        const auto j = nlohmann::json::parse(testing::read_file(dir / "c.json"));
        CHECK(j.at("class_order") == nlohmann::json({"positive", "neutral", "negative"}));
        CHECK(j.at("n") == 6);
    }
    testing::write_file(dir / "bad.json", "{\"architecture\":\"linear\"}");
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), SchemaError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(validate(c));
    c.lr = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.adam_beta1 = 1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.feature_noise_sigma = -1;
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK(train_config_from_json(to_json(TrainConfig{})).lr == 1e-4);
}
