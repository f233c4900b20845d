#include <benchmark/benchmark.h>

#include <random>

#include "distillstream/dedup.hpp"
#include "distillstream/student.hpp"
#include "distillstream/synthetic.hpp"
#include "distillstream/trainer.hpp"

namespace ds = distillstream;

namespace {

std::vector<ds::TextImagePair> corpus_pairs(std::size_t n_records) {
    ds::SyntheticSpec spec;
    spec.n_records = n_records;
    std::vector<ds::TextImagePair> pairs;
    for (const auto& r : ds::generate_corpus(spec).records) {
        if (!ds::admit(r, ds::FilterPolicy{})) continue;
        for (auto& p : ds::explode_pairs(r)) pairs.push_back(std::move(p));
    }
    return pairs;
}

void dedup(benchmark::State& state, ds::IndexKind kind) {
    const auto pairs = corpus_pairs(static_cast<std::size_t>(state.range(0)));
    ds::DedupConfig config;
    config.index_kind = kind;
    config.threads = static_cast<std::size_t>(state.range(1));
    for (auto _ : state) {
        auto result = ds::dedup_stream(pairs, 64, config);
        benchmark::DoNotOptimize(result.retained.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs.size()));
}

void BM_DedupExact(benchmark::State& state) { dedup(state, ds::IndexKind::exact); }
void BM_DedupLsh(benchmark::State& state) { dedup(state, ds::IndexKind::lsh); }

BENCHMARK(BM_DedupExact)->Args({1000, 1})->Args({5000, 1})->Args({5000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DedupLsh)->Args({1000, 1})->Args({5000, 1})->Unit(benchmark::kMillisecond);

void BM_Backward(benchmark::State& state) {
    const auto arch = state.range(0) ? ds::Architecture::mlp1 : ds::Architecture::linear;
    auto model = ds::StudentModel::create(arch, 64, 64);
    model.initialize(1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0, 1);
    std::vector<ds::TrainingSample> batch;
    for (int b = 0; b < 64; ++b) {
        std::vector<double> x(64);
        for (auto& v : x) v = normal(rng);
        batch.push_back(ds::make_sample(x, ds::SentimentDistribution({0.6, 0.3, 0.1}), ds::GatingConfig{{0, 0, 0}}));
    }
    for (auto _ : state) {
        auto g = ds::backward(model, batch);
        benchmark::DoNotOptimize(g.loss);
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Backward)->Arg(0)->Arg(1);

void BM_LexiconScore(benchmark::State& state) {
    const auto lexicon = ds::synthetic_lexicon();
    ds::SyntheticSpec spec;
    spec.n_records = 200;
    const auto records = ds::generate_corpus(spec).records;
    std::size_t i = 0;
    for (auto _ : state) {
        auto p = lexicon.score(records[i++ % records.size()].text);
        benchmark::DoNotOptimize(p);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LexiconScore);

void BM_LabelPairs(benchmark::State& state) {
    const auto pairs = corpus_pairs(2000);
    const auto lexicon = ds::synthetic_lexicon();
    for (auto _ : state) {
        auto samples = ds::label_pairs(pairs, lexicon, ds::GatingConfig{}, static_cast<std::size_t>(state.range(0)));
        benchmark::DoNotOptimize(samples.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs.size()));
}
BENCHMARK(BM_LabelPairs)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
