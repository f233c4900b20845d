#include "distillstream/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "distillstream/errors.hpp"

namespace distillstream {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> shuffled(std::span<const std::string> ids, std::uint64_t seed) {
    std::vector<std::string> out(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

}  // namespace

LabelSpace label_space_from_string(const std::string& s) {
    if (s == "binary_polarity") return LabelSpace::binary_polarity;
    if (s == "emotions6") return LabelSpace::emotions6;
    if (s == "emotions8") return LabelSpace::emotions8;
    throw SchemaError("unknown label_space '" + s + "'");
}

std::string to_string(LabelSpace s) {
    switch (s) {
        case LabelSpace::binary_polarity: return "binary_polarity";
        case LabelSpace::emotions6: return "emotions6";
        case LabelSpace::emotions8: return "emotions8";
    }
    return "unknown";
}

SplitProtocol split_protocol_from_string(const std::string& s) {
    if (s == "kfold5") return SplitProtocol::kfold5;
    if (s == "random_80_5_15") return SplitProtocol::random_80_5_15;
    throw SchemaError("unknown split_protocol '" + s + "'");
}

std::string to_string(SplitProtocol p) {
    return p == SplitProtocol::kfold5 ? "kfold5" : "random_80_5_15";
}

const RemapTable& fi_remap() {
    static const RemapTable table = {
        {"Amusement", Polarity::positive}, {"Awe", Polarity::positive},
        {"Contentment", Polarity::positive}, {"Excitement", Polarity::positive},
        {"Anger", Polarity::negative},     {"Disgust", Polarity::negative},
        {"Fear", Polarity::negative},      {"Sadness", Polarity::negative},
    };
    return table;
}

const RemapTable& emotion_roi_remap() {
    static const RemapTable table = {
        {"Joy", Polarity::positive},   {"Surprise", Polarity::positive}, {"Anger", Polarity::negative},
        {"Disgust", Polarity::negative}, {"Fear", Polarity::negative},   {"Sadness", Polarity::negative},
    };
    return table;
}

const RemapTable& binary_remap() {
    static const RemapTable table = {{"positive", Polarity::positive}, {"negative", Polarity::negative}};
    return table;
}

const RemapTable& default_remap(LabelSpace space) {
    switch (space) {
        case LabelSpace::emotions6: return emotion_roi_remap();
        case LabelSpace::emotions8: return fi_remap();
        case LabelSpace::binary_polarity: break;
    }
    return binary_remap();
}

EvalSpec make_eval_spec(std::string name, LabelSpace space, SplitProtocol protocol, std::uint64_t seed) {
    EvalSpec spec;
    spec.name = std::move(name);
    spec.label_space = space;
    spec.remap = default_remap(space);
    spec.split_protocol = protocol;
    spec.seed = seed;
    return spec;
}

void validate(const EvalSpec& spec) {
    if (spec.n_repeats == 0) throw ConfigError("eval spec " + spec.name + ": n_repeats must be positive");
    const auto& labels = default_remap(spec.label_space);
    if (spec.label_space == LabelSpace::binary_polarity && spec.remap != binary_remap()) {
        throw ConfigError("eval spec " + spec.name + ": binary_polarity uses the identity remap");
    }
    if (spec.remap.size() != labels.size()) {
        throw ConfigError("eval spec " + spec.name + ": remap must cover exactly the " +
                          std::to_string(labels.size()) + " labels of " + to_string(spec.label_space));
    }
    for (const auto& [label, polarity] : spec.remap) {
        const bool known = std::any_of(labels.begin(), labels.end(),
                                       [&](const auto& e) { return lower(e.first) == lower(label); });
        if (!known) throw ConfigError("eval spec " + spec.name + ": label '" + label + "' is not in the label space");
        if (polarity == Polarity::neutral) throw ConfigError("eval spec " + spec.name + ": remap target must be binary");
    }
}

EvalSpec load_eval_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open eval spec " + path.string());
    try {
        const auto j = json::parse(in);
        EvalSpec spec;
        spec.name = j.at("name").get<std::string>();
        spec.label_space = label_space_from_string(j.at("label_space").get<std::string>());
        spec.remap = default_remap(spec.label_space);
        if (j.contains("remap")) {
            spec.remap.clear();
            for (const auto& [label, target] : j.at("remap").items()) {
                spec.remap[label] = polarity_from_string(target.get<std::string>());
            }
        }
        spec.split_protocol = split_protocol_from_string(j.at("split_protocol").get<std::string>());
        spec.n_repeats = j.value("n_repeats", std::size_t{5});
        spec.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("data")) {
            std::filesystem::path data = j.at("data").get<std::string>();
            spec.data = data.is_absolute() ? data : path.parent_path() / data;
        }
        validate(spec);
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError("malformed eval spec " + path.string() + ": " + e.what());
    } catch (const SchemaError& e) {
        throw ConfigError("malformed eval spec " + path.string() + ": " + e.what());
    }
}

json to_json(const EvalSpec& spec) {
    json remap = json::object();
    for (const auto& [label, p] : spec.remap) remap[label] = std::string(to_string(p));
    json j = {{"name", spec.name},
              {"label_space", to_string(spec.label_space)},
              {"remap", std::move(remap)},
              {"split_protocol", to_string(spec.split_protocol)},
              {"n_repeats", spec.n_repeats},
              {"seed", spec.seed}};
    if (spec.data) j["data"] = spec.data->string();
    return j;
}

Polarity remap_label(const std::string& label, const EvalSpec& spec) {
    if (const auto it = spec.remap.find(label); it != spec.remap.end()) return it->second;
    const auto key = lower(label);
    for (const auto& [name, polarity] : spec.remap) {
        if (lower(name) == key) return polarity;
    }
    throw SchemaError("label '" + label + "' is not part of benchmark " + spec.name);
}

std::vector<LabeledSample> load_benchmark(const std::filesystem::path& path, std::size_t expected_dim,
                                          const EvalSpec& spec) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open benchmark file " + path.string());
    std::vector<LabeledSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        LabeledSample s;
        try {
            const auto j = json::parse(line);
            s.id = j.at("id").get<std::string>();
            s.label = j.at("label").get<std::string>();
            s.embedding = j.at("embedding").get<std::vector<float>>();
        } catch (const json::exception& e) {
            throw RecordError(line_no, e.what());
        }
        if (s.embedding.size() != expected_dim) {
            throw DimensionMismatch("benchmark line " + std::to_string(line_no) + ": embedding dimension " +
                                    std::to_string(s.embedding.size()) + ", expected " + std::to_string(expected_dim));
        }
        try {
            remap_label(s.label, spec);
        } catch (const SchemaError& e) {
            throw RecordError(line_no, e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_benchmark(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write benchmark file " + path.string());
    for (const auto& s : samples) {
        out << json{{"id", s.id}, {"label", s.label}, {"embedding", s.embedding}}.dump() << '\n';
    }
}

Polarity masked_predict(const SentimentDistribution& dist) {
    return dist[Polarity::negative] > dist[Polarity::positive] ? Polarity::negative : Polarity::positive;
}

Polarity masked_predict(const StudentModel& model, std::span<const float> x) {
    return masked_predict(forward(model, x));
}

double accuracy(std::span<const Polarity> predictions, std::span<const Polarity> labels) {
    if (predictions.size() != labels.size()) throw DomainError("accuracy: prediction and label counts differ");
    if (predictions.empty()) throw DomainError("accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::vector<Fold> kfold_splits(std::span<const std::string> ids, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw DomainError("k-fold needs k >= 2");
    if (ids.size() < k) {
        throw DomainError("k-fold with k=" + std::to_string(k) + " needs at least k ids, got " +
                          std::to_string(ids.size()));
    }
    const auto order = shuffled(ids, seed);
    const std::size_t base = order.size() / k;
    const std::size_t extra = order.size() % k;
    std::vector<Fold> folds(k);
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < order.size(); ++i) {
            (i >= start && i < start + len ? folds[f].test : folds[f].train).push_back(order[i]);
        }
        start += len;
    }
    return folds;
}

std::vector<Split3> random_splits_80_5_15(std::span<const std::string> ids, std::size_t n_repeats,
                                          std::uint64_t seed) {
    if (ids.size() < 20) {
        throw DomainError("80/5/15 splits need at least 20 ids, got " + std::to_string(ids.size()));
    }
    const std::size_t m = ids.size();
    // Integer arithmetic keeps the floors exact.
    const std::size_t n_train = m * 80 / 100;
    const std::size_t n_val = m * 5 / 100;
    std::vector<Split3> out;
    for (std::size_t r = 0; r < n_repeats; ++r) {
        auto order = shuffled(ids, seed + r);
        Split3 s;
        s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                     order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
        out.push_back(std::move(s));
    }
    return out;
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f±%.1f", 100.0 * mean, 100.0 * std);
    return buf;
}

json EvalResult::to_json() const {
    json splits = json::array();
    for (const auto& s : per_split) {
        splits.push_back({{"split", s.split}, {"accuracy", s.accuracy}, {"n_test", s.n_test}});
    }
    return {{"benchmark", benchmark},
            {"fine_tune", fine_tune},
            {"mean", mean},
            {"std", std},
            {"summary", summary()},
            {"per_split", std::move(splits)}};
}

std::string EvalResult::summary() const {
    return format_mean_std(mean, std);
}

namespace {

double split_accuracy(const StudentModel& model, std::span<const LabeledSample* const> test, const EvalSpec& spec) {
    std::vector<Polarity> preds, labels;
    preds.reserve(test.size());
    labels.reserve(test.size());
    for (const auto* s : test) {
        preds.push_back(masked_predict(model, s->embedding));
        labels.push_back(remap_label(s->label, spec));
    }
    return accuracy(preds, labels);
}

std::vector<const LabeledSample*> gather(const std::vector<std::string>& ids,
                                         const std::unordered_map<std::string, const LabeledSample*>& by_id) {
    std::vector<const LabeledSample*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(by_id.at(id));
    return out;
}

std::vector<LabeledSample> copy_of(std::span<const LabeledSample* const> ptrs) {
    std::vector<LabeledSample> out;
    out.reserve(ptrs.size());
    for (const auto* p : ptrs) out.push_back(*p);
    return out;
}

}  // namespace

StudentModel fine_tune(const StudentModel& model, std::span<const LabeledSample> train,
                       std::span<const LabeledSample> val, const EvalSpec& spec, const TrainConfig& config) {
    validate(config);
    if (train.empty()) throw DomainError("fine-tuning needs a non-empty training set");
    StudentModel current = model;
    std::vector<TrainingSample> samples;
    samples.reserve(train.size());
    for (const auto& s : train) {
        samples.push_back({std::vector<double>(s.embedding.begin(), s.embedding.end()),
                           SentimentDistribution::one_hot(remap_label(s.label, spec)), 1,
                           remap_label(s.label, spec)});
    }

    std::vector<const LabeledSample*> val_ptrs;
    for (const auto& s : val) val_ptrs.push_back(&s);
    const auto neutral = index_of(Polarity::neutral);

    AdamState opt = AdamState::for_model(current);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<TrainingSample> batch;

    StudentModel best = current;
    double best_val = val_ptrs.empty() ? 0.0 : split_accuracy(current, val_ptrs, spec);
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
            const std::size_t end = std::min(perm.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(samples[perm[i]]);
            auto grads = backward(current, batch);
            for (std::size_t r = 0; r < grads.grad.w2.rows; ++r) grads.grad.w2.at(r, neutral) = 0.0;
            grads.grad.b2.data[neutral] = 0.0;
            adam_step(current, grads.grad, opt, config.adam());
        }
        if (!val_ptrs.empty()) {
            const double acc = split_accuracy(current, val_ptrs, spec);
            if (acc > best_val) {
                best_val = acc;
                best = current;
            }
        }
    }
    return val_ptrs.empty() ? current : best;
}

EvalResult evaluate(const StudentModel& model, const EvalSpec& spec, std::span<const LabeledSample> data,
                    bool fine_tune_model, const TrainConfig& config) {
    validate(spec);
    std::unordered_map<std::string, const LabeledSample*> by_id;
    std::vector<std::string> ids;
    for (const auto& s : data) {
        if (s.embedding.size() != model.input_dim()) {
            throw DimensionMismatch("benchmark sample " + s.id + " has dimension " + std::to_string(s.embedding.size()));
        }
        if (!by_id.emplace(s.id, &s).second) throw SchemaError("duplicate benchmark id " + s.id);
        remap_label(s.label, spec);
        ids.push_back(s.id);
    }

    struct Plan {
        std::vector<std::string> train, val, test;
    };
    std::vector<Plan> plans;
    if (spec.split_protocol == SplitProtocol::kfold5) {
        for (auto& f : kfold_splits(ids, 5, spec.seed)) plans.push_back({std::move(f.train), {}, std::move(f.test)});
    } else {
        for (auto& s : random_splits_80_5_15(ids, spec.n_repeats, spec.seed)) {
            plans.push_back({std::move(s.train), std::move(s.val), std::move(s.test)});
        }
    }

    const auto run_split = [&](std::size_t i) -> SplitResult {
        const auto test = gather(plans[i].test, by_id);
        if (!fine_tune_model) return {i, split_accuracy(model, test, spec), test.size()};
        TrainConfig split_config = config;
        split_config.seed = config.seed + i;
        const auto train = copy_of(gather(plans[i].train, by_id));
        const auto val = copy_of(gather(plans[i].val, by_id));
        const auto tuned = fine_tune(model, train, val, spec, split_config);
        return {i, split_accuracy(tuned, test, spec), test.size()};
    };

    EvalResult result;
    result.benchmark = spec.name;
    result.fine_tune = fine_tune_model;
    result.per_split.resize(plans.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, plans.size()));
    for (std::size_t start = 0; start < plans.size(); start += workers) {
        const std::size_t end = std::min(plans.size(), start + workers);
        if (workers == 1) {
            result.per_split[start] = run_split(start);
            continue;
        }
        std::vector<std::future<SplitResult>> jobs;
        for (std::size_t i = start; i < end; ++i) jobs.push_back(std::async(std::launch::async, run_split, i));
        for (std::size_t i = start; i < end; ++i) result.per_split[i] = jobs[i - start].get();
    }

    double sum = 0.0;
    for (const auto& s : result.per_split) sum += s.accuracy;
    result.mean = sum / static_cast<double>(result.per_split.size());
    double var = 0.0;
    for (const auto& s : result.per_split) var += (s.accuracy - result.mean) * (s.accuracy - result.mean);
    result.std = std::sqrt(var / static_cast<double>(result.per_split.size()));
    return result;
}

}  // namespace distillstream
