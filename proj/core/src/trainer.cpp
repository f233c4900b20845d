#include "distillstream/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "distillstream/errors.hpp"

namespace distillstream {

using nlohmann::json;

void validate(const TrainConfig& c) {
    if (!(c.lr > 0.0)) throw ConfigError("train.lr must be positive");
    if (!(c.adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
    if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) throw ConfigError("train.adam_beta1 must lie in [0, 1)");
    if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) throw ConfigError("train.adam_beta2 must lie in [0, 1)");
    if (c.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (c.patience == 0) throw ConfigError("train.patience must be positive");
    if (!(c.feature_noise_sigma >= 0.0)) throw ConfigError("train.feature_noise_sigma must be nonnegative");
    if (!(c.heldout_fraction >= 0.0 && c.heldout_fraction < 1.0)) {
        throw ConfigError("train.heldout_fraction must lie in [0, 1)");
    }
    if (c.architecture == Architecture::mlp1 && c.hidden == 0) throw ConfigError("train.hidden must be positive");
    if (c.threads == 0) throw ConfigError("thread count must be positive");
    validate(c.gating);
}

json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"adam_eps", c.adam_eps},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"seed", c.seed},
            {"gating", c.gating.c},
            {"feature_noise_sigma", c.feature_noise_sigma},
            {"architecture", to_string(c.architecture)},
            {"hidden", c.hidden},
            {"hard_labels", c.hard_labels},
            {"heldout_fraction", c.heldout_fraction}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("gating")) c.gating.c = j.at("gating").get<std::array<double, kNumClasses>>();
    c.feature_noise_sigma = j.value("feature_noise_sigma", c.feature_noise_sigma);
    c.architecture = architecture_from_string(j.value("architecture", std::string("linear")));
    c.hidden = j.value("hidden", c.hidden);
    c.hard_labels = j.value("hard_labels", c.hard_labels);
    c.heldout_fraction = j.value("heldout_fraction", c.heldout_fraction);
    return c;
}

std::size_t TrainReport::gated_total() const {
    return std::accumulate(gated_per_class.begin(), gated_per_class.end(), std::size_t{0});
}

json TrainReport::to_json() const {
    json epochs_json = json::array();
    for (const auto& e : epochs) {
        epochs_json.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"heldout_loss", e.heldout_loss}});
    }
    json classes = json::object();
    for (auto p : kAllPolarities) {
        classes[std::string(to_string(p))] = {{"total", total_per_class[index_of(p)]},
                                              {"gated", gated_per_class[index_of(p)]}};
    }
    return {{"epochs", std::move(epochs_json)},
            {"best_epoch", best_epoch},
            {"stopped_early", stopped_early},
            {"n_samples", n_samples},
            {"n_gated", gated_total()},
            {"n_train", n_train},
            {"n_heldout", n_heldout},
            {"classes", std::move(classes)},
            {"heldout_agreement", heldout_agreement ? json(*heldout_agreement) : json(nullptr)},
            {"teacher_fingerprint", teacher_fingerprint}};
}

std::vector<TrainingSample> label_pairs(std::span<const TextImagePair> pairs, const TeacherProvider& teacher,
                                        const GatingConfig& gating, std::size_t threads) {
    // Distinct records in first-appearance order; each text is scored once.
    std::unordered_map<std::string_view, std::size_t> record_slot;
    std::vector<const TextImagePair*> firsts;
    std::vector<std::size_t> slot_of(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto [it, inserted] = record_slot.emplace(pairs[i].record_id, firsts.size());
        if (inserted) firsts.push_back(&pairs[i]);
        slot_of[i] = it->second;
    }

    std::vector<SentimentDistribution> scores(firsts.size());
    const auto score_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) scores[i] = teacher.score(TeacherQuery{firsts[i]->record_id, firsts[i]->text});
    };
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, firsts.size() / 256));
    if (workers <= 1) {
        score_range(0, firsts.size());
    } else {
        const std::size_t chunk = (firsts.size() + workers - 1) / workers;
        std::vector<std::future<void>> jobs;
        for (std::size_t w = 0; w < workers; ++w) {
            jobs.push_back(std::async(std::launch::async, score_range, w * chunk,
                                      std::min(firsts.size(), (w + 1) * chunk)));
        }
        for (auto& j : jobs) j.get();
    }

    std::vector<TrainingSample> samples;
    samples.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& emb = pairs[i].image.embedding;
        samples.push_back(make_sample(std::vector<double>(emb.begin(), emb.end()), scores[slot_of[i]], gating));
    }
    return samples;
}

namespace {

double mean_loss(const StudentModel& model, std::span<const TrainingSample> samples) {
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& s : samples) sum += sample_loss(model, s);
    return sum / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train_samples(std::span<const TrainingSample> samples, std::size_t dim, const TrainConfig& config) {
    validate(config);
    TrainReport report;
    report.n_samples = samples.size();

    std::vector<TrainingSample> gated;
    for (const auto& s : samples) {
        ++report.total_per_class[index_of(s.argmax_class)];
        if (s.multiplier == 0) continue;
        ++report.gated_per_class[index_of(s.argmax_class)];
        gated.push_back(s);
        if (config.hard_labels) gated.back().teacher = SentimentDistribution::one_hot(s.argmax_class);
    }
    if (gated.empty()) {
        throw ConfigError("no training sample passes the confidence gate (" + std::to_string(samples.size()) +
                          " samples); lower the gating thresholds");
    }

    StudentModel model = StudentModel::create(config.architecture, dim, config.hidden);
    model.initialize(config.seed);
    if (config.max_epochs == 0) return {std::move(model), std::move(report)};

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(gated.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_heldout = static_cast<std::size_t>(std::floor(config.heldout_fraction * gated.size()));
    n_heldout = std::min(n_heldout, gated.size() - 1);

    std::vector<TrainingSample> heldout, train_set;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_heldout ? heldout : train_set).push_back(gated[order[i]]);
    }
    report.n_train = train_set.size();
    report.n_heldout = heldout.size();

    AdamState opt = AdamState::for_model(model);
    const AdamConfig adam = config.adam();
    std::normal_distribution<double> noise(0.0, config.feature_noise_sigma);

    StudentModel best = model;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<std::size_t> perm(train_set.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<TrainingSample> batch;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
            const std::size_t end = std::min(perm.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_set[perm[i]]);
                if (config.feature_noise_sigma > 0.0) {
                    for (auto& v : batch.back().embedding) v += noise(rng);
                }
            }
            const auto grads = backward(model, batch);
            loss_sum += grads.loss * static_cast<double>(batch.size());
            adam_step(model, grads.grad, opt, adam);
        }
        if (!model.params().all_finite()) throw DomainError("student parameters became non-finite");

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.train_loss = loss_sum / static_cast<double>(train_set.size());
        metrics.heldout_loss = heldout.empty() ? metrics.train_loss : mean_loss(model, heldout);
        report.epochs.push_back(metrics);

        if (metrics.heldout_loss < best_loss) {
            best_loss = metrics.heldout_loss;
            best = model;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            report.stopped_early = true;
            break;
        }
    }

    if (!heldout.empty()) {
        std::size_t agree = 0;
        for (const auto& s : heldout) {
            if (forward(best, std::span<const double>(s.embedding)).argmax() == s.argmax_class) ++agree;
        }
        report.heldout_agreement = static_cast<double>(agree) / static_cast<double>(heldout.size());
    }
    return {std::move(best), std::move(report)};
}

TrainResult train(std::span<const TextImagePair> pairs, const TeacherProvider& teacher, const TrainConfig& config) {
    if (pairs.empty()) throw ConfigError("no training pairs");
    const std::size_t dim = pairs.front().image.embedding.size();
    const auto samples = label_pairs(pairs, teacher, config.gating, config.threads);
    auto result = train_samples(samples, dim, config);
    result.report.teacher_fingerprint = teacher.fingerprint();
    return result;
}

json checkpoint_json(const StudentModel& model, const TrainConfig& config) {
    json params = json::object();
    const auto tensors = model.params().tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        if (tensors[t]->size() == 0) continue;
        params[StudentParams::kNames[t]] = {{"shape", {tensors[t]->rows, tensors[t]->cols}},
                                            {"values", tensors[t]->data}};
    }
    return {{"architecture", to_string(model.architecture())},
            {"n", model.input_dim()},
            {"h", model.hidden_dim()},
            {"class_order", {"positive", "neutral", "negative"}},
            {"params", std::move(params)},
            {"train_config", to_json(config)},
            {"seed", config.seed}};
}

void save_checkpoint(const std::filesystem::path& path, const StudentModel& model, const TrainConfig& config) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write checkpoint " + path.string());
    out << checkpoint_json(model, config).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open checkpoint " + path.string());
    try {
        const auto j = json::parse(in);
        const auto arch = architecture_from_string(j.at("architecture").get<std::string>());
        auto model = StudentModel::create(arch, j.at("n").get<std::size_t>(), j.at("h").get<std::size_t>());
        const auto& params = j.at("params");
        auto tensors = model.params().tensors();
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            if (tensors[t]->size() == 0) continue;
            const auto& entry = params.at(StudentParams::kNames[t]);
            const auto shape = entry.at("shape").get<std::array<std::size_t, 2>>();
            auto values = entry.at("values").get<std::vector<double>>();
            if (shape[0] != tensors[t]->rows || shape[1] != tensors[t]->cols || values.size() != tensors[t]->size()) {
                throw SchemaError(std::string("checkpoint tensor ") + StudentParams::kNames[t] + " has wrong shape");
            }
            tensors[t]->data = std::move(values);
        }
        return {std::move(model), train_config_from_json(j.at("train_config"))};
    } catch (const json::exception& e) {
        throw SchemaError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace distillstream
