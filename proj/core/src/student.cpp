#include "distillstream/student.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "distillstream/errors.hpp"
#include "distillstream/hash.hpp"

namespace distillstream {

namespace {

constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

double log_sum_exp(const std::array<double, kNumClasses>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace

Architecture architecture_from_string(const std::string& s) {
    if (s == "linear") return Architecture::linear;
    if (s == "mlp1") return Architecture::mlp1;
    throw ConfigError("unknown student architecture '" + s + "' (expected linear or mlp1)");
}

std::string to_string(Architecture a) {
    return a == Architecture::linear ? "linear" : "mlp1";
}

StudentParams StudentParams::zeros_like() const {
    StudentParams z;
    z.w1 = Tensor(w1.rows, w1.cols);
    z.b1 = Tensor(b1.rows, b1.cols);
    z.w2 = Tensor(w2.rows, w2.cols);
    z.b2 = Tensor(b2.rows, b2.cols);
    return z;
}

std::size_t StudentParams::count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
}

bool StudentParams::all_finite() const {
    for (const auto* t : tensors()) {
        if (!std::all_of(t->data.begin(), t->data.end(), [](double v) { return std::isfinite(v); })) return false;
    }
    return true;
}

TrainingSample make_sample(std::vector<double> embedding, const SentimentDistribution& teacher,
                           const GatingConfig& gating) {
    const auto g = gate(teacher, gating);
    return {std::move(embedding), teacher, g.multiplier, g.argmax_class};
}

StudentModel::StudentModel(Architecture arch, std::size_t input_dim, std::size_t hidden)
    : arch_(arch), input_dim_(input_dim), hidden_(arch == Architecture::mlp1 ? hidden : 0) {
    if (input_dim_ == 0) throw ConfigError("student input dimension must be positive");
    if (arch_ == Architecture::mlp1) {
        if (hidden_ == 0) throw ConfigError("mlp1 hidden width must be positive");
        params_.w1 = Tensor(input_dim_, hidden_);
        params_.b1 = Tensor(1, hidden_);
        params_.w2 = Tensor(hidden_, kNumClasses);
    } else {
        params_.w2 = Tensor(input_dim_, kNumClasses);
    }
    params_.b2 = Tensor(1, kNumClasses);
}

StudentModel StudentModel::linear(std::size_t input_dim) {
    return StudentModel(Architecture::linear, input_dim, 0);
}

StudentModel StudentModel::mlp1(std::size_t input_dim, std::size_t hidden) {
    return StudentModel(Architecture::mlp1, input_dim, hidden);
}

StudentModel StudentModel::create(Architecture arch, std::size_t input_dim, std::size_t hidden) {
    return StudentModel(arch, input_dim, hidden);
}

void StudentModel::initialize(std::uint64_t seed) {
    for (auto* t : params_.tensors()) std::fill(t->data.begin(), t->data.end(), 0.0);
    if (arch_ == Architecture::linear) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> w1_dist(0.0, std::sqrt(2.0 / static_cast<double>(input_dim_)));
    std::normal_distribution<double> w2_dist(0.0, 0.01);
    for (auto& v : params_.w1.data) v = w1_dist(rng);
    for (auto& v : params_.w2.data) v = w2_dist(rng);
}

void StudentModel::check_input(std::size_t n) const {
    if (n != input_dim_) {
        throw DimensionMismatch("student expects input dimension " + std::to_string(input_dim_) + ", got " +
                                std::to_string(n));
    }
}

std::array<double, kNumClasses> StudentModel::logits(std::span<const double> x) const {
    check_input(x.size());
    std::array<double, kNumClasses> z = {params_.b2.data[0], params_.b2.data[1], params_.b2.data[2]};
    if (arch_ == Architecture::linear) {
        for (std::size_t i = 0; i < input_dim_; ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) z[k] += x[i] * params_.w2.at(i, k);
        }
        return z;
    }
    std::vector<double> h(params_.b1.data);
    for (std::size_t i = 0; i < input_dim_; ++i) {
        const double xi = x[i];
        const double* row = &params_.w1.data[i * hidden_];
        for (std::size_t j = 0; j < hidden_; ++j) h[j] += xi * row[j];
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
        const double a = std::max(0.0, h[j]);
        for (std::size_t k = 0; k < kNumClasses; ++k) z[k] += a * params_.w2.at(j, k);
    }
    return z;
}

std::array<double, kNumClasses> StudentModel::logits(std::span<const float> x) const {
    std::vector<double> xd(x.begin(), x.end());
    return logits(std::span<const double>(xd));
}

std::uint64_t StudentModel::param_hash() const {
    Fnv1a h;
    h.update(to_string(arch_));
    h.update_u64(input_dim_);
    h.update_u64(hidden_);
    for (const auto* t : params_.tensors()) h.update(std::span<const double>(t->data));
    return h.digest();
}

SentimentDistribution forward(const StudentModel& model, std::span<const double> x) {
    return SentimentDistribution(softmax(model.logits(x)));
}

SentimentDistribution forward(const StudentModel& model, std::span<const float> x) {
    return SentimentDistribution(softmax(model.logits(x)));
}

double sample_loss(const StudentModel& model, const TrainingSample& sample) {
    if (sample.multiplier == 0) return 0.0;
    const auto z = model.logits(std::span<const double>(sample.embedding));
    const double lse = log_sum_exp(z);
    double loss = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const double g = sample.teacher[k];
        if (g == 0.0) continue;
        loss -= g * std::max(z[k] - lse, kLogFloor);
    }
    return sample.multiplier * loss;
}

Gradients backward(const StudentModel& model, std::span<const TrainingSample> batch) {
    if (batch.empty()) throw DomainError("backward over an empty batch");
    const auto& p = model.params();
    Gradients out{p.zeros_like(), 0.0};
    auto& g = out.grad;
    const double scale = 1.0 / static_cast<double>(batch.size());
    const std::size_t n = model.input_dim();
    const std::size_t hdim = model.hidden_dim();
    std::vector<double> pre(hdim), act(hdim), dact(hdim);

    for (const auto& s : batch) {
        if (s.multiplier == 0) continue;
        const auto& x = s.embedding;
        if (x.size() != n) {
            throw DimensionMismatch("sample dimension " + std::to_string(x.size()) + ", model expects " +
                                    std::to_string(n));
        }
        std::array<double, kNumClasses> z = {p.b2.data[0], p.b2.data[1], p.b2.data[2]};
        std::span<const double> features(x);
        if (model.architecture() == Architecture::mlp1) {
            std::copy(p.b1.data.begin(), p.b1.data.end(), pre.begin());
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < hdim; ++j) pre[j] += x[i] * p.w1.at(i, j);
            }
            for (std::size_t j = 0; j < hdim; ++j) act[j] = std::max(0.0, pre[j]);
            features = act;
        }
        for (std::size_t i = 0; i < features.size(); ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) z[k] += features[i] * p.w2.at(i, k);
        }

        // Softmax + cross-entropy: dL/dz = f - g.
        const auto f = softmax(z);
        const double lse = log_sum_exp(z);
        std::array<double, kNumClasses> delta{};
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            const double gk = s.teacher[k];
            if (gk != 0.0) out.loss -= scale * s.multiplier * gk * std::max(z[k] - lse, kLogFloor);
            delta[k] = scale * s.multiplier * (f[k] - gk);
        }

        for (std::size_t k = 0; k < kNumClasses; ++k) g.b2.data[k] += delta[k];
        for (std::size_t i = 0; i < features.size(); ++i) {
            for (std::size_t k = 0; k < kNumClasses; ++k) g.w2.at(i, k) += features[i] * delta[k];
        }
        if (model.architecture() == Architecture::mlp1) {
            for (std::size_t j = 0; j < hdim; ++j) {
                double back = 0.0;
                for (std::size_t k = 0; k < kNumClasses; ++k) back += p.w2.at(j, k) * delta[k];
                dact[j] = pre[j] > 0.0 ? back : 0.0;
                g.b1.data[j] += dact[j];
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < hdim; ++j) g.w1.at(i, j) += x[i] * dact[j];
            }
        }
    }
    return out;
}

AdamState AdamState::for_model(const StudentModel& model) {
    return {model.params().zeros_like(), model.params().zeros_like(), 0};
}

void adam_step(StudentModel& model, const StudentParams& grads, AdamState& state, const AdamConfig& config) {
    auto params = model.params().tensors();
    const auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (!params[t]->same_shape(*g[t]) || !params[t]->same_shape(*m[t]) || !params[t]->same_shape(*v[t])) {
            throw DimensionMismatch(std::string("Adam shape mismatch for ") + StudentParams::kNames[t]);
        }
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& theta = params[t]->data;
        const auto& grad = g[t]->data;
        auto& mt = m[t]->data;
        auto& vt = v[t]->data;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            mt[i] = config.beta1 * mt[i] + (1.0 - config.beta1) * grad[i];
            vt[i] = config.beta2 * vt[i] + (1.0 - config.beta2) * grad[i] * grad[i];
            const double m_hat = mt[i] / c1;
            const double v_hat = vt[i] / c2;
            theta[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

}  // namespace distillstream
