#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distillstream/teacher.hpp"

namespace distillstream {

enum class Architecture { linear, mlp1 };

Architecture architecture_from_string(const std::string& s);
std::string to_string(Architecture a);

// Dense row-major matrix; vectors are 1 x cols.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const noexcept { return data.size(); }
    bool same_shape(const Tensor& o) const noexcept { return rows == o.rows && cols == o.cols; }
};

/// Student parameters. `w1`/`b1` are empty for the linear architecture.
///   mlp1:   logits = W2^T relu(W1^T x + b1) + b2,  W1: n x h, W2: h x 3
///   linear: logits = W2^T x + b2,                  W2: n x 3
struct StudentParams {
    Tensor w1, b1, w2, b2;

    static constexpr std::array<const char*, 4> kNames = {"W1", "b1", "W2", "b2"};

    std::array<Tensor*, 4> tensors() { return {&w1, &b1, &w2, &b2}; }
    std::array<const Tensor*, 4> tensors() const { return {&w1, &b1, &w2, &b2}; }

    StudentParams zeros_like() const;
    std::size_t count() const;
    bool all_finite() const;
};

struct TrainingSample {
    std::vector<double> embedding;
    SentimentDistribution teacher;
    int multiplier = 1;
    Polarity argmax_class = Polarity::positive;
};

TrainingSample make_sample(std::vector<double> embedding, const SentimentDistribution& teacher,
                           const GatingConfig& gating);

class StudentModel {
public:
    static StudentModel linear(std::size_t input_dim);
    static StudentModel mlp1(std::size_t input_dim, std::size_t hidden);
    static StudentModel create(Architecture arch, std::size_t input_dim, std::size_t hidden);

    // Linear: all zeros (uniform output). mlp1: He-scaled W1, small W2, zero biases.
    void initialize(std::uint64_t seed);

    Architecture architecture() const noexcept { return arch_; }
    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t hidden_dim() const noexcept { return hidden_; }

    StudentParams& params() noexcept { return params_; }
    const StudentParams& params() const noexcept { return params_; }

    std::array<double, kNumClasses> logits(std::span<const double> x) const;
    std::array<double, kNumClasses> logits(std::span<const float> x) const;

    std::uint64_t param_hash() const;

private:
    StudentModel(Architecture arch, std::size_t input_dim, std::size_t hidden);

    void check_input(std::size_t n) const;

    Architecture arch_;
    std::size_t input_dim_;
    std::size_t hidden_;
    StudentParams params_;
};

SentimentDistribution forward(const StudentModel& model, std::span<const double> x);
SentimentDistribution forward(const StudentModel& model, std::span<const float> x);

// Gated soft cross-entropy  -multiplier * sum_k g_k log f_k.
double sample_loss(const StudentModel& model, const TrainingSample& sample);

struct Gradients {
    StudentParams grad;
    double loss = 0.0;  // mean sample loss over the batch
};

/// Analytic gradient of the mean gated loss over `batch` (non-empty).
/// Multiplier-0 samples contribute nothing to loss or gradient.
Gradients backward(const StudentModel& model, std::span<const TrainingSample> batch);

struct AdamConfig {
    double lr = 1e-4;
    double eps = 1e-7;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

struct AdamState {
    StudentParams m;
    StudentParams v;
    std::uint64_t t = 0;

    static AdamState for_model(const StudentModel& model);
};

// One bias-corrected Adam update; increments state.t before applying it.
void adam_step(StudentModel& model, const StudentParams& grads, AdamState& state, const AdamConfig& config);

}  // namespace distillstream
