#pragma once

// Shared fixtures and reference implementations for the test binaries.
// The reference code here is written from the formulas, not from the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "distillstream/corpus.hpp"
#include "distillstream/student.hpp"
#include "distillstream/teacher.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "ds") {
        static std::uint64_t counter = 0;
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                (tag + "_" + std::to_string(rd()) + "_" + std::to_string(++counter));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Uniform on the simplex via normalized exponentials.
template <class Rng>
std::array<double, 3> random_simplex(Rng& rng) {
    std::exponential_distribution<double> e(1.0);
    std::array<double, 3> p{e(rng), e(rng), e(rng)};
    const double s = p[0] + p[1] + p[2];
    for (auto& x : p) x /= s;
    return p;
}

// The gating rule written out directly: first index of the maximum, then compare.
inline int reference_gate(const std::array<double, 3>& p, const std::array<double, 3>& c) {
    std::size_t k = 0;
    if (p[1] > p[k]) k = 1;
    if (p[2] > p[k]) k = 2;
    return p[k] >= c[k] ? 1 : 0;
}

inline std::vector<double> reference_logits(const distillstream::StudentModel& m, const std::vector<double>& x) {
    const auto& P = m.params();
    std::vector<double> feat = x;
    if (m.architecture() == distillstream::Architecture::mlp1) {
        const std::size_t h = m.hidden_dim();
        feat.assign(h, 0.0);
        for (std::size_t j = 0; j < h; ++j) {
            long double a = P.b1.data[j];
            for (std::size_t i = 0; i < x.size(); ++i) a += static_cast<long double>(P.w1.data[i * h + j]) * x[i];
            feat[j] = a > 0 ? static_cast<double>(a) : 0.0;
        }
    }
    std::vector<double> z(3);
    for (std::size_t k = 0; k < 3; ++k) {
        long double a = P.b2.data[k];
        for (std::size_t i = 0; i < feat.size(); ++i) a += static_cast<long double>(P.w2.data[i * 3 + k]) * feat[i];
        z[k] = static_cast<double>(a);
    }
    return z;
}

// Mean over the whole batch of  -m * sum_k g_k log softmax(z)_k, in long double.
inline long double reference_batch_loss(const distillstream::StudentModel& m,
                                        const std::vector<distillstream::TrainingSample>& batch) {
    long double total = 0.0L;
    for (const auto& s : batch) {
        if (s.multiplier == 0) continue;
        const auto z = reference_logits(m, s.embedding);
        const long double mx = *std::max_element(z.begin(), z.end());
        long double se = 0.0L;
        for (double v : z) se += std::exp(static_cast<long double>(v) - mx);
        const long double lse = mx + std::log(se);
        for (std::size_t k = 0; k < 3; ++k) total -= s.teacher[k] * (static_cast<long double>(z[k]) - lse);
    }
    return total / static_cast<long double>(batch.size());
}

struct GradCheck {
    double worst = 0.0;
    std::size_t checked = 0;
};

// Central differences over every parameter; error is |a - n| / max(|a|, |n|, floor).
inline GradCheck finite_difference_check(distillstream::StudentModel model,
                                         const std::vector<distillstream::TrainingSample>& batch,
                                         const distillstream::StudentParams& analytic, double step = 1e-5,
                                         double floor = 1e-4) {
    GradCheck out;
    auto tensors = model.params().tensors();
    const auto grads = analytic.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        for (std::size_t i = 0; i < tensors[t]->size(); ++i) {
            double& w = tensors[t]->data[i];
            const double saved = w;
            w = saved + step;
            const long double up = reference_batch_loss(model, batch);
            w = saved - step;
            const long double down = reference_batch_loss(model, batch);
            w = saved;
            const double numeric = static_cast<double>((up - down) / (2.0L * step));
            const double a = grads[t]->data[i];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            out.worst = std::max(out.worst, err);
            ++out.checked;
        }
    }
    return out;
}

// Greedy dedup written as the plain double loop over everything kept so far.
struct BruteDecision {
    bool retained = true;
    std::string witness;
};

inline std::vector<BruteDecision> brute_force_dedup(const std::vector<distillstream::TextImagePair>& pairs,
                                                    double tau) {
    std::vector<BruteDecision> out;
    std::vector<const distillstream::ImageItem*> kept;
    for (const auto& p : pairs) {
        BruteDecision d;
        for (const auto* k : kept) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < p.image.embedding.size(); ++i) {
                const double a = p.image.embedding[i];
                const double b = k->embedding[i];
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            if (dot / std::sqrt(na * nb) > tau) {
                d.retained = false;
                d.witness = k->image_id;
                break;
            }
        }
        if (d.retained) kept.push_back(&p.image);
        out.push_back(d);
    }
    return out;
}

}  // namespace testing
