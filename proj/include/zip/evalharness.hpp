#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "zip/dataset.hpp"
#include "zip/imaging.hpp"
#include "zip/rng.hpp"

// Desk-scale evaluation: a procedural image dataset, a seeded linear
// softmax classifier, and the clean-accuracy / attack-success-rate /
// poisoned-accuracy metric triple.

namespace zip {

struct ToyGenConfig {
    int classes = 4;
    int per_class = 100;
    int size = 32;
    int channels = 1;
    double amplitude = 0.3;          // pattern contrast around mid-gray
    double amplitude_jitter = 0.2;   // relative contrast jitter
    double brightness_jitter = 0.1;  // additive offset jitter
    double phase_jitter = 1.0;       // stripe phase jitter, in pixels
    double pixel_noise = 0.02;       // per-pixel Gaussian noise
    int stripe_period = 8;
    int checker_block = 1;
    double disk_radius_frac = 0.30;

    void validate() const {
        if (classes < 1 || classes > 4) {
            throw std::invalid_argument("ToyGenConfig: classes must be in [1,4]");
        }
        if (per_class < 1) throw std::invalid_argument("ToyGenConfig: per_class must be >= 1");
        if (size < 4) throw std::invalid_argument("ToyGenConfig: size must be >= 4");
        if (channels < 1) throw std::invalid_argument("ToyGenConfig: channels must be >= 1");
        if (stripe_period < 2) {
            throw std::invalid_argument("ToyGenConfig: stripe_period must be >= 2");
        }
        if (checker_block < 1) {
            throw std::invalid_argument("ToyGenConfig: checker_block must be >= 1");
        }
    }
};

namespace detail {

// Class patterns over [-1,1]: 0 horizontal stripes, 1 vertical stripes,
// 2 checkerboard (fixed phase), 3 soft centered disk.
inline double class_pattern(const ToyGenConfig& cfg, int label, int y, int x, double phase) {
    switch (label) {
        case 0:
            return std::sin(2.0 * std::numbers::pi * (y + phase) / cfg.stripe_period);
        case 1:
            return std::sin(2.0 * std::numbers::pi * (x + phase) / cfg.stripe_period);
        case 2: {
            const int b = cfg.checker_block;
            return ((y / b + x / b) % 2 == 0) ? 1.0 : -1.0;
        }
        default: {
            const double cy = (cfg.size - 1) / 2.0, cx = (cfg.size - 1) / 2.0;
            const double r = std::hypot(y - cy, x - cx);
            return std::tanh((cfg.disk_radius_frac * cfg.size - r) / 1.5);
        }
    }
}

}  // namespace detail

inline Dataset gen_toy_dataset(const ToyGenConfig& cfg, RngStream& rng) {
    cfg.validate();
    Dataset ds;
    ds.class_count = cfg.classes;
    ds.samples.reserve(static_cast<std::size_t>(cfg.classes) * cfg.per_class);
    for (int label = 0; label < cfg.classes; ++label) {
        for (int i = 0; i < cfg.per_class; ++i) {
            const double amp =
                cfg.amplitude * (1.0 + cfg.amplitude_jitter * rng.uniform(-1.0, 1.0));
            const double brightness = cfg.brightness_jitter * rng.uniform(-1.0, 1.0);
            const double phase = cfg.phase_jitter * rng.uniform();

            Image img(cfg.size, cfg.size, cfg.channels);
            for (int y = 0; y < cfg.size; ++y) {
                for (int x = 0; x < cfg.size; ++x) {
                    const double p = detail::class_pattern(cfg, label, y, x, phase);
                    for (int c = 0; c < cfg.channels; ++c) {
                        double v =
                            0.5 + brightness + amp * p + cfg.pixel_noise * rng.gaussian();
                        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
                    }
                }
            }

            char name[32];
            std::snprintf(name, sizeof(name), "c%d_%04d", label, i);
            ds.samples.push_back(Sample{std::move(img), label, false, name});
        }
    }
    return ds;
}

struct TrainConfig {
    int epochs = 60;
    double learning_rate = 0.5;
    int batch_size = 32;
};

// Multinomial logistic regression over flattened pixels, fit by seeded
// mini-batch gradient descent. Deterministic given (dataset, config, rng).
class LinearSoftmaxClassifier {
public:
    LinearSoftmaxClassifier(int classes, int dim)
        : classes_(classes), dim_(dim),
          weights_(static_cast<std::size_t>(classes) * dim, 0.0), bias_(classes, 0.0) {
        if (classes < 2) throw std::invalid_argument("classifier: need >= 2 classes");
        if (dim < 1) throw std::invalid_argument("classifier: need >= 1 feature");
    }

    int classes() const { return classes_; }
    int dim() const { return dim_; }
    std::vector<double>& weights() { return weights_; }
    const std::vector<double>& weights() const { return weights_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& bias() const { return bias_; }

    std::vector<double> scores(const Image& img) const {
        if (static_cast<int>(img.size()) != dim_) {
            throw std::invalid_argument("classifier: feature size mismatch");
        }
        std::vector<double> out(static_cast<std::size_t>(classes_));
        for (int c = 0; c < classes_; ++c) {
            const double* w = weights_.data() + static_cast<std::size_t>(c) * dim_;
            double acc = bias_[static_cast<std::size_t>(c)];
            for (int j = 0; j < dim_; ++j) acc += w[j] * img.px.data[static_cast<std::size_t>(j)];
            out[static_cast<std::size_t>(c)] = acc;
        }
        return out;
    }

    int predict(const Image& img) const {
        const std::vector<double> sc = scores(img);
        int best = 0;
        for (int c = 1; c < classes_; ++c) {
            if (sc[static_cast<std::size_t>(c)] > sc[static_cast<std::size_t>(best)]) best = c;
        }
        return best;
    }

private:
    int classes_;
    int dim_;
    std::vector<double> weights_;
    std::vector<double> bias_;
};

inline LinearSoftmaxClassifier train_classifier(const Dataset& ds, const TrainConfig& cfg,
                                                RngStream& rng) {
    if (ds.samples.empty()) throw std::invalid_argument("train_classifier: empty dataset");
    if (ds.class_count < 2) throw std::invalid_argument("train_classifier: need >= 2 classes");
    ds.check_labels();
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("train_classifier: bad hyperparameters");
    }

    const int dim = static_cast<int>(ds.samples.front().image.size());
    for (const Sample& s : ds.samples) {
        if (static_cast<int>(s.image.size()) != dim) {
            throw std::invalid_argument("train_classifier: nonuniform image shapes");
        }
    }

    LinearSoftmaxClassifier clf(ds.class_count, dim);
    const std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> probs(static_cast<std::size_t>(ds.class_count));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const double scale = cfg.learning_rate / static_cast<double>(stop - start);
            std::vector<double> gw(clf.weights().size(), 0.0);
            std::vector<double> gb(clf.bias().size(), 0.0);
            for (std::size_t k = start; k < stop; ++k) {
                const Sample& s = ds.samples[order[k]];
                std::vector<double> sc = clf.scores(s.image);
                const double peak = *std::max_element(sc.begin(), sc.end());
                double total = 0.0;
                for (int c = 0; c < ds.class_count; ++c) {
                    probs[static_cast<std::size_t>(c)] =
                        std::exp(sc[static_cast<std::size_t>(c)] - peak);
                    total += probs[static_cast<std::size_t>(c)];
                }
                for (int c = 0; c < ds.class_count; ++c) {
                    const double g =
                        probs[static_cast<std::size_t>(c)] / total - (c == s.label ? 1.0 : 0.0);
                    gb[static_cast<std::size_t>(c)] += g;
                    double* gwc = gw.data() + static_cast<std::size_t>(c) * dim;
                    const double* px = s.image.px.data.data();
                    for (int j = 0; j < dim; ++j) gwc[j] += g * px[j];
                }
            }
            for (std::size_t j = 0; j < gw.size(); ++j) clf.weights()[j] -= scale * gw[j];
            for (std::size_t j = 0; j < gb.size(); ++j) clf.bias()[j] -= scale * gb[j];
        }
    }
    return clf;
}

struct DefenseMetrics {
    double ca = 0.0;
    double asr = 0.0;
    double pa = 0.0;
    int ca_correct = 0, ca_total = 0;
    int asr_hits = 0, asr_total = 0;
    int pa_correct = 0, pa_total = 0;
};

inline std::vector<Image> images_of(const Dataset& ds) {
    std::vector<Image> out;
    out.reserve(ds.samples.size());
    for (const Sample& s : ds.samples) out.push_back(s.image);
    return out;
}

// CA: purified clean samples classified as their true label.
// ASR: purified poisoned samples (true label != target) classified as the
//      target; same-as-target sources are excluded from the denominator.
// PA: purified poisoned samples classified as their true label.
// True labels always come from clean_test. Pass the raw image lists in the
// purified slots to score the no-defense baseline.
inline DefenseMetrics evaluate(const LinearSoftmaxClassifier& clf, const Dataset& clean_test,
                               const Dataset& poisoned_test,
                               const std::vector<Image>& purified_clean,
                               const std::vector<Image>& purified_poisoned, int target_label) {
    const std::size_t n = clean_test.samples.size();
    if (n == 0) throw std::invalid_argument("evaluate: empty test set");
    if (poisoned_test.samples.size() != n || purified_clean.size() != n ||
        purified_poisoned.size() != n) {
        throw std::invalid_argument("evaluate: misaligned sample lists");
    }
    if (target_label < 0 || target_label >= clean_test.class_count) {
        throw std::invalid_argument("evaluate: target label outside class range");
    }

    DefenseMetrics m;
    for (std::size_t i = 0; i < n; ++i) {
        const int truth = clean_test.samples[i].label;
        ++m.ca_total;
        if (clf.predict(purified_clean[i]) == truth) ++m.ca_correct;

        const int poisoned_pred = clf.predict(purified_poisoned[i]);
        if (truth != target_label) {
            ++m.asr_total;
            if (poisoned_pred == target_label) ++m.asr_hits;
        }
        ++m.pa_total;
        if (poisoned_pred == truth) ++m.pa_correct;
    }
    m.ca = static_cast<double>(m.ca_correct) / m.ca_total;
    m.asr = m.asr_total > 0 ? static_cast<double>(m.asr_hits) / m.asr_total : 0.0;
    m.pa = static_cast<double>(m.pa_correct) / m.pa_total;
    return m;
}

}  // namespace zip
