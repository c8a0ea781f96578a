#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "zip/dataset.hpp"
#include "zip/imaging.hpp"
#include "zip/rng.hpp"

// Backdoor trigger construction and dataset poisoning.

namespace zip {

enum class TriggerMode { kAdditive, kPatchReplace, kBlended };

struct TriggerSpec {
    TriggerMode mode = TriggerMode::kPatchReplace;
    Image pattern;      // patch for anchored modes, full-size overlay for blended
    int row = 0;        // anchor (top-left) for additive / patch-replace
    int col = 0;
    double alpha = 0.1; // blend weight
    int target_label = 0;

    void validate_for(int h, int w, int c) const {
        if (pattern.size() == 0) throw std::invalid_argument("TriggerSpec: empty pattern");
        if (pattern.channels() != c) {
            throw std::invalid_argument("TriggerSpec: pattern channel count mismatch");
        }
        if (mode == TriggerMode::kBlended) {
            if (pattern.height() != h || pattern.width() != w) {
                throw std::invalid_argument("TriggerSpec: blended overlay must be full-size");
            }
            if (!(alpha > 0.0 && alpha <= 1.0)) {
                throw std::invalid_argument("TriggerSpec: alpha must be in (0,1]");
            }
        } else {
            if (row < 0 || col < 0 || row + pattern.height() > h ||
                col + pattern.width() > w) {
                throw std::invalid_argument("TriggerSpec: patch out of image bounds");
            }
        }
    }
};

inline Image apply_trigger(const Image& img, const TriggerSpec& spec) {
    spec.validate_for(img.height(), img.width(), img.channels());
    Image out = img;
    switch (spec.mode) {
        case TriggerMode::kAdditive:
            for (int y = 0; y < spec.pattern.height(); ++y) {
                for (int x = 0; x < spec.pattern.width(); ++x) {
                    for (int c = 0; c < img.channels(); ++c) {
                        out.at(spec.row + y, spec.col + x, c) += spec.pattern.at(y, x, c);
                    }
                }
            }
            out.px = clamped(out.px, 0.0, 1.0);
            break;
        case TriggerMode::kPatchReplace:
            for (int y = 0; y < spec.pattern.height(); ++y) {
                for (int x = 0; x < spec.pattern.width(); ++x) {
                    for (int c = 0; c < img.channels(); ++c) {
                        out.at(spec.row + y, spec.col + x, c) = spec.pattern.at(y, x, c);
                    }
                }
            }
            break;
        case TriggerMode::kBlended:
            for (std::size_t j = 0; j < out.px.data.size(); ++j) {
                out.px.data[j] =
                    (1.0 - spec.alpha) * out.px.data[j] + spec.alpha * spec.pattern.px.data[j];
            }
            out.px = clamped(out.px, 0.0, 1.0);
            break;
    }
    return out;
}

// Triggers a seeded random fraction of samples and relabels them with the
// target class; flags record exactly which samples were modified. The
// poisoned count is round(rate * N).
inline Dataset poison_dataset(const Dataset& ds, const TriggerSpec& spec, double rate,
                              RngStream& rng) {
    if (ds.samples.empty()) throw std::invalid_argument("poison_dataset: empty dataset");
    if (!(rate > 0.0 && rate <= 1.0)) {
        throw std::invalid_argument("poison_dataset: rate must be in (0,1]");
    }
    if (spec.target_label < 0 || spec.target_label >= ds.class_count) {
        throw std::invalid_argument("poison_dataset: target label outside class range");
    }

    const std::size_t n = ds.samples.size();
    const std::size_t m =
        static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));

    // Partial Fisher-Yates: the first m entries are a uniform m-subset.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < m && i + 1 < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }

    Dataset out = ds;
    for (std::size_t i = 0; i < m; ++i) {
        Sample& s = out.samples[order[i]];
        s.image = apply_trigger(s.image, spec);
        s.label = spec.target_label;
        s.poisoned = true;
    }
    return out;
}

}  // namespace zip
