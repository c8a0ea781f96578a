#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "zip/tensor.hpp"

namespace zip {

// Diffusion-domain state, nominally in [-1, 1] (may transiently exceed it
// while sampling).
using Latent = Tensor;

// Display-range raster: values live in [0, 1].
struct Image {
    Tensor px;

    Image() = default;
    explicit Image(Tensor t) : px(std::move(t)) {}
    Image(int h, int w, int c, double fill = 0.0) : px(h, w, c, fill) {}

    int height() const { return px.height; }
    int width() const { return px.width; }
    int channels() const { return px.channels; }
    std::size_t size() const { return px.size(); }
    bool same_shape(const Image& o) const { return px.same_shape(o.px); }

    double& at(int y, int x, int c) { return px.at(y, x, c); }
    double at(int y, int x, int c) const { return px.at(y, x, c); }
};

inline bool in_display_range(const Image& img, double tol = 0.0) {
    for (double v : img.px.data) {
        if (!(v >= -tol && v <= 1.0 + tol)) return false;
    }
    return true;
}

// [0,1] -> [-1,1], elementwise 2v - 1.
inline Latent to_latent(const Image& img) {
    Latent out = img.px;
    for (double& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

// [-1,1] -> [0,1] with clamping; the one place sampler output is clipped
// into display range.
inline Image from_latent(const Latent& lat) {
    Tensor out = lat;
    for (double& v : out.data) v = std::min(1.0, std::max(0.0, (v + 1.0) * 0.5));
    return Image(std::move(out));
}

// Peak signal-to-noise ratio in dB against peak 1.0; +infinity for
// identical inputs.
inline double psnr(const Image& a, const Image& b) {
    require_same_shape(a.px, b.px, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.px.data.size(); ++i) {
        double d = a.px.data[i] - b.px.data[i];
        se += d * d;
    }
    double mse = se / static_cast<double>(a.px.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

}  // namespace zip
