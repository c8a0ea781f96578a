#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace zip {

// Dense H x W x C grid of doubles, row-major with interleaved channels.
// The shared container for display-range images and diffusion-domain states.
struct Tensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor() = default;

    Tensor(int h, int w, int c, double fill = 0.0) : height(h), width(w), channels(c) {
        if (h <= 0 || w <= 0 || c <= 0) {
            throw std::invalid_argument("Tensor: dimensions must be positive");
        }
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Tensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.height) + "x" + std::to_string(b.width) +
                                    "x" + std::to_string(b.channels) + ")");
    }
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

inline Tensor& operator+=(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor add");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    return a;
}

inline Tensor& operator-=(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor sub");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= b.data[i];
    return a;
}

inline double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

inline double squared_norm(const Tensor& a) { return dot(a, a); }

inline double norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

inline double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

inline Tensor clamped(const Tensor& a, double lo, double hi) {
    Tensor out = a;
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return out;
}

}  // namespace zip
