#pragma once

#include <stdexcept>
#include <string>

#include "zip/tensor.hpp"

// Block average pooling A with kernel == stride == k, its pseudo-inverse
// A+ (block replication), and the induced range / null-space projections.
// A A+ = I on the pooled space, so A+ A is idempotent and x always splits
// exactly into A+ A x + (I - A+ A) x.

namespace zip {

class AvgPoolOperator {
public:
    explicit AvgPoolOperator(int kernel) : kernel_(kernel) {
        if (kernel < 1) throw std::invalid_argument("AvgPoolOperator: kernel must be >= 1");
    }

    int kernel() const { return kernel_; }

    void check_divisible(const Tensor& x) const {
        if (x.height % kernel_ != 0 || x.width % kernel_ != 0) {
            throw std::invalid_argument("AvgPoolOperator: " + std::to_string(x.height) + "x" +
                                        std::to_string(x.width) +
                                        " not divisible by kernel " + std::to_string(kernel_));
        }
    }

    // A: (H, W, C) -> (H/k, W/k, C), each output cell the mean of its k*k block.
    Tensor apply_A(const Tensor& x) const {
        check_divisible(x);
        const int oh = x.height / kernel_, ow = x.width / kernel_;
        Tensor out(oh, ow, x.channels);
        const double inv = 1.0 / (static_cast<double>(kernel_) * kernel_);
        for (int y = 0; y < oh; ++y) {
            for (int xq = 0; xq < ow; ++xq) {
                for (int c = 0; c < x.channels; ++c) {
                    double sum = 0.0;
                    for (int dy = 0; dy < kernel_; ++dy) {
                        for (int dx = 0; dx < kernel_; ++dx) {
                            sum += x.at(y * kernel_ + dy, xq * kernel_ + dx, c);
                        }
                    }
                    out.at(y, xq, c) = sum * inv;
                }
            }
        }
        return out;
    }

    // A+: (h, w, C) -> (h*k, w*k, C), each input cell replicated over its block.
    Tensor apply_A_dagger(const Tensor& pooled) const {
        Tensor out(pooled.height * kernel_, pooled.width * kernel_, pooled.channels);
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) {
                for (int c = 0; c < out.channels; ++c) {
                    out.at(y, x, c) = pooled.at(y / kernel_, x / kernel_, c);
                }
            }
        }
        return out;
    }

    // A+ A x: every pixel replaced by its block mean.
    Tensor project_range(const Tensor& x) const { return apply_A_dagger(apply_A(x)); }

    // (I - A+ A) x: per-block zero-mean residual.
    Tensor project_null(const Tensor& x) const { return x - project_range(x); }

private:
    int kernel_;
};

}  // namespace zip
