#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "zip/schedule.hpp"
#include "zip/tensor.hpp"
#include "zip/tiling.hpp"

// Noise predictors backing the reverse process. Instead of a trained
// network, each backend computes the exact posterior mean E[x0 | x_t]
// for a known prior and inverts it into an epsilon estimate.

namespace zip {

class Denoiser {
public:
    virtual ~Denoiser() = default;

    // E[x0 | x_t] under the backend's prior.
    virtual Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& s) const = 0;

    // eps_hat = (x_t - sqrt(abar_t) * E[x0|x_t]) / sqrt(1 - abar_t).
    // When 1 - abar_t vanishes (t = 0) there is no noise to explain.
    Tensor predict_epsilon(const Tensor& x_t, int t, const NoiseSchedule& s) const {
        const double abar = s.alpha_bar(t);
        const double rem = 1.0 - abar;
        if (rem <= 0.0) return Tensor(x_t.height, x_t.width, x_t.channels, 0.0);
        return (1.0 / std::sqrt(rem)) * (x_t - std::sqrt(abar) * posterior_mean(x_t, t, s));
    }
};

// Empirical prior over a finite reference set. The posterior is a softmax
// over squared distances to the scaled references; weights are computed in
// the log domain with the max subtracted so they survive abar_t near 1.
class DiscreteDatasetDenoiser : public Denoiser {
public:
    explicit DiscreteDatasetDenoiser(std::vector<Tensor> refs) : refs_(std::move(refs)) {
        if (refs_.empty()) throw std::invalid_argument("DiscreteDatasetDenoiser: empty refs");
        for (const Tensor& r : refs_) {
            require_same_shape(refs_.front(), r, "DiscreteDatasetDenoiser refs");
        }
    }

    const std::vector<Tensor>& refs() const { return refs_; }

    std::vector<double> posterior_weights(const Tensor& x_t, int t,
                                          const NoiseSchedule& s) const {
        if (t < 1 || t > s.steps()) {
            throw std::invalid_argument("posterior_weights: t out of range");
        }
        require_same_shape(x_t, refs_.front(), "posterior_weights");
        const double root_abar = std::sqrt(s.alpha_bar(t));
        const double inv_two_var = 1.0 / (2.0 * (1.0 - s.alpha_bar(t)));

        std::vector<double> logw(refs_.size());
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < x_t.data.size(); ++j) {
                const double diff = x_t.data[j] - root_abar * refs_[i].data[j];
                d2 += diff * diff;
            }
            logw[i] = -d2 * inv_two_var;
            peak = std::max(peak, logw[i]);
        }
        double total = 0.0;
        for (double& lw : logw) {
            lw = std::exp(lw - peak);
            total += lw;
        }
        for (double& w : logw) w /= total;
        return logw;
    }

    Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& s) const override {
        const std::vector<double> w = posterior_weights(x_t, t, s);
        Tensor out(x_t.height, x_t.width, x_t.channels);
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            for (std::size_t j = 0; j < out.data.size(); ++j) {
                out.data[j] += w[i] * refs_[i].data[j];
            }
        }
        return out;
    }

private:
    std::vector<Tensor> refs_;
};

// Conjugate prior x0 ~ N(mu, s^2 I). The posterior mean is elementwise
// (s^2 sqrt(abar) x_t + (1-abar) mu) / (s^2 abar + (1-abar)). A scalar mu
// adapts to whatever shape the sampler feeds in.
class AnalyticGaussianDenoiser : public Denoiser {
public:
    AnalyticGaussianDenoiser(Tensor mu, double s) : mu_(std::move(mu)), stddev_(s) {
        if (!(s > 0.0)) throw std::invalid_argument("AnalyticGaussianDenoiser: s must be > 0");
    }

    AnalyticGaussianDenoiser(double mu_scalar, double s) : mu_scalar_(mu_scalar), stddev_(s) {
        if (!(s > 0.0)) throw std::invalid_argument("AnalyticGaussianDenoiser: s must be > 0");
    }

    double stddev() const { return stddev_; }

    Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& s) const override {
        if (t < 0 || t > s.steps()) throw std::invalid_argument("posterior_mean: t out of range");
        if (mu_.has_value()) require_same_shape(x_t, *mu_, "AnalyticGaussianDenoiser");
        const double abar = s.alpha_bar(t);
        const double var = stddev_ * stddev_;
        const double denom = var * abar + (1.0 - abar);
        const double xt_coef = var * std::sqrt(abar) / denom;
        const double mu_coef = (1.0 - abar) / denom;
        Tensor out(x_t.height, x_t.width, x_t.channels);
        for (std::size_t j = 0; j < out.data.size(); ++j) {
            const double mu_j = mu_.has_value() ? mu_->data[j] : mu_scalar_;
            out.data[j] = xt_coef * x_t.data[j] + mu_coef * mu_j;
        }
        return out;
    }

private:
    std::optional<Tensor> mu_;
    double mu_scalar_ = 0.0;
    double stddev_;
};

// Treats a mosaic as independent tiles: the posterior of the whole image
// factorizes over tiles, so running the inner backend per tile is exact
// for an iid-tile prior. Lets small-image backends drive mosaic sampling.
class TiledDenoiser : public Denoiser {
public:
    TiledDenoiser(std::shared_ptr<const Denoiser> inner, TileGrid grid)
        : inner_(std::move(inner)), grid_(grid) {
        if (!inner_) throw std::invalid_argument("TiledDenoiser: null inner denoiser");
    }

    const TileGrid& grid() const { return grid_; }

    Tensor posterior_mean(const Tensor& x_t, int t, const NoiseSchedule& s) const override {
        std::vector<Tensor> tiles = untile_tensor(x_t, grid_);
        for (Tensor& tile : tiles) tile = inner_->posterior_mean(tile, t, s);
        return tile_tensors(tiles, grid_);
    }

private:
    std::shared_ptr<const Denoiser> inner_;
    TileGrid grid_;
};

}  // namespace zip
