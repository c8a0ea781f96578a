#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "zip/denoiser.hpp"
#include "zip/imaging.hpp"
#include "zip/linops.hpp"
#include "zip/rng.hpp"
#include "zip/schedule.hpp"
#include "zip/tensor.hpp"

// Diffusion processes: forward noising, ancestral and strided reverse
// steps, their pooling-guided variants, and the full purification loop.
// Guided steps pin the block-mean component of the trajectory to the
// input's pooled content while the reverse process regrows everything the
// pooling destroyed, which is what removes localized trigger patterns.

namespace zip {

struct PurifyConfig {
    explicit PurifyConfig(NoiseSchedule s) : schedule(std::move(s)) {}

    NoiseSchedule schedule;
    double lambda = 0.3;  // guided fraction of the trajectory
    int pace = 1;         // timestep stride; 1 = ancestral path
    double eta = 0.0;     // strided-step noise scale
    std::uint64_t seed = 0;
    bool clip_x0 = true;
    // Test oracle: exact trigger subtraction instead of the zero-shot form.
    std::optional<Tensor> strict_trigger;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) {
            throw std::invalid_argument("PurifyConfig: lambda must be in [0,1]");
        }
        if (pace < 1 || pace > schedule.steps()) {
            throw std::invalid_argument("PurifyConfig: pace must be in [1,T]");
        }
        if (!(eta >= 0.0 && eta <= 1.0)) {
            throw std::invalid_argument("PurifyConfig: eta must be in [0,1]");
        }
    }

    // Steps t > switch_step() are guided. The epsilon nudge keeps
    // lambda * T from rounding below an exactly-representable integer.
    int switch_step() const {
        return static_cast<int>(std::floor(lambda * schedule.steps() + 1e-9));
    }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Tensor forward_sample(const Tensor& x0, int t, const NoiseSchedule& s,
                             const Tensor& eps) {
    require_same_shape(x0, eps, "forward_sample");
    if (t < 1 || t > s.steps()) throw std::invalid_argument("forward_sample: t out of range");
    const double abar = s.alpha_bar(t);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

// x_{0|t} = (x_t - sqrt(1 - abar_t) eps_t) / sqrt(abar_t).
inline Tensor estimate_x0(const Tensor& x_t, const Tensor& eps_t, int t, const NoiseSchedule& s,
                          bool clip = false) {
    require_same_shape(x_t, eps_t, "estimate_x0");
    if (t < 1 || t > s.steps()) throw std::invalid_argument("estimate_x0: t out of range");
    const double abar = s.alpha_bar(t);
    Tensor x0 = (1.0 / std::sqrt(abar)) * (x_t - std::sqrt(1.0 - abar) * eps_t);
    return clip ? clamped(x0, -1.0, 1.0) : x0;
}

// Ancestral reverse step
//   x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) eps_t) / sqrt(alpha_t) + sigma_t noise.
// Callers must pass zero noise at t = 1 (sigma_1 is 0 anyway).
inline Tensor ddpm_step(const Tensor& x_t, const Tensor& eps_t, int t, const NoiseSchedule& s,
                        const Tensor& noise) {
    require_same_shape(x_t, eps_t, "ddpm_step");
    require_same_shape(x_t, noise, "ddpm_step noise");
    if (t < 1 || t > s.steps()) throw std::invalid_argument("ddpm_step: t out of range");
    const double alpha = s.alpha(t);
    const double abar = s.alpha_bar(t);
    const double eps_coef = (1.0 - alpha) / std::sqrt(1.0 - abar);
    return (1.0 / std::sqrt(alpha)) * (x_t - eps_coef * eps_t) + sigma_ddpm(s, t) * noise;
}

// Noise scale of the strided step from t to t_prev:
//   sigma = eta sqrt((1-abar_prev)/(1-abar_t)) sqrt(1 - abar_t/abar_prev).
// eta = 1 with t_prev = t-1 reproduces sigma_ddpm(t) exactly.
inline double ddim_sigma(int t, int t_prev, const NoiseSchedule& s, double eta) {
    if (t_prev < 0 || t_prev >= t || t > s.steps()) {
        throw std::invalid_argument("ddim_sigma: need 0 <= t_prev < t <= T");
    }
    const double abar_t = s.alpha_bar(t);
    const double abar_prev = s.alpha_bar(t_prev);
    return eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) *
           std::sqrt(1.0 - abar_t / abar_prev);
}

// Strided reverse step
//   x_{t_prev} = sqrt(abar_prev) x_{0|t} + sqrt(1 - abar_prev - sigma^2) eps_t + sigma noise.
// The direction coefficient is clamped at zero: sigma^2 <= 1 - abar_prev
// analytically, but rounding can land a hair below zero.
inline Tensor ddim_step(const Tensor& x_t, const Tensor& eps_t, int t, int t_prev,
                        const NoiseSchedule& s, double eta, const Tensor& noise,
                        bool clip_x0 = false) {
    require_same_shape(x_t, eps_t, "ddim_step");
    require_same_shape(x_t, noise, "ddim_step noise");
    const double sigma = ddim_sigma(t, t_prev, s, eta);
    const double abar_prev = s.alpha_bar(t_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - abar_prev - sigma * sigma));
    Tensor x0 = estimate_x0(x_t, eps_t, t, s, clip_x0);
    return std::sqrt(abar_prev) * x0 + dir * eps_t + sigma * noise;
}

// Guided intermediate state: block means pinned to the scaled pooled input,
// null-space content kept from the trajectory, range-space noise restored
// from the epsilon estimate so the state stays at noise level t.
//   xhat_t = sqrt(abar_t) A+ xA + (I - A+A) x_t + A+A sqrt(1-abar_t) eps_t.
inline Tensor zip_constrained_state(const Tensor& x_t, const Tensor& eps_t, const Tensor& xA,
                                    const AvgPoolOperator& op, int t, const NoiseSchedule& s) {
    require_same_shape(x_t, eps_t, "zip_constrained_state");
    if (t < 1 || t > s.steps()) {
        throw std::invalid_argument("zip_constrained_state: t out of range");
    }
    Tensor pinned = op.apply_A_dagger(xA);
    require_same_shape(x_t, pinned, "zip_constrained_state pooled input");
    const double abar = s.alpha_bar(t);
    return std::sqrt(abar) * pinned + op.project_null(x_t) +
           std::sqrt(1.0 - abar) * op.project_range(eps_t);
}

// Known-trigger oracle: additionally subtracts the trigger's block means,
// sqrt(abar_t) A+A p, steering the pinned component to the clean content.
inline Tensor zip_constrained_state_strict(const Tensor& x_t, const Tensor& eps_t,
                                           const Tensor& xA, const Tensor& p,
                                           const AvgPoolOperator& op, int t,
                                           const NoiseSchedule& s) {
    require_same_shape(x_t, p, "zip_constrained_state_strict trigger");
    const double abar = s.alpha_bar(t);
    return zip_constrained_state(x_t, eps_t, xA, op, t, s) -
           std::sqrt(abar) * op.project_range(p);
}

// One guided ancestral step: predict eps from the raw state, constrain the
// state, then take the ancestral step from the constrained state.
inline Tensor zip_ddpm_step(const Tensor& x_t, const Tensor& xA, const AvgPoolOperator& op,
                            const Denoiser& den, int t, const NoiseSchedule& s,
                            const Tensor& noise, const Tensor* strict_trigger = nullptr) {
    Tensor eps = den.predict_epsilon(x_t, t, s);
    Tensor xhat = strict_trigger
                      ? zip_constrained_state_strict(x_t, eps, xA, *strict_trigger, op, t, s)
                      : zip_constrained_state(x_t, eps, xA, op, t, s);
    return ddpm_step(xhat, eps, t, s, noise);
}

// One guided strided step: same constraint, then the strided recombination
// built on the constrained state's x_{0|t} estimate.
inline Tensor zip_ddim_step(const Tensor& x_t, const Tensor& xA, const AvgPoolOperator& op,
                            const Denoiser& den, int t, int t_prev, const NoiseSchedule& s,
                            double eta, const Tensor& noise, bool clip_x0 = false,
                            const Tensor* strict_trigger = nullptr) {
    Tensor eps = den.predict_epsilon(x_t, t, s);
    Tensor xhat = strict_trigger
                      ? zip_constrained_state_strict(x_t, eps, xA, *strict_trigger, op, t, s)
                      : zip_constrained_state(x_t, eps, xA, op, t, s);
    return ddim_step(xhat, eps, t, t_prev, s, eta, noise, clip_x0);
}

namespace detail {

// Shared reverse trajectory. When xA is non-null, steps above the switch
// index are guided. Noise is drawn before each step (zero at t = 1) so RNG
// consumption does not depend on lambda; switching guidance on or off
// inside the same path bucket leaves the trajectory bit-identical.
inline Tensor reverse_trajectory(int h, int w, int c, const Tensor* xA,
                                 const AvgPoolOperator* op, const Denoiser& den,
                                 const PurifyConfig& cfg, RngStream& rng) {
    cfg.validate();
    const NoiseSchedule& s = cfg.schedule;
    const TimestepPath path = make_timestep_path(s, cfg.pace);
    const int switch_t = cfg.switch_step();
    const Tensor* trigger =
        cfg.strict_trigger.has_value() ? &cfg.strict_trigger.value() : nullptr;

    Tensor x = rng.gaussian_tensor(h, w, c);
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        const int t = path.steps[i];
        const int t_prev = (i + 1 < path.steps.size()) ? path.steps[i + 1] : 0;
        const Tensor noise = (t > 1) ? rng.gaussian_tensor(h, w, c) : Tensor(h, w, c, 0.0);
        const bool guided = xA != nullptr && t > switch_t;

        if (cfg.pace == 1) {
            if (guided) {
                x = zip_ddpm_step(x, *xA, *op, den, t, s, noise, trigger);
            } else {
                x = ddpm_step(x, den.predict_epsilon(x, t, s), t, s, noise);
            }
        } else {
            if (guided) {
                x = zip_ddim_step(x, *xA, *op, den, t, t_prev, s, cfg.eta, noise, cfg.clip_x0,
                                  trigger);
            } else {
                x = ddim_step(x, den.predict_epsilon(x, t, s), t, t_prev, s, cfg.eta, noise,
                              cfg.clip_x0);
            }
        }
    }
    return x;
}

}  // namespace detail

// Full purification in the latent domain; returns x_0 without the final
// display clamp so constraint identities can be checked exactly.
inline Tensor purify_latent(const Tensor& input_latent, const AvgPoolOperator& op,
                            const Denoiser& den, const PurifyConfig& cfg, RngStream& rng) {
    op.check_divisible(input_latent);
    const Tensor xA = op.apply_A(input_latent);
    return detail::reverse_trajectory(input_latent.height, input_latent.width,
                                      input_latent.channels, &xA, &op, den, cfg, rng);
}

inline Image purify(const Image& input, const AvgPoolOperator& op, const Denoiser& den,
                    const PurifyConfig& cfg, RngStream& rng) {
    return from_latent(purify_latent(to_latent(input), op, den, cfg, rng));
}

// Unguided generation from pure noise.
inline Tensor sample_unguided_latent(int h, int w, int c, const Denoiser& den,
                                     const PurifyConfig& cfg, RngStream& rng) {
    return detail::reverse_trajectory(h, w, c, nullptr, nullptr, den, cfg, rng);
}

inline Image sample_unguided(int h, int w, int c, const Denoiser& den, const PurifyConfig& cfg,
                             RngStream& rng) {
    return from_latent(sample_unguided_latent(h, w, c, den, cfg, rng));
}

}  // namespace zip
