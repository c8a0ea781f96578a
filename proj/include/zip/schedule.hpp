#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace zip {

// Precomputed diffusion variance schedule. Tables are built once so every
// sampler sees bit-identical coefficients. Index convention: t runs 1..T,
// and alpha_bar(0) == 1 closes the t = 1 boundary of the reverse process.
class NoiseSchedule {
public:
    NoiseSchedule(std::vector<double> beta) {
        if (beta.empty()) throw std::invalid_argument("NoiseSchedule: empty beta table");
        steps_ = static_cast<int>(beta.size());
        beta_.assign(steps_ + 1, 0.0);
        alpha_.assign(steps_ + 1, 1.0);
        alpha_bar_.assign(steps_ + 1, 1.0);
        for (int t = 1; t <= steps_; ++t) {
            double b = beta[static_cast<std::size_t>(t) - 1];
            if (!(b > 0.0 && b < 1.0)) {
                throw std::invalid_argument("NoiseSchedule: beta_" + std::to_string(t) +
                                            " outside (0,1)");
            }
            beta_[t] = b;
            alpha_[t] = 1.0 - b;
            alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
        }
    }

    int steps() const { return steps_; }

    double beta(int t) const {
        check_step(t);
        return beta_[t];
    }
    double alpha(int t) const {
        check_step(t);
        return alpha_[t];
    }
    // Valid for t in 0..T; alpha_bar(0) == 1.
    double alpha_bar(int t) const {
        if (t < 0 || t > steps_) {
            throw std::invalid_argument("NoiseSchedule: alpha_bar index " + std::to_string(t) +
                                        " outside [0," + std::to_string(steps_) + "]");
        }
        return alpha_bar_[t];
    }

private:
    void check_step(int t) const {
        if (t < 1 || t > steps_) {
            throw std::invalid_argument("NoiseSchedule: step " + std::to_string(t) +
                                        " outside [1," + std::to_string(steps_) + "]");
        }
    }

    int steps_ = 0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

inline NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw std::invalid_argument("make_linear_schedule: steps must be >= 1");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
        throw std::invalid_argument(
            "make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> beta(static_cast<std::size_t>(steps));
    if (steps == 1) {
        beta[0] = beta_start;
    } else {
        for (int t = 1; t <= steps; ++t) {
            beta[static_cast<std::size_t>(t) - 1] =
                beta_start + (static_cast<double>(t - 1) / (steps - 1)) * (beta_end - beta_start);
        }
    }
    return NoiseSchedule(std::move(beta));
}

// Posterior noise scale of the ancestral reverse step:
//   sigma_t^2 = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
// sigma_1 == 0 because alpha_bar(0) == 1.
inline double sigma_ddpm(const NoiseSchedule& s, int t) {
    double variance = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
    return std::sqrt(variance);
}

// Descending timestep subsequence T, T-S, ..., with 1 appended when the
// stride does not land on it. prev(t) is the next element of the descent,
// and prev(last) == 0 so the final step closes on alpha_bar(0) == 1.
struct TimestepPath {
    std::vector<int> steps;

    int prev(int t) const {
        auto it = std::find(steps.begin(), steps.end(), t);
        if (it == steps.end()) {
            throw std::invalid_argument("TimestepPath: step " + std::to_string(t) +
                                        " not on path");
        }
        ++it;
        return it == steps.end() ? 0 : *it;
    }
};

inline TimestepPath make_timestep_path(const NoiseSchedule& s, int pace) {
    if (pace < 1 || pace > s.steps()) {
        throw std::invalid_argument("make_timestep_path: pace must be in [1," +
                                    std::to_string(s.steps()) + "]");
    }
    TimestepPath path;
    for (int t = s.steps(); t >= 1; t -= pace) path.steps.push_back(t);
    if (path.steps.back() != 1) path.steps.push_back(1);
    return path;
}

}  // namespace zip
