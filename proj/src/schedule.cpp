#include "augdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace augdiff {

NoiseSchedule make_cosine_schedule(int T, double s) {
    if (T < 2) throw std::invalid_argument("make_cosine_schedule: T must be >= 2");
    auto f = [&](double t) {
        double x = ((t / T + s) / (1.0 + s)) * std::numbers::pi / 2.0;
        double c = std::cos(x);
        return c * c;
    };
    NoiseSchedule sched;
    sched.T = T;
    sched.cosine_s = s;
    sched.betas.resize(static_cast<size_t>(T));
    sched.alphas.resize(static_cast<size_t>(T));
    sched.alpha_bars.resize(static_cast<size_t>(T) + 1);
    sched.alpha_bars[0] = 1.0;
    const double f0 = f(0.0);
    double prev_raw = 1.0;
    for (int t = 1; t <= T; ++t) {
        double raw = f(static_cast<double>(t)) / f0;
        double beta = 1.0 - raw / prev_raw;
        beta = std::clamp(beta, 1e-5, 0.999);
        prev_raw = raw;
        sched.betas[static_cast<size_t>(t - 1)] = beta;
        sched.alphas[static_cast<size_t>(t - 1)] = 1.0 - beta;
        sched.alpha_bars[static_cast<size_t>(t)] =
            sched.alpha_bars[static_cast<size_t>(t - 1)] * (1.0 - beta);
    }
    return sched;
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T) throw std::invalid_argument("q_sample: t out of range");
    if (!z0.same_shape(eps)) throw std::invalid_argument("q_sample: shape mismatch");
    const double ab = sched.alpha_bar(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Tensor out(z0.rows(), z0.cols());
    for (size_t i = 0; i < out.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

Tensor q_sample_rows(const Tensor& z0_rows, const std::vector<int>& t,
                     const Tensor& eps_rows, const NoiseSchedule& sched) {
    if (!z0_rows.same_shape(eps_rows)) {
        throw std::invalid_argument("q_sample_rows: shape mismatch");
    }
    if (t.size() != z0_rows.rows()) {
        throw std::invalid_argument("q_sample_rows: one t per row required");
    }
    Tensor out(z0_rows.rows(), z0_rows.cols());
    for (size_t r = 0; r < z0_rows.rows(); ++r) {
        if (t[r] < 0 || t[r] > sched.T) {
            throw std::invalid_argument("q_sample_rows: t out of range");
        }
        const double ab = sched.alpha_bar(t[r]);
        const double a = std::sqrt(ab);
        const double b = std::sqrt(1.0 - ab);
        for (size_t c = 0; c < out.cols(); ++c) {
            out.at(r, c) = a * z0_rows.at(r, c) + b * eps_rows.at(r, c);
        }
    }
    return out;
}

Tensor q_sample_sequential(const Tensor& z0, int t, const NoiseSchedule& sched, Rng& rng) {
    if (t < 0 || t > sched.T) {
        throw std::invalid_argument("q_sample_sequential: t out of range");
    }
    Tensor z = z0;
    for (int i = 1; i <= t; ++i) {
        const double a = std::sqrt(sched.alpha(i));
        const double b = std::sqrt(sched.beta(i));
        for (size_t j = 0; j < z.numel(); ++j) {
            z[j] = a * z[j] + b * rng.next_normal();
        }
    }
    return z;
}

Tensor gaussian_like(size_t rows, size_t cols, Rng& rng) {
    Tensor t(rows, cols);
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.next_normal();
    return t;
}

}  // namespace augdiff
