#include "augdiff/pca.hpp"

#include <cmath>
#include <stdexcept>

#include "augdiff/rng.hpp"
#include "augdiff/tape.hpp"

namespace augdiff {

namespace {

// dominant eigenpair of a symmetric PSD matrix via power iteration; the
// iterate is kept exactly orthogonal to `against` (if any) so successive
// components form an orthonormal set to machine precision
std::pair<double, Tensor> dominant_eig(const Tensor& cov, Rng& rng,
                                       const Tensor* against = nullptr) {
    const size_t d = cov.rows();
    Tensor v(d, 1);
    for (size_t i = 0; i < d; ++i) v[i] = rng.next_normal();
    auto orthogonalize = [&](Tensor& x) {
        if (!against) return;
        double dot = 0.0;
        for (size_t i = 0; i < d; ++i) dot += x[i] * (*against)[i];
        for (size_t i = 0; i < d; ++i) x[i] -= dot * (*against)[i];
    };
    orthogonalize(v);
    Tensor mv;
    for (int it = 0; it < 20000; ++it) {
        gemm(cov, false, v, false, mv);
        orthogonalize(mv);
        double norm = 0.0;
        for (size_t i = 0; i < d; ++i) norm += mv[i] * mv[i];
        norm = std::sqrt(norm);
        if (norm < 1e-300) return {0.0, v};
        double diff = 0.0;
        for (size_t i = 0; i < d; ++i) {
            double next = mv[i] / norm;
            diff = std::max(diff, std::fabs(next - v[i]));
            v[i] = next;
        }
        if (diff < 1e-15 && it > 2) break;
    }
    // Rayleigh quotient for the final eigenvalue estimate
    gemm(cov, false, v, false, mv);
    double lambda = 0.0;
    for (size_t i = 0; i < d; ++i) lambda += v[i] * mv[i];
    return {lambda, v};
}

void fix_sign(Tensor& component) {
    size_t best = 0;
    for (size_t i = 1; i < component.numel(); ++i) {
        if (std::fabs(component[i]) > std::fabs(component[best])) best = i;
    }
    if (component[best] < 0.0) {
        for (size_t i = 0; i < component.numel(); ++i) component[i] = -component[i];
    }
}

}  // namespace

Pca2 fit_pca2(const Tensor& features) {
    const size_t n = features.rows();
    const size_t d = features.cols();
    if (n < 3) throw std::invalid_argument("fit_pca2: need at least 3 feature rows");
    if (d < 2) throw std::invalid_argument("fit_pca2: need at least 2 dimensions");

    Pca2 pca;
    pca.mean = Tensor(1, d);
    for (size_t c = 0; c < d; ++c) {
        double m = 0.0;
        for (size_t r = 0; r < n; ++r) m += features.at(r, c);
        pca.mean[c] = m / static_cast<double>(n);
    }
    Tensor centered(n, d);
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < d; ++c) {
            centered.at(r, c) = features.at(r, c) - pca.mean[c];
        }
    }
    Tensor cov;
    gemm(centered, true, centered, false, cov);
    for (size_t i = 0; i < cov.numel(); ++i) cov[i] /= static_cast<double>(n);
    for (size_t i = 0; i < d; ++i) pca.total_variance += cov.at(i, i);
    if (pca.total_variance < 1e-24) {
        throw std::invalid_argument("fit_pca2: fewer than 2 distinct points");
    }

    Rng rng(0x9ca2u);  // fixed internal seed; the result is the eigenvector
    pca.components = Tensor(2, d);
    Tensor work = cov;
    Tensor first(d, 1);
    for (int k = 0; k < 2; ++k) {
        auto [lambda, v] = dominant_eig(work, rng, k == 1 ? &first : nullptr);
        if (lambda < 1e-18 * pca.total_variance) {
            // degenerate direction (data on a line): deterministic unit vector
            // orthogonal to the first component
            Tensor u(d, 1);
            size_t axis = 0;
            for (size_t i = 1; i < d; ++i) {
                if (std::fabs(pca.components.at(0, i)) <
                    std::fabs(pca.components.at(0, axis))) {
                    axis = i;
                }
            }
            u[axis] = 1.0;
            double dot = 0.0;
            for (size_t i = 0; i < d; ++i) dot += u[i] * pca.components.at(0, i);
            double norm = 0.0;
            for (size_t i = 0; i < d; ++i) {
                u[i] -= dot * pca.components.at(0, i);
                norm += u[i] * u[i];
            }
            norm = std::sqrt(norm);
            for (size_t i = 0; i < d; ++i) u[i] /= norm;
            v = u;
            lambda = 0.0;
        }
        for (size_t i = 0; i < d; ++i) pca.components.at(static_cast<size_t>(k), i) = v[i];
        pca.eigenvalues[k] = lambda;
        if (k == 0) first = v;
        // deflate: cov <- cov - lambda v v^T
        for (size_t r = 0; r < d; ++r) {
            for (size_t c = 0; c < d; ++c) {
                work.at(r, c) -= lambda * v[r] * v[c];
            }
        }
    }
    Tensor c0(1, d), c1(1, d);
    for (size_t i = 0; i < d; ++i) {
        c0[i] = pca.components.at(0, i);
        c1[i] = pca.components.at(1, i);
    }
    fix_sign(c0);
    fix_sign(c1);
    for (size_t i = 0; i < d; ++i) {
        pca.components.at(0, i) = c0[i];
        pca.components.at(1, i) = c1[i];
    }
    return pca;
}

Tensor pca2_project(const Pca2& pca, const Tensor& features) {
    if (features.cols() != pca.mean.cols()) {
        throw std::invalid_argument("pca2_project: dimension mismatch");
    }
    Tensor centered(features.rows(), features.cols());
    for (size_t r = 0; r < features.rows(); ++r) {
        for (size_t c = 0; c < features.cols(); ++c) {
            centered.at(r, c) = features.at(r, c) - pca.mean[c];
        }
    }
    Tensor out;
    gemm(centered, false, pca.components, true, out);
    return out;
}

}  // namespace augdiff
