#pragma once

#include "augdiff/tensor.hpp"

namespace augdiff {

// Two-component PCA with a deterministic sign convention: the
// largest-magnitude loading of each component is positive.
struct Pca2 {
    Tensor mean;        // 1 x D
    Tensor components;  // 2 x D, orthonormal rows
    double eigenvalues[2] = {0.0, 0.0};
    double total_variance = 0.0;

    double explained_fraction() const {
        return total_variance > 0.0 ? (eigenvalues[0] + eigenvalues[1]) / total_variance
                                    : 0.0;
    }
};

// Power iteration with deflation on the population covariance. Requires at
// least 3 rows and at least 2 distinct points.
Pca2 fit_pca2(const Tensor& features);

Tensor pca2_project(const Pca2& pca, const Tensor& features);  // N x 2

}  // namespace augdiff
