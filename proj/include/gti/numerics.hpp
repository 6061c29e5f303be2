#pragma once

#include "gti/matrix.hpp"
#include "gti/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gti {

// Non-increasing, non-negative singular values.
struct SingularSpectrum {
    std::vector<double> values;
};

// All min(rows, cols) singular values, descending. One-sided Jacobi; only the
// values are part of the contract. Throws std::invalid_argument on empty or
// non-finite input.
SingularSpectrum svd_values(const DenseMatrix& m);

struct KMeansResult {
    DenseMatrix centroids;               // k x dim
    std::vector<std::size_t> assignments; // per point, nearest centroid
    double inertia = 0.0;
    std::vector<double> inertia_history; // per Lloyd iteration
};

// Lloyd iteration with k-means++ style seeding; deterministic given seed.
// Empty clusters are re-seeded from the point farthest from its centroid.
// Throws std::invalid_argument if k == 0 or k > number of points.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters = 100);

struct Cosine {
    double value = 0.0;
    bool degenerate = false; // a zero-norm input; value reported as 0
};

Cosine cosine(std::span<const double> u, std::span<const double> v);

// FNV-1a over raw bytes; used for freeze-contract and reproducibility checks.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(std::span<const double> xs, std::uint64_t h = 0xcbf29ce484222325ull);

} // namespace gti
