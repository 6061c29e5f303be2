#include "gti/numerics.hpp"

#include "gti/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace gti {

SingularSpectrum svd_values(const DenseMatrix& m) {
    if (m.empty()) throw std::invalid_argument("svd_values: empty matrix");
    if (!m.all_finite()) throw std::invalid_argument("svd_values: non-finite entries");

    // Work on a tall copy so the one-sided Jacobi rotates the smaller side.
    DenseMatrix a = m.rows >= m.cols ? m : m.transposed();
    const std::size_t n = a.rows, p = a.cols;

    // Column-major working copy for contiguous column access.
    std::vector<double> col(n * p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) col[j * n + i] = a.at(i, j);

    const double eps = 1e-14;
    const std::size_t max_sweeps = 60;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t q = 1; q < p; ++q) {
            for (std::size_t pi = 0; pi < q; ++pi) {
                double* cp = col.data() + pi * n;
                double* cq = col.data() + q * n;
                double alpha = kernels::sumsq(cp, n);
                double beta = kernels::sumsq(cq, n);
                double gamma = kernels::dot(cp, cq, n);
                if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    double vp = cp[i], vq = cq[i];
                    cp[i] = c * vp - s * vq;
                    cq[i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    SingularSpectrum spec;
    spec.values.resize(p);
    for (std::size_t j = 0; j < p; ++j)
        spec.values[j] = std::sqrt(kernels::sumsq(col.data() + j * n, n));
    std::sort(spec.values.begin(), spec.values.end(), std::greater<double>());
    return spec;
}

namespace {

std::size_t nearest_centroid(const DenseMatrix& centroids, const double* pt, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows; ++c) {
        double d = kernels::sqdist(centroids.row(c), pt, dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iters) {
    const std::size_t n = points.rows, dim = points.cols;
    if (k == 0 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= point count");

    Rng rng = Rng(seed).derive("kmeans");
    KMeansResult res;
    res.centroids = DenseMatrix(k, dim);
    res.assignments.assign(n, 0);

    // k-means++ seeding
    std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.next_below(n));
    std::copy_n(points.row(first), dim, res.centroids.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = kernels::sqdist(res.centroids.row(c - 1), points.row(i), dim);
            min_d[i] = std::min(min_d[i], d);
            total += min_d[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = rng.next_double() * total, acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.next_below(n));
        }
        std::copy_n(points.row(pick), dim, res.centroids.row(c));
    }

    std::vector<std::size_t> counts(k);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = iter == 0;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t a = nearest_centroid(res.centroids, points.row(i), dim);
            if (a != res.assignments[i]) changed = true;
            res.assignments[i] = a;
            inertia += kernels::sqdist(res.centroids.row(a), points.row(i), dim);
        }
        res.inertia = inertia;
        res.inertia_history.push_back(inertia);
        if (!changed) break;

        DenseMatrix next(k, dim);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            kernels::axpy(1.0, points.row(i), next.row(res.assignments[i]), dim);
            ++counts[res.assignments[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                kernels::scale(next.row(c), dim, 1.0 / static_cast<double>(counts[c]));
            } else {
                // Re-seed a dead centroid from the point farthest from its
                // current centroid.
                std::size_t far_i = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    double d = kernels::sqdist(res.centroids.row(res.assignments[i]), points.row(i), dim);
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                std::copy_n(points.row(far_i), dim, next.row(c));
            }
        }
        res.centroids = std::move(next);
    }

    // Final assignment against the centroids we return.
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        res.assignments[i] = nearest_centroid(res.centroids, points.row(i), dim);
        inertia += kernels::sqdist(res.centroids.row(res.assignments[i]), points.row(i), dim);
    }
    res.inertia = inertia;
    return res;
}

Cosine cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double nu = kernels::sumsq(u.data(), u.size());
    double nv = kernels::sumsq(v.data(), v.size());
    if (nu == 0.0 || nv == 0.0) return {0.0, true};
    // Bitwise-identical inputs have cosine exactly 1; skip the sqrt round-trip.
    if (std::equal(u.begin(), u.end(), v.begin())) return {1.0, false};
    return {kernels::dot(u.data(), v.data(), u.size()) / std::sqrt(nu * nv), false};
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a(std::span<const double> xs, std::uint64_t h) {
    return fnv1a(xs.data(), xs.size() * sizeof(double), h);
}

} // namespace gti
