#pragma once

#include "gti/matrix.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gti::rq {

// L levels x K entries x d_code residual codebooks.
struct CodebookStack {
    std::size_t levels = 0;
    std::size_t entries = 0;
    std::size_t dim = 0;
    std::vector<double> vectors; // levels * entries * dim, row-major

    const double* codeword(std::size_t level, std::size_t k) const {
        return vectors.data() + (level * entries + k) * dim;
    }
    double* codeword(std::size_t level, std::size_t k) {
        return vectors.data() + (level * entries + k) * dim;
    }
};

struct SemanticId {
    std::vector<std::uint32_t> codes; // length L, each in [0, K)
    bool operator==(const SemanticId&) const = default;
    auto operator<=>(const SemanticId&) const = default;
};

struct ItemEmbeddings {
    std::vector<std::string> ids;
    DenseMatrix z; // one row per item
};

// Residual k-means: level l is fit on the residuals left by levels < l.
// Deterministic given seed. Throws std::invalid_argument if items < K.
CodebookStack fit_codebooks(const DenseMatrix& items, std::size_t levels, std::size_t entries,
                            std::uint64_t seed);

struct QuantizeResult {
    SemanticId sid;
    std::vector<double> residual; // r_{L+1}
};

// Greedy per-level nearest codeword with residual subtraction; ties break
// toward the lowest index.
QuantizeResult quantize(std::span<const double> z, const CodebookStack& cb);

struct SidAssignment {
    SemanticId sid;
    std::int32_t suffix = -1; // disambiguation slot, -1 = none
    bool rerouted = false;    // final-level code changed from the greedy one
};

struct SinkhornParams {
    std::size_t iterations = 200;
    double epsilon = 0.05;
};

struct SidMap {
    std::vector<std::string> item_ids;
    std::vector<SidAssignment> assignments; // parallel to item_ids
    std::size_t greedy_collisions = 0;      // items whose greedy SID was shared
    std::size_t rerouted = 0;
    std::size_t suffixed = 0;
};

// Unique full identifier (sid, suffix) per item. Full-SID collisions are
// resolved by balanced transport over the final level; overflow beyond the K
// final-level slots gets a disambiguation suffix.
SidMap assign_all(const ItemEmbeddings& items, const CodebookStack& cb,
                  const SinkhornParams& sp = {});

// Alternate row/column normalization of exp(-cost/epsilon). Square input
// required; throws on epsilon <= 0 or non-finite cost.
DenseMatrix sinkhorn_balance(const DenseMatrix& cost, std::size_t iterations, double epsilon,
                             bool* converged = nullptr);

struct UtilizationReport {
    std::vector<std::vector<std::size_t>> usage; // per level, per code counts
    std::vector<double> perplexity;              // per level, exp of usage entropy
    std::size_t collision_count = 0;
    std::size_t rerouted = 0;
    std::size_t suffixed = 0;
};

UtilizationReport codebook_stats(const SidMap& map, std::size_t levels, std::size_t entries);

// Textual checkpoint, bit-exact round-trip (hex floats).
void save_codebooks(const CodebookStack& cb, std::uint64_t seed, const std::string& path);
CodebookStack load_codebooks(const std::string& path, std::uint64_t* seed_out = nullptr);

void save_sid_map(const SidMap& map, const std::string& path);
SidMap load_sid_map(const std::string& path);

} // namespace gti::rq
