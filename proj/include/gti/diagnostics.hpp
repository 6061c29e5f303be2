#pragma once

#include "gti/matrix.hpp"
#include "gti/model.hpp"
#include "gti/numerics.hpp"
#include "gti/rq.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gti::diag {

struct SimilarityMatrix {
    std::vector<std::string> labels;      // one per row/column
    std::size_t block_split = 0;          // rows [0, split) = subset A, rest = subset B
    DenseMatrix cos;                      // n x n pairwise cosine
    std::vector<std::uint8_t> degenerate; // per row: zero-norm flag
};

// Full pairwise cosine over the rows of `e` indexed by a then b. Labels are
// parallel to the concatenated index list; generated as "r<idx>" when omitted.
SimilarityMatrix cosine_block(const DenseMatrix& e, std::span<const std::size_t> a,
                              std::span<const std::size_t> b,
                              const std::vector<std::string>& labels = {});

// Entropy effective rank exp(-sum p_i ln p_i), p_i = s_i / sum s_j, computed
// over the numerically nonzero part of the spectrum (s_i > 1e-12 * s_1).
// Throws std::invalid_argument on an all-zero or empty spectrum.
double effective_rank(const SingularSpectrum& spectrum);

// Robustness companion: count of s_i > tau * s_1.
std::size_t thresholded_rank(const SingularSpectrum& spectrum, double tau = 0.01);

struct RsaScore {
    double pearson_r = 0.0;
    double spearman_rho = 0.0;
    std::size_t n_pairs = 0;
};

// Correlates the strict upper triangles of the two row-wise cosine matrices.
// Rows must be identity-aligned; ambient dimensions may differ. Throws on
// n < 3 or a row-count mismatch.
RsaScore rsa(const DenseMatrix& oracle_vectors, const DenseMatrix& learned_vectors);

struct DiagnosticsReport {
    SimilarityMatrix sid_block;   // all SID tokens
    SimilarityMatrix cross_block; // sampled text tokens + sampled SID tokens
    SingularSpectrum sid_spectrum;
    double sid_effective_rank = 0.0;
    std::size_t sid_thresholded_rank = 0;
    bool rsa_present = false;
    RsaScore rsa_score;
    std::vector<std::size_t> sampled_text_tokens;
    std::vector<std::size_t> sampled_sid_tokens;
};

// Geometry analyses of the extended embedding table. RSA oracle vectors are
// the per-token codebook vectors; pass nullptr to skip the RSA section.
// `sample_seed` drives the text/SID subsampling for the cross block.
DiagnosticsReport diagnose_checkpoint(const ModelParams& params, const rq::CodebookStack* codebooks,
                                      std::uint64_t sample_seed, std::size_t sample_size = 50);

// Deterministic SVG heatmap: diverging blue-white-red over [-1, 1], gray for
// degenerate rows, block separators, embedded numeric legend.
void render_heatmap(const SimilarityMatrix& m, const std::string& path);

void save_similarity_csv(const SimilarityMatrix& m, const std::string& path);

// Writes spectra.csv, erank.csv, rsa.csv, cos_sid.{csv,svg}, cos_cross.{csv,svg}
// and a versioned manifest with per-file checksums into `dir` (created if
// missing).
void write_report(const DiagnosticsReport& report, const std::string& dir);

} // namespace gti::diag
