#pragma once

#include "gti/matrix.hpp"
#include "gti/rng.hpp"
#include "gti/vocab.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gti {

struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t d_model = 32;
    std::size_t d_ff = 128; // 4 * d_model
    std::size_t context = 192;
};

struct LayerParams {
    std::vector<double> ln1_g, ln1_b;
    std::vector<double> wq, wk, wv, wo; // d_model x d_model, row-major (out = x W)
    std::vector<double> bq, bk, bv, bo;
    std::vector<double> ln2_g, ln2_b;
    std::vector<double> w1, b1; // d_model x d_ff
    std::vector<double> w2, b2; // d_ff x d_model
};

// The trainable tensors, shared between parameters and gradients.
struct ParamSet {
    ModelConfig cfg;
    std::size_t vocab_size = 0;
    std::vector<double> embed; // vocab_size x d_model; tied with the output head
    std::vector<double> pos;   // context x d_model
    std::vector<LayerParams> layers;
    std::vector<double> lnf_g, lnf_b;

    void allocate(const ModelConfig& c, std::size_t vocab);
    void zero();
    std::size_t n_params() const;

    // Deterministic tensor order; used for SGD, serialization, checksums and
    // the finite-difference harness.
    void for_each_tensor(const std::function<void(const std::string&, std::vector<double>&)>& fn);
    void for_each_tensor(const std::function<void(const std::string&, const std::vector<double>&)>& fn) const;
};

struct ModelParams {
    ParamSet p;
    Vocabulary vocab;
    std::vector<std::uint8_t> new_row_mask; // per vocab row; set by extend_vocabulary
    std::uint64_t seed_lineage = 0;
};

// Token ids plus a mask marking which positions are prediction targets.
// Position t-1 predicts token t; target_mask[t] = 1 means token t contributes.
struct TokenSequence {
    std::vector<int> tokens;
    std::vector<std::uint8_t> target_mask;
};

struct ForwardResult {
    double loss = 0.0;          // mean NLL over target positions
    std::size_t n_targets = 0;
    bool degenerate = false;    // no target positions in the batch
    // per sequence, per target position (in token order): log P(token)
    std::vector<std::vector<double>> target_logprobs;
};

struct ForwardOptions {
    bool want_target_logprobs = false;
};

ModelParams make_model(const ModelConfig& cfg, std::uint64_t seed);

ForwardResult forward(const ModelParams& params, std::span<const TokenSequence> batch,
                      const ForwardOptions& opts = {});

// Log-probabilities over the whole vocabulary at the last position.
std::vector<double> next_token_logprobs(const ModelParams& params, std::span<const int> tokens);

struct Gradients {
    ParamSet g;
    double loss = 0.0;
    std::size_t n_targets = 0;
};

// Exact reverse-mode gradients of the mean NLL. The tied embedding collects
// both the input-lookup and the output-projection contributions.
Gradients backward(const ModelParams& params, std::span<const TokenSequence> batch);

enum class InitKind { kRandom, kMean };

// Appends L*K SID rows plus suffix rows to E, bit-preserving everything else.
// Throws if the vocabulary was already extended.
void extend_vocabulary(ModelParams& params, std::size_t levels, std::size_t entries,
                       std::size_t suffixes, InitKind init, std::uint64_t seed);

// Checksums for the freeze contract.
std::uint64_t checksum_all(const ModelParams& params);
std::uint64_t checksum_frozen_partition(const ModelParams& params); // text rows + non-embedding
std::uint64_t checksum_new_rows(const ModelParams& params);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace gti
