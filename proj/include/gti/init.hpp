#pragma once

#include "gti/matrix.hpp"
#include "gti/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gti::init {

enum class Kind { kRandom, kMean, kGti };

Kind kind_from_string(const std::string& s);
std::string to_string(Kind k);

// Eq-style mean of the existing vocabulary rows; every new row gets a copy.
std::vector<double> mean_init(const DenseMatrix& e_text);

// i.i.d. Gaussian rows whose expected norm matches target_row_norm.
DenseMatrix random_init(std::size_t dim, std::size_t count, double target_row_norm,
                        std::uint64_t seed);

struct GroundConfig {
    std::size_t steps = 500;
    std::size_t batch = 16;
    double lr = 0.5;
    std::uint64_t seed = 0;
    bool per_step_freeze_check = false; // slow-test flag
};

struct GroundRecord {
    std::vector<double> step_loss;
    std::uint64_t frozen_before = 0;
    std::uint64_t frozen_after = 0;
    bool freeze_ok = true;
};

// Masked plain-SGD grounding: E <- E - lr * (dE ⊙ M), M true only on the new
// rows; every other tensor (and every text row) is untouched. Throws if the
// vocabulary has not been extended or the corpus references unknown tokens.
GroundRecord ground(ModelParams& params, std::span<const TokenSequence> corpus,
                    const GroundConfig& cfg);

} // namespace gti::init
