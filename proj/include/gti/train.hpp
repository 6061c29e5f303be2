#pragma once

#include "gti/init.hpp"
#include "gti/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gti::train {

enum class Phase { kPretrain, kGround, kUnfreezeGround, kSft };

std::string to_string(Phase p);

struct TrainConfig {
    Phase phase = Phase::kPretrain;
    std::size_t steps = 0;
    std::size_t batch = 16;
    double lr = 0.1;
    std::uint64_t seed = 0;
    double momentum = 0.9;
    double clip = 1.0;
    bool per_step_freeze_check = false; // slow-test flag, ground phase only
};

struct RunRecord {
    std::string phase;
    std::vector<double> step_loss;
    std::uint64_t frozen_before = 0; // frozen-partition checksum (ground phase)
    std::uint64_t frozen_after = 0;
    bool freeze_ok = true;
    bool aborted = false; // divergence (non-finite loss)
};

// Executes one phase in place. The ground phase forces the new-embeddings-only
// scope (plain masked SGD); every other phase trains all parameters with
// momentum SGD and global gradient-norm clipping.
RunRecord run_phase(ModelParams& params, std::span<const TokenSequence> corpus,
                    const TrainConfig& cfg);

void save_run_record(const RunRecord& rec, const std::string& path);

} // namespace gti::train
