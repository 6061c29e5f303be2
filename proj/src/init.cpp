#include "gti/init.hpp"

#include "gti/kernels.hpp"
#include "gti/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace gti::init {

Kind kind_from_string(const std::string& s) {
    if (s == "random") return Kind::kRandom;
    if (s == "mean") return Kind::kMean;
    if (s == "gti") return Kind::kGti;
    throw std::invalid_argument("unknown init strategy: " + s);
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::kRandom: return "random";
        case Kind::kMean: return "mean";
        case Kind::kGti: return "gti";
    }
    return "?";
}

std::vector<double> mean_init(const DenseMatrix& e_text) {
    if (e_text.rows == 0) throw std::invalid_argument("mean_init: empty vocabulary");
    std::vector<double> mean(e_text.cols, 0.0);
    for (std::size_t r = 0; r < e_text.rows; ++r)
        kernels::axpy(1.0, e_text.row(r), mean.data(), e_text.cols);
    kernels::scale(mean.data(), e_text.cols, 1.0 / static_cast<double>(e_text.rows));
    return mean;
}

DenseMatrix random_init(std::size_t dim, std::size_t count, double target_row_norm,
                        std::uint64_t seed) {
    DenseMatrix rows(count, dim);
    Rng rng = Rng(seed).derive("extend-random");
    rng.fill_gaussian(rows.values.data(), rows.values.size(),
                      target_row_norm / std::sqrt(static_cast<double>(dim)));
    return rows;
}

GroundRecord ground(ModelParams& params, std::span<const TokenSequence> corpus,
                    const GroundConfig& cfg) {
    if (!params.vocab.extended()) throw std::invalid_argument("ground: vocabulary not extended");
    for (const auto& seq : corpus)
        for (int t : seq.tokens)
            if (t < 0 || t >= static_cast<int>(params.p.vocab_size))
                throw std::invalid_argument("ground: corpus references unknown token id " +
                                            std::to_string(t));

    GroundRecord rec;
    rec.frozen_before = checksum_frozen_partition(params);

    const std::size_t D = params.p.cfg.d_model;
    Rng stream = Rng(cfg.seed).derive("ground");
    std::vector<TokenSequence> batch;
    for (std::size_t step = 0; step < cfg.steps && !corpus.empty(); ++step) {
        Rng r = stream.derive(step);
        batch.clear();
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(corpus[r.next_below(corpus.size())]);

        Gradients grad = backward(params, batch);
        rec.step_loss.push_back(grad.loss);

        for (std::size_t row = 0; row < params.p.vocab_size; ++row) {
            if (!params.new_row_mask[row]) continue;
            kernels::axpy(-cfg.lr, grad.g.embed.data() + row * D,
                          params.p.embed.data() + row * D, D);
        }
        if (cfg.per_step_freeze_check &&
            checksum_frozen_partition(params) != rec.frozen_before)
            rec.freeze_ok = false;
    }

    rec.frozen_after = checksum_frozen_partition(params);
    rec.freeze_ok = rec.freeze_ok && rec.frozen_after == rec.frozen_before;
    return rec;
}

} // namespace gti::init
