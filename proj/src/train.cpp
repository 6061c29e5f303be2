#include "gti/train.hpp"

#include "gti/kernels.hpp"
#include "gti/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gti::train {

std::string to_string(Phase p) {
    switch (p) {
        case Phase::kPretrain: return "pretrain";
        case Phase::kGround: return "ground";
        case Phase::kUnfreezeGround: return "unfreeze_ground";
        case Phase::kSft: return "sft";
    }
    return "?";
}

RunRecord run_phase(ModelParams& params, std::span<const TokenSequence> corpus,
                    const TrainConfig& cfg) {
    RunRecord rec;
    rec.phase = to_string(cfg.phase);

    if (cfg.phase == Phase::kGround) {
        init::GroundConfig gc;
        gc.steps = cfg.steps;
        gc.batch = cfg.batch;
        gc.lr = cfg.lr;
        gc.seed = cfg.seed;
        gc.per_step_freeze_check = cfg.per_step_freeze_check;
        init::GroundRecord gr = init::ground(params, corpus, gc);
        rec.step_loss = std::move(gr.step_loss);
        rec.frozen_before = gr.frozen_before;
        rec.frozen_after = gr.frozen_after;
        rec.freeze_ok = gr.freeze_ok;
        return rec;
    }

    // Momentum buffers shaped like the parameters.
    ParamSet vel;
    vel.allocate(params.p.cfg, params.p.vocab_size);

    Rng stream = Rng(cfg.seed).derive(rec.phase);
    std::vector<TokenSequence> batch;
    for (std::size_t step = 0; step < cfg.steps && !corpus.empty(); ++step) {
        Rng r = stream.derive(step);
        batch.clear();
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(corpus[r.next_below(corpus.size())]);

        Gradients grad;
        try {
            grad = backward(params, batch);
        } catch (const std::runtime_error&) {
            rec.aborted = true;
            break;
        }
        rec.step_loss.push_back(grad.loss);

        double norm_sq = 0.0;
        grad.g.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
            norm_sq += kernels::sumsq(t.data(), t.size());
        });
        double norm = std::sqrt(norm_sq);
        double gscale = (cfg.clip > 0.0 && norm > cfg.clip) ? cfg.clip / norm : 1.0;

        // Fixed tensor order keeps runs bit-reproducible.
        auto vit = [&](std::vector<double>& vbuf, const std::vector<double>& gbuf,
                       std::vector<double>& pbuf) {
            for (std::size_t i = 0; i < vbuf.size(); ++i) {
                vbuf[i] = cfg.momentum * vbuf[i] + gscale * gbuf[i];
                pbuf[i] -= cfg.lr * vbuf[i];
            }
        };
        vit(vel.embed, grad.g.embed, params.p.embed);
        vit(vel.pos, grad.g.pos, params.p.pos);
        for (std::size_t l = 0; l < vel.layers.size(); ++l) {
            auto& v = vel.layers[l];
            auto& g = grad.g.layers[l];
            auto& p = params.p.layers[l];
            vit(v.ln1_g, g.ln1_g, p.ln1_g);
            vit(v.ln1_b, g.ln1_b, p.ln1_b);
            vit(v.wq, g.wq, p.wq);
            vit(v.bq, g.bq, p.bq);
            vit(v.wk, g.wk, p.wk);
            vit(v.bk, g.bk, p.bk);
            vit(v.wv, g.wv, p.wv);
            vit(v.bv, g.bv, p.bv);
            vit(v.wo, g.wo, p.wo);
            vit(v.bo, g.bo, p.bo);
            vit(v.ln2_g, g.ln2_g, p.ln2_g);
            vit(v.ln2_b, g.ln2_b, p.ln2_b);
            vit(v.w1, g.w1, p.w1);
            vit(v.b1, g.b1, p.b1);
            vit(v.w2, g.w2, p.w2);
            vit(v.b2, g.b2, p.b2);
        }
        vit(vel.lnf_g, grad.g.lnf_g, params.p.lnf_g);
        vit(vel.lnf_b, grad.g.lnf_b, params.p.lnf_b);
    }
    return rec;
}

void save_run_record(const RunRecord& rec, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_run_record: cannot open " + path);
    f << "gti-runrecord v1 phase=" << rec.phase << " steps=" << rec.step_loss.size()
      << " frozen_before=" << rec.frozen_before << " frozen_after=" << rec.frozen_after
      << " freeze_ok=" << (rec.freeze_ok ? 1 : 0) << " aborted=" << (rec.aborted ? 1 : 0) << '\n';
    char buf[64];
    for (std::size_t i = 0; i < rec.step_loss.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", rec.step_loss[i]);
        f << i << ' ' << buf << '\n';
    }
    if (!f) throw std::runtime_error("save_run_record: write failed: " + path);
}

} // namespace gti::train
