#include "gti/model.hpp"

#include "gti/kernels.hpp"
#include "gti/numerics.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace gti {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = g * xhat + b with xhat = (x - mean) / sqrt(var + eps)
void layernorm_fwd(const double* x, const double* g, const double* b, std::size_t d,
                   double* xhat, double* y, double& invstd) {
    double mean = kernels::sum(x, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double c = x[i] - mean;
        var += c * c;
    }
    var /= static_cast<double>(d);
    invstd = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t i = 0; i < d; ++i) {
        xhat[i] = (x[i] - mean) * invstd;
        y[i] = g[i] * xhat[i] + b[i];
    }
}

// dx += backprop of dy through the norm; dg/db accumulate.
void layernorm_bwd(const double* dy, const double* xhat, double invstd, const double* g,
                   std::size_t d, double* dx, double* dg, double* db) {
    double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double t = dy[i] * g[i];
        sum_dyg += t;
        sum_dyg_xhat += t * xhat[i];
        dg[i] += dy[i] * xhat[i];
        db[i] += dy[i];
    }
    double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) {
        double t = dy[i] * g[i];
        dx[i] += invstd * (t - inv_d * sum_dyg - xhat[i] * inv_d * sum_dyg_xhat);
    }
}

// W is out-major: y[j] = b[j] + W_row(j) . x
void linear_fwd(const double* w, const double* b, const double* x, double* y,
                std::size_t d_in, std::size_t d_out) {
    for (std::size_t j = 0; j < d_out; ++j) y[j] = b[j] + kernels::dot(w + j * d_in, x, d_in);
}

// Accumulates dW, dB and dx (dx may be null).
void linear_bwd(const double* w, const double* x, const double* dy, double* dw, double* db,
                double* dx, std::size_t d_in, std::size_t d_out) {
    for (std::size_t j = 0; j < d_out; ++j) {
        double g = dy[j];
        if (g == 0.0) continue;
        kernels::axpy(g, x, dw + j * d_in, d_in);
        db[j] += g;
        if (dx) kernels::axpy(g, w + j * d_in, dx, d_in);
    }
}

struct LayerCache {
    std::vector<double> xin;          // T x D, input to the layer
    std::vector<double> xhat1, a;     // T x D
    std::vector<double> invstd1;      // T
    std::vector<double> q, k, v;      // T x D
    std::vector<double> att;          // H x T x T (causal rows)
    std::vector<double> ctx;          // T x D
    std::vector<double> hmid;         // T x D, after attention residual
    std::vector<double> xhat2, a2;    // T x D
    std::vector<double> invstd2;      // T
    std::vector<double> f1, f1g;      // T x F
};

struct SeqCache {
    std::size_t T = 0;
    std::vector<LayerCache> layers;
    std::vector<double> xhatf, hf; // T x D
    std::vector<double> invstdf;   // T
    std::vector<double> hlast;     // T x D, input to the final norm
};

void run_transformer(const ModelParams& mp, std::span<const int> toks, SeqCache& c) {
    const auto& cfg = mp.p.cfg;
    const std::size_t T = toks.size();
    const std::size_t D = cfg.d_model, F = cfg.d_ff, H = cfg.n_heads, dh = D / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (T > cfg.context) throw std::invalid_argument("forward: sequence exceeds context length");
    for (int t : toks)
        if (t < 0 || t >= static_cast<int>(mp.p.vocab_size))
            throw std::invalid_argument("forward: token id out of vocabulary");

    c.T = T;
    c.layers.resize(cfg.n_layers);

    std::vector<double> h(T * D);
    for (std::size_t t = 0; t < T; ++t) {
        const double* e = mp.p.embed.data() + static_cast<std::size_t>(toks[t]) * D;
        const double* p = mp.p.pos.data() + t * D;
        for (std::size_t i = 0; i < D; ++i) h[t * D + i] = e[i] + p[i];
    }

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& lp = mp.p.layers[l];
        LayerCache& lc = c.layers[l];
        lc.xin = h;
        lc.xhat1.resize(T * D);
        lc.a.resize(T * D);
        lc.invstd1.resize(T);
        lc.q.resize(T * D);
        lc.k.resize(T * D);
        lc.v.resize(T * D);
        lc.att.assign(H * T * T, 0.0);
        lc.ctx.assign(T * D, 0.0);

        for (std::size_t t = 0; t < T; ++t) {
            layernorm_fwd(&lc.xin[t * D], lp.ln1_g.data(), lp.ln1_b.data(), D, &lc.xhat1[t * D],
                          &lc.a[t * D], lc.invstd1[t]);
            linear_fwd(lp.wq.data(), lp.bq.data(), &lc.a[t * D], &lc.q[t * D], D, D);
            linear_fwd(lp.wk.data(), lp.bk.data(), &lc.a[t * D], &lc.k[t * D], D, D);
            linear_fwd(lp.wv.data(), lp.bv.data(), &lc.a[t * D], &lc.v[t * D], D, D);
        }

        for (std::size_t hd = 0; hd < H; ++hd) {
            const std::size_t off = hd * dh;
            for (std::size_t t = 0; t < T; ++t) {
                double* row = &lc.att[(hd * T + t) * T];
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t s = 0; s <= t; ++s) {
                    row[s] = scale * kernels::dot(&lc.q[t * D + off], &lc.k[s * D + off], dh);
                    mx = std::max(mx, row[s]);
                }
                double z = 0.0;
                for (std::size_t s = 0; s <= t; ++s) {
                    row[s] = std::exp(row[s] - mx);
                    z += row[s];
                }
                double inv_z = 1.0 / z;
                double* ctx = &lc.ctx[t * D + off];
                for (std::size_t s = 0; s <= t; ++s) {
                    row[s] *= inv_z;
                    kernels::axpy(row[s], &lc.v[s * D + off], ctx, dh);
                }
            }
        }

        lc.hmid.resize(T * D);
        std::vector<double> o(D);
        for (std::size_t t = 0; t < T; ++t) {
            linear_fwd(lp.wo.data(), lp.bo.data(), &lc.ctx[t * D], o.data(), D, D);
            for (std::size_t i = 0; i < D; ++i) lc.hmid[t * D + i] = lc.xin[t * D + i] + o[i];
        }

        lc.xhat2.resize(T * D);
        lc.a2.resize(T * D);
        lc.invstd2.resize(T);
        lc.f1.resize(T * F);
        lc.f1g.resize(T * F);
        std::vector<double> f2(D);
        for (std::size_t t = 0; t < T; ++t) {
            layernorm_fwd(&lc.hmid[t * D], lp.ln2_g.data(), lp.ln2_b.data(), D, &lc.xhat2[t * D],
                          &lc.a2[t * D], lc.invstd2[t]);
            linear_fwd(lp.w1.data(), lp.b1.data(), &lc.a2[t * D], &lc.f1[t * F], D, F);
            for (std::size_t j = 0; j < F; ++j) lc.f1g[t * F + j] = gelu(lc.f1[t * F + j]);
            linear_fwd(lp.w2.data(), lp.b2.data(), &lc.f1g[t * F], f2.data(), F, D);
            for (std::size_t i = 0; i < D; ++i) h[t * D + i] = lc.hmid[t * D + i] + f2[i];
        }
    }

    c.hlast = h;
    c.xhatf.resize(T * D);
    c.hf.resize(T * D);
    c.invstdf.resize(T);
    for (std::size_t t = 0; t < T; ++t)
        layernorm_fwd(&c.hlast[t * D], mp.p.lnf_g.data(), mp.p.lnf_b.data(), D, &c.xhatf[t * D],
                      &c.hf[t * D], c.invstdf[t]);
}

// log-softmax of the tied-head logits at one position
void position_logprobs(const ModelParams& mp, const double* hf, std::vector<double>& out) {
    const std::size_t V = mp.p.vocab_size, D = mp.p.cfg.d_model;
    out.resize(V);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) {
        out[v] = kernels::dot(mp.p.embed.data() + v * D, hf, D);
        mx = std::max(mx, out[v]);
    }
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += std::exp(out[v] - mx);
    double lz = mx + std::log(z);
    for (std::size_t v = 0; v < V; ++v) out[v] -= lz;
}

void validate_sequence(const TokenSequence& s) {
    if (s.target_mask.size() != s.tokens.size())
        throw std::invalid_argument("TokenSequence: mask and tokens must have equal length");
    if (!s.target_mask.empty() && s.target_mask[0])
        throw std::invalid_argument("TokenSequence: position 0 has no predecessor to predict it");
}

} // namespace

void ParamSet::allocate(const ModelConfig& c, std::size_t vocab) {
    cfg = c;
    vocab_size = vocab;
    embed.assign(vocab * c.d_model, 0.0);
    pos.assign(c.context * c.d_model, 0.0);
    layers.assign(c.n_layers, {});
    for (auto& l : layers) {
        l.ln1_g.assign(c.d_model, 0.0);
        l.ln1_b.assign(c.d_model, 0.0);
        l.wq.assign(c.d_model * c.d_model, 0.0);
        l.wk.assign(c.d_model * c.d_model, 0.0);
        l.wv.assign(c.d_model * c.d_model, 0.0);
        l.wo.assign(c.d_model * c.d_model, 0.0);
        l.bq.assign(c.d_model, 0.0);
        l.bk.assign(c.d_model, 0.0);
        l.bv.assign(c.d_model, 0.0);
        l.bo.assign(c.d_model, 0.0);
        l.ln2_g.assign(c.d_model, 0.0);
        l.ln2_b.assign(c.d_model, 0.0);
        l.w1.assign(c.d_ff * c.d_model, 0.0);
        l.b1.assign(c.d_ff, 0.0);
        l.w2.assign(c.d_model * c.d_ff, 0.0);
        l.b2.assign(c.d_model, 0.0);
    }
    lnf_g.assign(c.d_model, 0.0);
    lnf_b.assign(c.d_model, 0.0);
}

void ParamSet::zero() {
    for_each_tensor([](const std::string&, std::vector<double>& t) {
        std::fill(t.begin(), t.end(), 0.0);
    });
}

std::size_t ParamSet::n_params() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, const std::vector<double>& t) { n += t.size(); });
    return n;
}

void ParamSet::for_each_tensor(const std::function<void(const std::string&, std::vector<double>&)>& fn) {
    fn("embed", embed);
    fn("pos", pos);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& lp = layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        fn(p + "ln1_g", lp.ln1_g);
        fn(p + "ln1_b", lp.ln1_b);
        fn(p + "wq", lp.wq);
        fn(p + "bq", lp.bq);
        fn(p + "wk", lp.wk);
        fn(p + "bk", lp.bk);
        fn(p + "wv", lp.wv);
        fn(p + "bv", lp.bv);
        fn(p + "wo", lp.wo);
        fn(p + "bo", lp.bo);
        fn(p + "ln2_g", lp.ln2_g);
        fn(p + "ln2_b", lp.ln2_b);
        fn(p + "w1", lp.w1);
        fn(p + "b1", lp.b1);
        fn(p + "w2", lp.w2);
        fn(p + "b2", lp.b2);
    }
    fn("lnf_g", lnf_g);
    fn("lnf_b", lnf_b);
}

void ParamSet::for_each_tensor(
    const std::function<void(const std::string&, const std::vector<double>&)>& fn) const {
    const_cast<ParamSet*>(this)->for_each_tensor(
        [&](const std::string& name, std::vector<double>& t) { fn(name, t); });
}

ModelParams make_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.d_model % cfg.n_heads != 0)
        throw std::invalid_argument("make_model: d_model must divide into heads");
    ModelParams mp;
    mp.seed_lineage = seed;
    mp.p.allocate(cfg, mp.vocab.size());
    mp.new_row_mask.assign(mp.p.vocab_size, 0);

    Rng rng = Rng(seed).derive("model-init");
    const double emb_std = 0.1;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    rng.derive("embed").fill_gaussian(mp.p.embed.data(), mp.p.embed.size(), emb_std);
    rng.derive("pos").fill_gaussian(mp.p.pos.data(), mp.p.pos.size(), 0.02);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        auto& lp = mp.p.layers[l];
        Rng lr = rng.derive("layer").derive(l);
        std::fill(lp.ln1_g.begin(), lp.ln1_g.end(), 1.0);
        std::fill(lp.ln2_g.begin(), lp.ln2_g.end(), 1.0);
        lr.derive("wq").fill_gaussian(lp.wq.data(), lp.wq.size(), w_std);
        lr.derive("wk").fill_gaussian(lp.wk.data(), lp.wk.size(), w_std);
        lr.derive("wv").fill_gaussian(lp.wv.data(), lp.wv.size(), w_std);
        lr.derive("wo").fill_gaussian(lp.wo.data(), lp.wo.size(), w_std);
        lr.derive("w1").fill_gaussian(lp.w1.data(), lp.w1.size(), w_std);
        lr.derive("w2").fill_gaussian(lp.w2.data(), lp.w2.size(),
                                      1.0 / std::sqrt(static_cast<double>(cfg.d_ff)));
    }
    std::fill(mp.p.lnf_g.begin(), mp.p.lnf_g.end(), 1.0);
    return mp;
}

ForwardResult forward(const ModelParams& params, std::span<const TokenSequence> batch,
                      const ForwardOptions& opts) {
    ForwardResult res;
    if (opts.want_target_logprobs) res.target_logprobs.resize(batch.size());

    double nll = 0.0;
    std::size_t n_targets = 0;
    SeqCache cache;
    std::vector<double> lp;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const TokenSequence& seq = batch[b];
        validate_sequence(seq);
        if (seq.tokens.empty()) continue;
        run_transformer(params, seq.tokens, cache);
        const std::size_t D = params.p.cfg.d_model;
        for (std::size_t t = 1; t < seq.tokens.size(); ++t) {
            if (!seq.target_mask[t]) continue;
            position_logprobs(params, &cache.hf[(t - 1) * D], lp);
            double l = lp[static_cast<std::size_t>(seq.tokens[t])];
            nll -= l;
            ++n_targets;
            if (opts.want_target_logprobs) res.target_logprobs[b].push_back(l);
        }
    }
    res.n_targets = n_targets;
    if (n_targets == 0) {
        res.loss = 0.0;
        res.degenerate = true;
    } else {
        res.loss = nll / static_cast<double>(n_targets);
    }
    if (!std::isfinite(res.loss)) throw std::runtime_error("forward: non-finite loss");
    return res;
}

std::vector<double> next_token_logprobs(const ModelParams& params, std::span<const int> tokens) {
    if (tokens.empty()) throw std::invalid_argument("next_token_logprobs: empty sequence");
    SeqCache cache;
    run_transformer(params, tokens, cache);
    std::vector<double> lp;
    position_logprobs(params, &cache.hf[(tokens.size() - 1) * params.p.cfg.d_model], lp);
    return lp;
}

Gradients backward(const ModelParams& params, std::span<const TokenSequence> batch) {
    const auto& cfg = params.p.cfg;
    const std::size_t D = cfg.d_model, F = cfg.d_ff, H = cfg.n_heads, dhead = D / H;
    const std::size_t V = params.p.vocab_size;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dhead));

    Gradients out;
    out.g.allocate(cfg, V);

    // First pass to learn the normalizer (targets are counted over the batch).
    std::size_t n_targets = 0;
    for (const auto& seq : batch) {
        validate_sequence(seq);
        for (std::size_t t = 1; t < seq.tokens.size(); ++t) n_targets += seq.target_mask[t] ? 1 : 0;
    }
    out.n_targets = n_targets;
    if (n_targets == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n_targets);

    SeqCache c;
    std::vector<double> probs;
    double nll = 0.0;
    for (const auto& seq : batch) {
        if (seq.tokens.empty()) continue;
        const std::size_t T = seq.tokens.size();
        run_transformer(params, seq.tokens, c);

        // d loss / d hf, via the tied output head; only predecessor positions
        // of target tokens carry gradient.
        std::vector<double> dhf(T * D, 0.0);
        for (std::size_t t = 1; t < T; ++t) {
            if (!seq.target_mask[t]) continue;
            const double* hf = &c.hf[(t - 1) * D];
            position_logprobs(params, hf, probs);
            nll -= probs[static_cast<std::size_t>(seq.tokens[t])];
            for (std::size_t v = 0; v < V; ++v) {
                double dlogit = std::exp(probs[v]) * inv_n;
                if (v == static_cast<std::size_t>(seq.tokens[t])) dlogit -= inv_n;
                // output-head half of the tied embedding gradient
                kernels::axpy(dlogit, hf, out.g.embed.data() + v * D, D);
                kernels::axpy(dlogit, params.p.embed.data() + v * D, &dhf[(t - 1) * D], D);
            }
        }

        // final norm
        std::vector<double> dh(T * D, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            layernorm_bwd(&dhf[t * D], &c.xhatf[t * D], c.invstdf[t], params.p.lnf_g.data(), D,
                          &dh[t * D], out.g.lnf_g.data(), out.g.lnf_b.data());

        for (std::size_t l = cfg.n_layers; l-- > 0;) {
            const LayerParams& lp = params.p.layers[l];
            LayerParams& gl = out.g.layers[l];
            const LayerCache& lc = c.layers[l];

            // FF block: dh is the gradient at the layer output.
            std::vector<double> dhmid = dh; // residual branch
            std::vector<double> df1(F), df1g(F), da2(D);
            for (std::size_t t = 0; t < T; ++t) {
                const double* df2 = &dh[t * D];
                std::fill(df1g.begin(), df1g.end(), 0.0);
                linear_bwd(lp.w2.data(), &lc.f1g[t * F], df2, gl.w2.data(), gl.b2.data(),
                           df1g.data(), F, D);
                for (std::size_t j = 0; j < F; ++j) df1[j] = df1g[j] * gelu_grad(lc.f1[t * F + j]);
                std::fill(da2.begin(), da2.end(), 0.0);
                linear_bwd(lp.w1.data(), &lc.a2[t * D], df1.data(), gl.w1.data(), gl.b1.data(),
                           da2.data(), D, F);
                layernorm_bwd(da2.data(), &lc.xhat2[t * D], lc.invstd2[t], lp.ln2_g.data(), D,
                              &dhmid[t * D], gl.ln2_g.data(), gl.ln2_b.data());
            }

            // Attention block.
            std::vector<double> dxin = dhmid; // residual branch
            std::vector<double> dctx(T * D, 0.0);
            for (std::size_t t = 0; t < T; ++t)
                linear_bwd(lp.wo.data(), &lc.ctx[t * D], &dhmid[t * D], gl.wo.data(), gl.bo.data(),
                           &dctx[t * D], D, D);

            std::vector<double> dq(T * D, 0.0), dk(T * D, 0.0), dv(T * D, 0.0);
            std::vector<double> datt(T), dscore(T);
            for (std::size_t hd = 0; hd < H; ++hd) {
                const std::size_t off = hd * dhead;
                for (std::size_t t = 0; t < T; ++t) {
                    const double* att = &lc.att[(hd * T + t) * T];
                    const double* dctx_h = &dctx[t * D + off];
                    double dot_sum = 0.0;
                    for (std::size_t s = 0; s <= t; ++s) {
                        datt[s] = kernels::dot(dctx_h, &lc.v[s * D + off], dhead);
                        kernels::axpy(att[s], dctx_h, &dv[s * D + off], dhead);
                        dot_sum += att[s] * datt[s];
                    }
                    for (std::size_t s = 0; s <= t; ++s) {
                        dscore[s] = att[s] * (datt[s] - dot_sum) * scale;
                        kernels::axpy(dscore[s], &lc.k[s * D + off], &dq[t * D + off], dhead);
                        kernels::axpy(dscore[s], &lc.q[t * D + off], &dk[s * D + off], dhead);
                    }
                }
            }

            std::vector<double> da(D);
            for (std::size_t t = 0; t < T; ++t) {
                std::fill(da.begin(), da.end(), 0.0);
                linear_bwd(lp.wq.data(), &lc.a[t * D], &dq[t * D], gl.wq.data(), gl.bq.data(),
                           da.data(), D, D);
                linear_bwd(lp.wk.data(), &lc.a[t * D], &dk[t * D], gl.wk.data(), gl.bk.data(),
                           da.data(), D, D);
                linear_bwd(lp.wv.data(), &lc.a[t * D], &dv[t * D], gl.wv.data(), gl.bv.data(),
                           da.data(), D, D);
                layernorm_bwd(da.data(), &lc.xhat1[t * D], lc.invstd1[t], lp.ln1_g.data(), D,
                              &dxin[t * D], gl.ln1_g.data(), gl.ln1_b.data());
            }
            dh = std::move(dxin);
        }

        // input-lookup half of the tied embedding gradient, plus positions
        for (std::size_t t = 0; t < T; ++t) {
            kernels::axpy(1.0, &dh[t * D],
                          out.g.embed.data() + static_cast<std::size_t>(seq.tokens[t]) * D, D);
            kernels::axpy(1.0, &dh[t * D], out.g.pos.data() + t * D, D);
        }
    }

    out.loss = nll * inv_n;
    if (!std::isfinite(out.loss)) throw std::runtime_error("backward: non-finite loss");
    return out;
}

void extend_vocabulary(ModelParams& params, std::size_t levels, std::size_t entries,
                       std::size_t suffixes, InitKind init, std::uint64_t seed) {
    if (params.vocab.extended()) throw std::invalid_argument("extend_vocabulary: already extended");
    const std::size_t D = params.p.cfg.d_model;
    const std::size_t n_text = params.vocab.text_size();
    params.vocab.extend(levels, entries, suffixes);
    const std::size_t n_new = params.vocab.size() - n_text;

    params.p.embed.resize(params.vocab.size() * D);
    params.p.vocab_size = params.vocab.size();
    params.new_row_mask.assign(params.vocab.size(), 0);
    for (std::size_t r = n_text; r < params.vocab.size(); ++r) params.new_row_mask[r] = 1;

    double* new_rows = params.p.embed.data() + n_text * D;
    if (init == InitKind::kMean) {
        std::vector<double> mean(D, 0.0);
        for (std::size_t r = 0; r < n_text; ++r)
            kernels::axpy(1.0, params.p.embed.data() + r * D, mean.data(), D);
        kernels::scale(mean.data(), D, 1.0 / static_cast<double>(n_text));
        for (std::size_t r = 0; r < n_new; ++r)
            std::copy(mean.begin(), mean.end(), new_rows + r * D);
    } else {
        double norm_sum = 0.0;
        for (std::size_t r = 0; r < n_text; ++r)
            norm_sum += std::sqrt(kernels::sumsq(params.p.embed.data() + r * D, D));
        double target = norm_sum / static_cast<double>(n_text);
        Rng rng = Rng(seed).derive("extend-random");
        rng.fill_gaussian(new_rows, n_new * D, target / std::sqrt(static_cast<double>(D)));
    }
}

namespace {

std::uint64_t checksum_rows(const ModelParams& mp, bool want_new, std::uint64_t h) {
    const std::size_t D = mp.p.cfg.d_model;
    for (std::size_t r = 0; r < mp.p.vocab_size; ++r) {
        bool is_new = !mp.new_row_mask.empty() && mp.new_row_mask[r];
        if (is_new == want_new) h = fnv1a(mp.p.embed.data() + r * D, D * sizeof(double), h);
    }
    return h;
}

} // namespace

std::uint64_t checksum_all(const ModelParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    params.p.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
        h = fnv1a(t.data(), t.size() * sizeof(double), h);
    });
    return h;
}

std::uint64_t checksum_frozen_partition(const ModelParams& params) {
    std::uint64_t h = checksum_rows(params, false, 0xcbf29ce484222325ull);
    params.p.for_each_tensor([&](const std::string& name, const std::vector<double>& t) {
        if (name != "embed") h = fnv1a(t.data(), t.size() * sizeof(double), h);
    });
    return h;
}

std::uint64_t checksum_new_rows(const ModelParams& params) {
    return checksum_rows(params, true, 0xcbf29ce484222325ull);
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const auto& c = params.p.cfg;
    f << "gti-checkpoint v1 " << c.n_layers << ' ' << c.n_heads << ' ' << c.d_model << ' ' << c.d_ff
      << ' ' << c.context << ' ' << params.p.vocab_size << ' ' << params.vocab.sid_levels() << ' '
      << params.vocab.sid_entries() << ' ' << params.vocab.suffix_count() << ' '
      << params.seed_lineage << '\n';
    params.p.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    f.write(reinterpret_cast<const char*>(params.new_row_mask.data()),
            static_cast<std::streamsize>(params.new_row_mask.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic, version;
    ModelConfig c;
    std::size_t vocab_size = 0, levels = 0, entries = 0, suffixes = 0;
    std::uint64_t lineage = 0;
    f >> magic >> version >> c.n_layers >> c.n_heads >> c.d_model >> c.d_ff >> c.context >>
        vocab_size >> levels >> entries >> suffixes >> lineage;
    if (magic != "gti-checkpoint" || version != "v1")
        throw std::runtime_error("load_checkpoint: bad header in " + path);
    f.get(); // newline

    ModelParams mp;
    mp.seed_lineage = lineage;
    if (levels > 0) mp.vocab.extend(levels, entries, suffixes);
    if (mp.vocab.size() != vocab_size)
        throw std::runtime_error("load_checkpoint: vocabulary size mismatch in " + path);
    mp.p.allocate(c, vocab_size);
    mp.p.for_each_tensor([&](const std::string&, std::vector<double>& t) {
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    mp.new_row_mask.assign(vocab_size, 0);
    f.read(reinterpret_cast<char*>(mp.new_row_mask.data()),
           static_cast<std::streamsize>(mp.new_row_mask.size()));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return mp;
}

} // namespace gti
