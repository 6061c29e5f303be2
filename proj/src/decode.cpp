#include "gti/decode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gti::decode {

SidTrie SidTrie::build(const rq::SidMap& sids, const Vocabulary& vocab) {
    SidTrie trie;
    trie.nodes.emplace_back();
    for (std::size_t i = 0; i < sids.assignments.size(); ++i) {
        std::vector<int> path = corpus::sid_tokens_for(sids.assignments[i], vocab);
        path.push_back(Vocabulary::kEos);
        std::size_t node = 0;
        for (int tok : path) {
            auto it = trie.nodes[node].children.find(tok);
            if (it == trie.nodes[node].children.end()) {
                trie.nodes.emplace_back();
                it = trie.nodes[node].children.emplace(tok, trie.nodes.size() - 1).first;
            }
            node = it->second;
        }
        if (trie.nodes[node].item >= 0)
            throw std::invalid_argument("SidTrie: duplicate full identifier in SID map");
        trie.nodes[node].item = static_cast<std::int64_t>(i);
        ++trie.n_leaves;
    }
    return trie;
}

namespace {

struct Hyp {
    std::size_t node = 0;
    double logprob = 0.0;
    std::vector<int> tokens; // appended after the prompt
};

} // namespace

std::vector<Candidate> beam_decode(const ModelParams& params, const TokenSequence& prompt,
                                   const SidTrie& trie, std::size_t beam) {
    if (beam == 0) throw std::invalid_argument("beam_decode: beam must be >= 1");
    if (trie.n_leaves == 0) throw std::invalid_argument("beam_decode: empty trie");

    std::vector<Hyp> alive{Hyp{}};
    std::vector<Candidate> finished;
    std::vector<int> toks;

    while (!alive.empty()) {
        std::vector<Hyp> next;
        for (const Hyp& h : alive) {
            toks = prompt.tokens;
            toks.insert(toks.end(), h.tokens.begin(), h.tokens.end());
            std::vector<double> lp = next_token_logprobs(params, toks);
            for (const auto& [tok, child] : trie.nodes[h.node].children) {
                if (trie.nodes[child].item >= 0) {
                    finished.push_back({static_cast<std::size_t>(trie.nodes[child].item),
                                        h.logprob + lp[static_cast<std::size_t>(tok)]});
                } else {
                    Hyp n;
                    n.node = child;
                    n.logprob = h.logprob + lp[static_cast<std::size_t>(tok)];
                    n.tokens = h.tokens;
                    n.tokens.push_back(tok);
                    next.push_back(std::move(n));
                }
            }
        }
        // Deterministic prune: score descending, ties by token sequence.
        std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
            if (a.logprob != b.logprob) return a.logprob > b.logprob;
            return a.tokens < b.tokens;
        });
        if (next.size() > beam) next.resize(beam);
        alive = std::move(next);
    }

    std::sort(finished.begin(), finished.end(), [](const Candidate& a, const Candidate& b) {
        if (a.logprob != b.logprob) return a.logprob > b.logprob;
        return a.item < b.item;
    });
    if (finished.size() > beam) finished.resize(beam);
    return finished;
}

std::optional<PR> precision_recall_at_k(const std::vector<Candidate>& ranked,
                                        const std::set<std::size_t>& relevant, std::size_t k) {
    if (k == 0) throw std::invalid_argument("precision_recall_at_k: k must be >= 1");
    if (relevant.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i)
        hits += relevant.count(ranked[i].item);
    return PR{static_cast<double>(hits) / static_cast<double>(k),
              static_cast<double>(hits) / static_cast<double>(relevant.size())};
}

std::optional<double> ndcg_at_k(const std::vector<Candidate>& ranked,
                                const std::set<std::size_t>& relevant, std::size_t k) {
    if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (relevant.empty()) return std::nullopt;
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i)
        if (relevant.count(ranked[i].item)) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    double ideal = 0.0;
    for (std::size_t i = 0; i < relevant.size() && i < k; ++i)
        ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / ideal;
}

std::optional<double> relative_gain(double method_value, double baseline_value) {
    if (baseline_value == 0.0) return std::nullopt;
    return 100.0 * (method_value - baseline_value) / baseline_value;
}

std::vector<MetricRow> evaluate(const ModelParams& params,
                                const std::vector<corpus::EvalQuery>& queries, const SidTrie& trie,
                                const std::vector<std::size_t>& ks, std::size_t beam) {
    if (queries.empty()) throw std::invalid_argument("evaluate: empty test split");
    std::size_t max_k = 0;
    for (std::size_t k : ks) max_k = std::max(max_k, k);
    std::size_t width = std::max(beam, max_k);

    struct Acc {
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0;
        void add(double v) {
            sum += v;
            sumsq += v * v;
            ++n;
        }
    };
    std::vector<Acc> prec(ks.size()), rec(ks.size()), ndcg(ks.size());

    for (const auto& q : queries) {
        std::vector<Candidate> ranked = beam_decode(params, q.prompt, trie, width);
        std::set<std::size_t> relevant{q.target_item};
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (auto pr = precision_recall_at_k(ranked, relevant, ks[i])) {
                prec[i].add(pr->precision);
                rec[i].add(pr->recall);
            }
            if (auto n = ndcg_at_k(ranked, relevant, ks[i])) ndcg[i].add(*n);
        }
    }

    auto emit = [&](const char* name, const std::vector<Acc>& acc, std::vector<MetricRow>& out) {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            MetricRow row;
            row.metric = name;
            row.k = ks[i];
            row.n_queries = acc[i].n;
            if (acc[i].n > 0) {
                row.mean = acc[i].sum / static_cast<double>(acc[i].n);
                if (acc[i].n > 1) {
                    double var = (acc[i].sumsq - acc[i].sum * acc[i].sum / static_cast<double>(acc[i].n)) /
                                 static_cast<double>(acc[i].n - 1);
                    row.stderr_ = std::sqrt(std::max(0.0, var) / static_cast<double>(acc[i].n));
                }
            }
            out.push_back(row);
        }
    };
    std::vector<MetricRow> rows;
    emit("precision", prec, rows);
    emit("recall", rec, rows);
    emit("ndcg", ndcg, rows);
    return rows;
}

void save_metrics_csv(const std::vector<MetricRow>& rows, const std::string& arm,
                      const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_metrics_csv: cannot open " + path);
    f << "arm,metric,k,mean,stderr,n_queries\n";
    char buf[64];
    for (const auto& r : rows) {
        f << arm << ',' << r.metric << ',' << r.k << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.mean);
        f << buf << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.stderr_);
        f << buf << ',' << r.n_queries << '\n';
    }
    if (!f) throw std::runtime_error("save_metrics_csv: write failed: " + path);
}

} // namespace gti::decode
