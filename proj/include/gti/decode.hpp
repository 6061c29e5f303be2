#pragma once

#include "gti/corpus.hpp"
#include "gti/model.hpp"
#include "gti/rq.hpp"
#include "gti/vocab.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gti::decode {

// Prefix tree over valid SID token sequences; every path ends with <eos> at a
// leaf that maps to an item.
struct SidTrie {
    struct Node {
        std::map<int, std::size_t> children; // token id -> node index
        std::int64_t item = -1;              // set on <eos> leaves
    };
    std::vector<Node> nodes;
    std::size_t n_leaves = 0;

    static SidTrie build(const rq::SidMap& sids, const Vocabulary& vocab);
};

struct Candidate {
    std::size_t item = 0;
    double logprob = 0.0;
};

// Length-synchronous beam search restricted to trie-valid continuations.
// Returns up to `beam` finished candidates sorted by total log-probability,
// ties broken by ascending item id. Throws on an empty trie or beam == 0.
std::vector<Candidate> beam_decode(const ModelParams& params, const TokenSequence& prompt,
                                   const SidTrie& trie, std::size_t beam);

struct PR {
    double precision = 0.0;
    double recall = 0.0;
};

// nullopt when the relevant set is empty (recall undefined -> skip).
std::optional<PR> precision_recall_at_k(const std::vector<Candidate>& ranked,
                                        const std::set<std::size_t>& relevant, std::size_t k);

// Binary-gain DCG with log2 discount, normalized by the ideal ordering.
std::optional<double> ndcg_at_k(const std::vector<Candidate>& ranked,
                                const std::set<std::size_t>& relevant, std::size_t k);

// Signed percentage (method - baseline) / baseline; nullopt when baseline == 0.
std::optional<double> relative_gain(double method_value, double baseline_value);

struct MetricRow {
    std::string metric; // precision | recall | ndcg
    std::size_t k = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n_queries = 0;
};

// Per-K means over queries; queries are processed and merged in query order.
std::vector<MetricRow> evaluate(const ModelParams& params,
                                const std::vector<corpus::EvalQuery>& queries, const SidTrie& trie,
                                const std::vector<std::size_t>& ks, std::size_t beam);

void save_metrics_csv(const std::vector<MetricRow>& rows, const std::string& arm,
                      const std::string& path);

} // namespace gti::decode
