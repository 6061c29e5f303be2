#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gti/corpus.hpp"
#include "gti/decode.hpp"
#include "gti/model.hpp"
#include "gti/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace gti;
using namespace gti::decode;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 8;
    c.d_ff = 16;
    c.context = 48;
    return c;
}

rq::SidMap grid_sids(std::size_t n, std::size_t levels, std::size_t entries) {
    rq::SidMap map;
    for (std::size_t i = 0; i < n; ++i) {
        rq::SidAssignment a;
        std::size_t rem = i;
        for (std::size_t l = 0; l < levels; ++l) {
            a.sid.codes.push_back(static_cast<std::uint32_t>(rem % entries));
            rem /= entries;
        }
        map.item_ids.push_back("item_" + std::to_string(i));
        map.assignments.push_back(std::move(a));
    }
    return map;
}

ModelParams sid_model(std::size_t levels, std::size_t entries, std::uint64_t seed) {
    ModelParams m = make_model(tiny_cfg(), seed);
    extend_vocabulary(m, levels, entries, 2, InitKind::kRandom, seed + 1);
    return m;
}

TokenSequence bos_prompt() {
    TokenSequence p;
    p.tokens = {Vocabulary::kBos, Vocabulary::kAssistant};
    p.target_mask = {0, 0};
    return p;
}

std::vector<Candidate> ranked_items(std::initializer_list<std::size_t> items) {
    std::vector<Candidate> out;
    double lp = 0.0;
    for (std::size_t it : items) out.push_back({it, lp -= 1.0});
    return out;
}

// Score every leaf path exhaustively with the model; the oracle for beam
// search at full width.
std::vector<Candidate> brute_force(const ModelParams& m, const TokenSequence& prompt,
                                   const rq::SidMap& sids) {
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < sids.assignments.size(); ++i) {
        std::vector<int> path = corpus::sid_tokens_for(sids.assignments[i], m.vocab);
        path.push_back(Vocabulary::kEos);
        std::vector<int> ctx = prompt.tokens;
        double lp = 0.0;
        for (int tok : path) {
            lp += next_token_logprobs(m, ctx)[static_cast<std::size_t>(tok)];
            ctx.push_back(tok);
        }
        out.push_back({i, lp});
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.logprob != b.logprob) return a.logprob > b.logprob;
        return a.item < b.item;
    });
    return out;
}

} // namespace

TEST_CASE("trie construction") {
    Vocabulary vocab;
    vocab.extend(2, 3, 2);
    SUBCASE("leaf count and eos termination") {
        auto sids = grid_sids(7, 2, 3);
        auto trie = SidTrie::build(sids, vocab);
        CHECK(trie.n_leaves == 7);
        // Walk item 5's path: codes (2, 1), then <eos> carries the item.
        std::size_t node = 0;
        node = trie.nodes[node].children.at(vocab.sid_token(0, 2));
        node = trie.nodes[node].children.at(vocab.sid_token(1, 1));
        node = trie.nodes[node].children.at(Vocabulary::kEos);
        CHECK(trie.nodes[node].item == 5);
    }
    SUBCASE("single item") {
        auto trie = SidTrie::build(grid_sids(1, 2, 3), vocab);
        CHECK(trie.n_leaves == 1);
    }
    SUBCASE("duplicate full identifiers throw") {
        auto sids = grid_sids(2, 2, 3);
        sids.assignments[1] = sids.assignments[0];
        CHECK_THROWS_AS(SidTrie::build(sids, vocab), std::invalid_argument);
    }
    SUBCASE("suffixed identifiers extend the path") {
        auto sids = grid_sids(2, 2, 3);
        sids.assignments[1] = sids.assignments[0];
        sids.assignments[1].suffix = 0;
        auto trie = SidTrie::build(sids, vocab);
        CHECK(trie.n_leaves == 2);
    }
}

TEST_CASE("full-width beam equals brute-force enumeration") {
    Rng rng(2718);
    for (int trial = 0; trial < 100; ++trial) {
        Rng r = rng.derive(trial);
        std::size_t levels = 1 + r.next_below(3);   // L <= 3
        std::size_t entries = 2 + r.next_below(3);  // K <= 4
        std::size_t max_items = 1;
        for (std::size_t l = 0; l < levels; ++l) max_items *= entries;
        std::size_t n = 1 + r.next_below(std::min<std::size_t>(max_items, 12));

        ModelParams m = sid_model(levels, entries, 9000 + trial);
        auto sids = grid_sids(n, levels, entries);
        auto trie = SidTrie::build(sids, m.vocab);

        auto beam = beam_decode(m, bos_prompt(), trie, n);
        auto oracle = brute_force(m, bos_prompt(), sids);
        REQUIRE(beam.size() == n);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(beam[i].item == oracle[i].item);
            CHECK(beam[i].logprob == doctest::Approx(oracle[i].logprob).epsilon(1e-10));
        }
    }
}

TEST_CASE("narrow beams return at most beam candidates, best-first") {
    ModelParams m = sid_model(2, 4, 31);
    auto sids = grid_sids(16, 2, 4);
    auto trie = SidTrie::build(sids, m.vocab);
    auto two = beam_decode(m, bos_prompt(), trie, 2);
    CHECK(two.size() == 2);
    CHECK(two[0].logprob >= two[1].logprob);
    auto full = brute_force(m, bos_prompt(), sids);
    // Both survivors must carry their true path scores.
    for (const auto& cand : two) {
        auto it = std::find_if(full.begin(), full.end(),
                               [&](const Candidate& c) { return c.item == cand.item; });
        REQUIRE(it != full.end());
        CHECK(cand.logprob == doctest::Approx(it->logprob).epsilon(1e-10));
    }

    CHECK_THROWS_AS(beam_decode(m, bos_prompt(), trie, 0), std::invalid_argument);
}

TEST_CASE("precision and recall hand cases") {
    auto ranked = ranked_items({4, 7, 1, 9, 3});
    std::set<std::size_t> rel{7, 3, 50};
    auto pr5 = precision_recall_at_k(ranked, rel, 5);
    REQUIRE(pr5.has_value());
    CHECK(pr5->precision == doctest::Approx(2.0 / 5.0));
    CHECK(pr5->recall == doctest::Approx(2.0 / 3.0));
    auto pr2 = precision_recall_at_k(ranked, rel, 2);
    CHECK(pr2->precision == doctest::Approx(0.5));
    CHECK(pr2->recall == doctest::Approx(1.0 / 3.0));
    CHECK(!precision_recall_at_k(ranked, {}, 5).has_value());
    // precision * k is always an integer (the hit count)
    for (std::size_t k = 1; k <= 5; ++k) {
        auto pr = precision_recall_at_k(ranked, rel, k);
        double hits = pr->precision * static_cast<double>(k);
        CHECK(hits == doctest::Approx(std::round(hits)));
    }
}

TEST_CASE("ndcg hand cases") {
    std::set<std::size_t> rel{42};
    CHECK(*ndcg_at_k(ranked_items({42, 1, 2}), rel, 3) == doctest::Approx(1.0));
    // relevant at rank 3: dcg = 1/log2(4) = 0.5, idcg = 1
    CHECK(*ndcg_at_k(ranked_items({1, 2, 42}), rel, 3) == doctest::Approx(0.5));
    CHECK(*ndcg_at_k(ranked_items({1, 2, 42}), rel, 2) == doctest::Approx(0.0));
    CHECK(!ndcg_at_k(ranked_items({1, 2}), {}, 2).has_value());

    // bounded in [0,1] and non-decreasing in K
    auto ranked = ranked_items({9, 8, 42, 7, 6});
    double prev = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        double v = *ndcg_at_k(ranked, rel, k);
        CHECK(v >= prev - 1e-15);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
}

TEST_CASE("relative gain") {
    CHECK(*relative_gain(1.2, 1.0) == doctest::Approx(20.0));
    CHECK(*relative_gain(0.5, 1.0) == doctest::Approx(-50.0));
    CHECK(*relative_gain(1.0, 1.0) == doctest::Approx(0.0));
    CHECK(!relative_gain(1.0, 0.0).has_value());
}

TEST_CASE("an untrained model recalls targets at the chance rate") {
    // 64 equally-shaped leaves; Recall@5 for a single target is ~5/64 per query.
    ModelParams m = sid_model(3, 4, 1234);
    auto sids = grid_sids(64, 3, 4);
    auto trie = SidTrie::build(sids, m.vocab);

    std::vector<corpus::EvalQuery> queries;
    Rng rng(55);
    for (std::size_t q = 0; q < 200; ++q) {
        corpus::EvalQuery eq;
        eq.prompt = bos_prompt();
        eq.prompt.tokens.insert(eq.prompt.tokens.begin() + 1,
                                static_cast<int>('a' + rng.next_below(26)));
        eq.prompt.target_mask.push_back(0);
        eq.target_item = rng.next_below(64);
        queries.push_back(std::move(eq));
    }
    auto rows = evaluate(m, queries, trie, {5}, 64);
    double recall5 = 0.0, se = 0.0;
    for (const auto& row : rows)
        if (row.metric == "recall" && row.k == 5) {
            recall5 = row.mean;
            se = row.stderr_;
            CHECK(row.n_queries == 200);
        }
    double p = 5.0 / 64.0;
    double sigma = std::sqrt(p * (1 - p) / 200.0);
    CHECK(std::abs(recall5 - p) < 3.0 * sigma);
    // reported stderr should be near the binomial prediction
    CHECK(se == doctest::Approx(sigma).epsilon(0.35));
}

TEST_CASE("evaluate emits one row per metric per cutoff") {
    ModelParams m = sid_model(2, 3, 77);
    auto sids = grid_sids(9, 2, 3);
    auto trie = SidTrie::build(sids, m.vocab);
    std::vector<corpus::EvalQuery> queries(4);
    for (std::size_t q = 0; q < 4; ++q) {
        queries[q].prompt = bos_prompt();
        queries[q].target_item = q;
    }
    auto rows = evaluate(m, queries, trie, {1, 5}, 4);
    CHECK(rows.size() == 6);
    std::set<std::string> metrics;
    for (const auto& r : rows) {
        metrics.insert(r.metric);
        CHECK((r.k == 1 || r.k == 5));
        CHECK(r.n_queries == 4);
    }
    CHECK(metrics == std::set<std::string>{"precision", "recall", "ndcg"});
    // identical prompts: results are deterministic
    auto again = evaluate(m, queries, trie, {1, 5}, 4);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].mean == again[i].mean);
}
