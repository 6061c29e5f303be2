#pragma once

#include "gti/model.hpp"
#include "gti/rq.hpp"
#include "gti/vocab.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gti::corpus {

struct CatalogItem {
    std::string id;
    std::string title;
    std::string description;
    std::vector<std::size_t> path; // level-wise cluster indices
    std::vector<double> z;
};

struct SyntheticCatalog {
    std::size_t depth = 0;
    std::size_t branching = 0;
    std::size_t dim = 0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::vector<CatalogItem> items;

    std::size_t n_leaves() const;
    rq::ItemEmbeddings embeddings() const;
};

// Items around nested Gaussian cluster means; descriptions verbalize the
// cluster path with pseudo-words so the text carries the planted semantics.
SyntheticCatalog generate_catalog(std::size_t n_items, std::size_t depth, std::size_t branching,
                                  double noise, std::size_t dim, std::uint64_t seed);

struct InteractionDataset {
    std::vector<std::vector<std::size_t>> histories; // item indices per user
    std::vector<std::size_t> home_leaf;              // per user
};

// Users sample items biased toward one home leaf cluster with the given
// affinity. Every history has length >= 3 so leave-one-out splits exist.
InteractionDataset generate_interactions(const SyntheticCatalog& catalog, std::size_t n_users,
                                         std::size_t len_lo, std::size_t len_hi, double affinity,
                                         std::uint64_t seed);

enum class TemplateId {
    kTitleToSid,
    kDescToSid,
    kTitleDescToSid,
    kSidToTitle,
    kSidToDesc,
    kSidToTitleDesc,
    kRetrieval1,
    kRetrieval2,
    kRetrieval3,
};

struct Bindings {
    std::optional<std::string> title;
    std::optional<std::string> description;
    std::optional<std::vector<int>> sid_tokens;             // token ids
    std::optional<std::vector<std::vector<int>>> inters;    // history, each a token-id group
};

struct RenderedPrompt {
    TokenSequence seq;            // full chat sequence, loss mask on the assistant span
    std::size_t assistant_begin;  // index of the first token after <assistant>
};

// Byte-level chat rendering with role-marker special tokens. Throws on an
// unbound placeholder.
RenderedPrompt render_prompt(TemplateId id, const Bindings& b, const Vocabulary& vocab);

// SID token-id sequence for an item (L codes plus optional suffix token).
std::vector<int> sid_tokens_for(const rq::SidAssignment& a, const Vocabulary& vocab);

// Human-readable detokenization; byte tokens map back to their bytes.
std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab);
std::string bytes_only(std::span<const int> tokens, const Vocabulary& vocab);

enum class Direction { kTextToSid, kSidToText };

struct GroundingExample {
    TokenSequence seq;
    Direction direction;
    std::size_t item_index;
};

// One text->sid example per item (template variant round-robin by item index),
// plus the reversed direction when bidirectional is set.
std::vector<GroundingExample> build_grounding_corpus(const SyntheticCatalog& catalog,
                                                     const rq::SidMap& sids,
                                                     const Vocabulary& vocab, bool bidirectional);

enum class SftMode { kVanilla, kMultitask };
enum class Split { kTrain, kValid, kTest };

struct SftExample {
    TokenSequence seq;
    std::size_t user = 0;
    std::size_t target_item = 0;
    bool alignment = false; // multitask auxiliary example
};

std::vector<SftExample> build_sft_corpus(const InteractionDataset& data,
                                         const SyntheticCatalog& catalog, const rq::SidMap& sids,
                                         const Vocabulary& vocab, SftMode mode, Split split,
                                         std::size_t history_window);

struct EvalQuery {
    TokenSequence prompt; // ends with the <assistant> marker
    std::size_t user = 0;
    std::size_t target_item = 0;
};

std::vector<EvalQuery> build_eval_queries(const InteractionDataset& data,
                                          const SyntheticCatalog& catalog, const rq::SidMap& sids,
                                          const Vocabulary& vocab, Split split,
                                          std::size_t history_window);

// Next-byte pretraining sequences over "title. description".
std::vector<TokenSequence> build_pretrain_corpus(const SyntheticCatalog& catalog,
                                                 const Vocabulary& vocab, std::size_t max_len);

void save_catalog(const SyntheticCatalog& catalog, const std::string& path);
SyntheticCatalog load_catalog(const std::string& path);
void save_interactions(const InteractionDataset& data, const std::string& path);
InteractionDataset load_interactions(const std::string& path);

} // namespace gti::corpus
