#include "gti/corpus.hpp"

#include "gti/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gti::corpus {

namespace {

const char* kSyllables[] = {"bo", "ra", "mi", "tu", "ke", "zo",
                            "pli", "sha", "dru", "ve", "qua", "nix"};
constexpr std::size_t kNumSyllables = sizeof(kSyllables) / sizeof(kSyllables[0]);

const char* kLevelNouns[] = {"category", "style", "kind", "flavor"};

std::string pseudo_word(Rng rng) {
    std::string w;
    std::size_t n = 2 + rng.next_below(2);
    for (std::size_t s = 0; s < n; ++s) w += kSyllables[rng.next_below(kNumSyllables)];
    return w;
}

std::string capitalized(std::string w) {
    if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    return w;
}

// Unique pseudo-word per (level, node index), deterministic in the seed.
std::vector<std::vector<std::string>> make_level_words(std::size_t depth, std::size_t branching,
                                                       std::uint64_t seed) {
    std::vector<std::vector<std::string>> words(depth);
    Rng base = Rng(seed).derive("words");
    for (std::size_t l = 0; l < depth; ++l) {
        std::set<std::string> used;
        words[l].resize(branching);
        for (std::size_t i = 0; i < branching; ++i) {
            for (std::uint64_t attempt = 0;; ++attempt) {
                std::string w = pseudo_word(base.derive(l).derive(i).derive(attempt));
                if (used.insert(w).second) {
                    words[l][i] = w;
                    break;
                }
            }
        }
    }
    return words;
}

} // namespace

std::size_t SyntheticCatalog::n_leaves() const {
    std::size_t n = 1;
    for (std::size_t l = 0; l < depth; ++l) n *= branching;
    return n;
}

rq::ItemEmbeddings SyntheticCatalog::embeddings() const {
    rq::ItemEmbeddings e;
    e.z = DenseMatrix(items.size(), dim);
    for (std::size_t i = 0; i < items.size(); ++i) {
        e.ids.push_back(items[i].id);
        std::copy(items[i].z.begin(), items[i].z.end(), e.z.row(i));
    }
    return e;
}

SyntheticCatalog generate_catalog(std::size_t n_items, std::size_t depth, std::size_t branching,
                                  double noise, std::size_t dim, std::uint64_t seed) {
    if (depth == 0 || depth > 4) throw std::invalid_argument("generate_catalog: depth must be 1..4");
    if (branching < 2) throw std::invalid_argument("generate_catalog: branching must be >= 2");

    SyntheticCatalog cat;
    cat.depth = depth;
    cat.branching = branching;
    cat.dim = dim;
    cat.noise = noise;
    cat.seed = seed;

    Rng rng(seed);
    auto words = make_level_words(depth, branching, seed);

    // Offset vector per tree node; level scale shrinks geometrically so each
    // level refines the previous one.
    Rng means = rng.derive("means");
    std::vector<std::vector<std::vector<double>>> offsets(depth);
    std::size_t nodes = 1;
    for (std::size_t l = 0; l < depth; ++l) {
        nodes *= branching;
        offsets[l].resize(nodes);
        double scale = std::pow(0.35, static_cast<double>(l));
        for (std::size_t n = 0; n < nodes; ++n) {
            offsets[l][n].resize(dim);
            means.derive(l).derive(n).fill_gaussian(offsets[l][n].data(), dim, scale);
        }
    }

    const std::size_t leaves = cat.n_leaves();
    Rng noise_rng = rng.derive("noise");
    for (std::size_t i = 0; i < n_items; ++i) {
        CatalogItem item;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "item_%04zu", i);
        item.id = idbuf;

        std::size_t leaf = i % leaves;
        // digits of the leaf index, most significant first
        item.path.resize(depth);
        std::size_t rem = leaf;
        for (std::size_t l = depth; l-- > 0;) {
            item.path[l] = rem % branching;
            rem /= branching;
        }

        item.z.assign(dim, 0.0);
        std::size_t node = 0;
        for (std::size_t l = 0; l < depth; ++l) {
            node = node * branching + item.path[l];
            for (std::size_t d = 0; d < dim; ++d) item.z[d] += offsets[l][node][d];
        }
        if (noise > 0.0) {
            Rng nr = noise_rng.derive(i);
            for (std::size_t d = 0; d < dim; ++d) item.z[d] += noise * nr.next_gaussian();
        }

        std::ostringstream desc;
        for (std::size_t l = 0; l < depth; ++l) {
            if (l) desc << ", ";
            desc << kLevelNouns[l] << ' ' << words[l][item.path[l]];
        }
        item.description = desc.str();

        std::ostringstream title;
        title << capitalized(words[0][item.path[0]]);
        if (depth > 1) title << ' ' << capitalized(words[depth - 1][item.path[depth - 1]]);
        title << ' ' << i; // keeps titles unique
        item.title = title.str();

        cat.items.push_back(std::move(item));
    }
    return cat;
}

InteractionDataset generate_interactions(const SyntheticCatalog& catalog, std::size_t n_users,
                                         std::size_t len_lo, std::size_t len_hi, double affinity,
                                         std::uint64_t seed) {
    if (len_lo < 3 || len_hi < len_lo)
        throw std::invalid_argument("generate_interactions: need 3 <= len_lo <= len_hi");
    if (catalog.items.empty()) throw std::invalid_argument("generate_interactions: empty catalog");

    const std::size_t leaves = catalog.n_leaves();
    std::vector<std::vector<std::size_t>> by_leaf(leaves);
    for (std::size_t i = 0; i < catalog.items.size(); ++i) {
        std::size_t leaf = 0;
        for (std::size_t l = 0; l < catalog.depth; ++l)
            leaf = leaf * catalog.branching + catalog.items[i].path[l];
        by_leaf[leaf].push_back(i);
    }

    InteractionDataset data;
    Rng base = Rng(seed).derive("interactions");
    for (std::size_t u = 0; u < n_users; ++u) {
        Rng r = base.derive(u);
        std::size_t home = u % leaves;
        while (by_leaf[home].empty()) home = (home + 1) % leaves;
        std::size_t len = len_lo + r.next_below(len_hi - len_lo + 1);
        std::vector<std::size_t> hist;
        for (std::size_t t = 0; t < len; ++t) {
            if (r.next_double() < affinity)
                hist.push_back(by_leaf[home][r.next_below(by_leaf[home].size())]);
            else
                hist.push_back(r.next_below(catalog.items.size()));
        }
        data.histories.push_back(std::move(hist));
        data.home_leaf.push_back(home);
    }
    return data;
}

namespace {

struct TemplateSpec {
    const char* user_text;   // with {{title}}, {{description}}, {{sid}}, {{inters}}
    const char* assistant_text; // "{{sid}}", "{{title}}", etc.
};

const TemplateSpec& template_spec(TemplateId id) {
    static const TemplateSpec t2s_title{"Which item has the title: {{title}}?", "{{sid}}"};
    static const TemplateSpec t2s_desc{"Can you tell me what item is described as {{description}}?",
                                       "{{sid}}"};
    static const TemplateSpec t2s_both{
        "What item is called {{title}} and described as {{description}}?", "{{sid}}"};
    static const TemplateSpec s2t_title{"Could you please tell me what item {{sid}} is called?",
                                        "{{title}}"};
    static const TemplateSpec s2t_desc{"Briefly describe item {{sid}}.", "{{description}}"};
    static const TemplateSpec s2t_both{"What is the title and description of item {{sid}}?",
                                       "{{title}}\n\n{{description}}"};
    static const TemplateSpec ret1{
        "The user has interacted with items {{inters}} in chronological order. Can you predict the "
        "next possible item that the user may expect?",
        "{{sid}}"};
    static const TemplateSpec ret2{
        "Based on the items that the user has interacted with: {{inters}}, can you determine what "
        "item would be recommended to the user next?",
        "{{sid}}"};
    static const TemplateSpec ret3{
        "Here is the item interaction history of the user: {{inters}}, what to recommend to the "
        "user next?",
        "{{sid}}"};
    switch (id) {
        case TemplateId::kTitleToSid: return t2s_title;
        case TemplateId::kDescToSid: return t2s_desc;
        case TemplateId::kTitleDescToSid: return t2s_both;
        case TemplateId::kSidToTitle: return s2t_title;
        case TemplateId::kSidToDesc: return s2t_desc;
        case TemplateId::kSidToTitleDesc: return s2t_both;
        case TemplateId::kRetrieval1: return ret1;
        case TemplateId::kRetrieval2: return ret2;
        case TemplateId::kRetrieval3: return ret3;
    }
    throw std::invalid_argument("unknown template id");
}

void append_bytes(std::vector<int>& out, std::string_view text) {
    for (unsigned char c : text) out.push_back(static_cast<int>(c));
}

void expand(std::vector<int>& out, std::string_view text, const Bindings& b) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            append_bytes(out, text.substr(pos));
            break;
        }
        append_bytes(out, text.substr(pos, open - pos));
        std::size_t close = text.find("}}", open);
        std::string_view key = text.substr(open + 2, close - open - 2);
        if (key == "title") {
            if (!b.title) throw std::invalid_argument("render_prompt: unbound placeholder {{title}}");
            append_bytes(out, *b.title);
        } else if (key == "description") {
            if (!b.description)
                throw std::invalid_argument("render_prompt: unbound placeholder {{description}}");
            append_bytes(out, *b.description);
        } else if (key == "sid") {
            if (!b.sid_tokens)
                throw std::invalid_argument("render_prompt: unbound placeholder {{sid}}");
            out.insert(out.end(), b.sid_tokens->begin(), b.sid_tokens->end());
        } else if (key == "inters") {
            if (!b.inters)
                throw std::invalid_argument("render_prompt: unbound placeholder {{inters}}");
            for (std::size_t i = 0; i < b.inters->size(); ++i) {
                if (i) append_bytes(out, ", ");
                out.insert(out.end(), (*b.inters)[i].begin(), (*b.inters)[i].end());
            }
        } else {
            throw std::invalid_argument("render_prompt: unknown placeholder " + std::string(key));
        }
        pos = close + 2;
    }
}

} // namespace

RenderedPrompt render_prompt(TemplateId id, const Bindings& b, const Vocabulary& vocab) {
    const TemplateSpec& spec = template_spec(id);
    RenderedPrompt out;
    auto& toks = out.seq.tokens;
    toks.push_back(Vocabulary::kBos);
    toks.push_back(Vocabulary::kSystem);
    append_bytes(toks, "You are a helpful assistant.");
    toks.push_back(Vocabulary::kUser);
    expand(toks, spec.user_text, b);
    toks.push_back(Vocabulary::kAssistant);
    out.assistant_begin = toks.size();
    expand(toks, spec.assistant_text, b);
    toks.push_back(Vocabulary::kEos);

    out.seq.target_mask.assign(toks.size(), 0);
    for (std::size_t t = out.assistant_begin; t < toks.size(); ++t) out.seq.target_mask[t] = 1;
    (void)vocab;
    return out;
}

std::vector<int> sid_tokens_for(const rq::SidAssignment& a, const Vocabulary& vocab) {
    std::vector<int> out;
    for (std::size_t l = 0; l < a.sid.codes.size(); ++l)
        out.push_back(vocab.sid_token(l, a.sid.codes[l]));
    if (a.suffix >= 0) out.push_back(vocab.suffix_token(static_cast<std::size_t>(a.suffix)));
    return out;
}

std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab) {
    std::string out;
    for (int t : tokens) {
        if (vocab.is_byte(t))
            out += static_cast<char>(t);
        else
            out += vocab.token_name(t);
    }
    return out;
}

std::string bytes_only(std::span<const int> tokens, const Vocabulary& vocab) {
    std::string out;
    for (int t : tokens)
        if (vocab.is_byte(t)) out += static_cast<char>(t);
    return out;
}

std::vector<GroundingExample> build_grounding_corpus(const SyntheticCatalog& catalog,
                                                     const rq::SidMap& sids,
                                                     const Vocabulary& vocab, bool bidirectional) {
    if (sids.assignments.size() != catalog.items.size())
        throw std::invalid_argument("build_grounding_corpus: SID map does not cover the catalog");
    static const TemplateId t2s[] = {TemplateId::kTitleToSid, TemplateId::kDescToSid,
                                     TemplateId::kTitleDescToSid};
    static const TemplateId s2t[] = {TemplateId::kSidToTitle, TemplateId::kSidToDesc,
                                     TemplateId::kSidToTitleDesc};
    std::vector<GroundingExample> out;
    for (std::size_t i = 0; i < catalog.items.size(); ++i) {
        Bindings b;
        b.title = catalog.items[i].title;
        b.description = catalog.items[i].description;
        b.sid_tokens = sid_tokens_for(sids.assignments[i], vocab);
        out.push_back({render_prompt(t2s[i % 3], b, vocab).seq, Direction::kTextToSid, i});
        if (bidirectional)
            out.push_back({render_prompt(s2t[i % 3], b, vocab).seq, Direction::kSidToText, i});
    }
    return out;
}

namespace {

static const TemplateId kRetrieval[] = {TemplateId::kRetrieval1, TemplateId::kRetrieval2,
                                        TemplateId::kRetrieval3};

RenderedPrompt render_retrieval(const InteractionDataset& data, const SyntheticCatalog& catalog,
                                const rq::SidMap& sids, const Vocabulary& vocab, std::size_t user,
                                std::size_t target_pos, std::size_t history_window) {
    (void)catalog;
    const auto& hist = data.histories[user];
    Bindings b;
    std::vector<std::vector<int>> inters;
    std::size_t begin = target_pos > history_window ? target_pos - history_window : 0;
    for (std::size_t t = begin; t < target_pos; ++t)
        inters.push_back(sid_tokens_for(sids.assignments[hist[t]], vocab));
    b.inters = std::move(inters);
    b.sid_tokens = sid_tokens_for(sids.assignments[hist[target_pos]], vocab);
    return render_prompt(kRetrieval[(user + target_pos) % 3], b, vocab);
}

} // namespace

std::vector<SftExample> build_sft_corpus(const InteractionDataset& data,
                                         const SyntheticCatalog& catalog, const rq::SidMap& sids,
                                         const Vocabulary& vocab, SftMode mode, Split split,
                                         std::size_t history_window) {
    std::vector<SftExample> out;
    std::size_t align_cursor = 0;
    auto grounding = mode == SftMode::kMultitask
                         ? build_grounding_corpus(catalog, sids, vocab, true)
                         : std::vector<GroundingExample>{};

    for (std::size_t u = 0; u < data.histories.size(); ++u) {
        const auto& hist = data.histories[u];
        const std::size_t n = hist.size(); // n >= 3 by construction
        std::vector<std::size_t> targets;
        switch (split) {
            case Split::kTrain:
                for (std::size_t t = 1; t + 2 < n; ++t) targets.push_back(t);
                break;
            case Split::kValid: targets.push_back(n - 2); break;
            case Split::kTest: targets.push_back(n - 1); break;
        }
        for (std::size_t t : targets) {
            SftExample ex;
            ex.seq = render_retrieval(data, catalog, sids, vocab, u, t, history_window).seq;
            ex.user = u;
            ex.target_item = hist[t];
            out.push_back(std::move(ex));
            if (mode == SftMode::kMultitask && split == Split::kTrain && !grounding.empty()) {
                SftExample al;
                const auto& g = grounding[align_cursor++ % grounding.size()];
                al.seq = g.seq;
                al.user = u;
                al.target_item = g.item_index;
                al.alignment = true;
                out.push_back(std::move(al));
            }
        }
    }
    return out;
}

std::vector<EvalQuery> build_eval_queries(const InteractionDataset& data,
                                          const SyntheticCatalog& catalog, const rq::SidMap& sids,
                                          const Vocabulary& vocab, Split split,
                                          std::size_t history_window) {
    if (split == Split::kTrain)
        throw std::invalid_argument("build_eval_queries: use valid or test split");
    std::vector<EvalQuery> out;
    for (std::size_t u = 0; u < data.histories.size(); ++u) {
        const std::size_t n = data.histories[u].size();
        std::size_t t = split == Split::kTest ? n - 1 : n - 2;
        RenderedPrompt r = render_retrieval(data, catalog, sids, vocab, u, t, history_window);
        EvalQuery q;
        q.prompt.tokens.assign(r.seq.tokens.begin(),
                               r.seq.tokens.begin() + static_cast<std::ptrdiff_t>(r.assistant_begin));
        q.prompt.target_mask.assign(q.prompt.tokens.size(), 0);
        q.user = u;
        q.target_item = data.histories[u][t];
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<TokenSequence> build_pretrain_corpus(const SyntheticCatalog& catalog,
                                                 const Vocabulary& vocab, std::size_t max_len) {
    (void)vocab;
    std::vector<TokenSequence> out;
    for (const auto& item : catalog.items) {
        TokenSequence seq;
        seq.tokens.push_back(Vocabulary::kBos);
        append_bytes(seq.tokens, item.title + ". " + item.description);
        seq.tokens.push_back(Vocabulary::kEos);
        if (seq.tokens.size() > max_len) seq.tokens.resize(max_len);
        seq.target_mask.assign(seq.tokens.size(), 1);
        seq.target_mask[0] = 0;
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

std::string escape_tabs(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '\t')
            out += "\\t";
        else if (c == '\n')
            out += "\\n";
        else if (c == '\\')
            out += "\\\\";
        else
            out += c;
    }
    return out;
}

std::string unescape_tabs(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[++i];
            out += n == 't' ? '\t' : n == 'n' ? '\n' : n;
        } else {
            out += s[i];
        }
    }
    return out;
}

} // namespace

void save_catalog(const SyntheticCatalog& catalog, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_catalog: cannot open " + path);
    f << "gti-catalog v1 " << catalog.items.size() << ' ' << catalog.depth << ' '
      << catalog.branching << ' ' << catalog.dim << ' ';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", catalog.noise);
    f << buf << ' ' << catalog.seed << '\n';
    for (const auto& item : catalog.items) {
        f << escape_tabs(item.id) << '\t' << escape_tabs(item.title) << '\t'
          << escape_tabs(item.description) << '\t';
        for (std::size_t l = 0; l < item.path.size(); ++l) f << (l ? "," : "") << item.path[l];
        f << '\t';
        for (std::size_t d = 0; d < item.z.size(); ++d) {
            std::snprintf(buf, sizeof buf, "%.17g", item.z[d]);
            f << (d ? " " : "") << buf;
        }
        f << '\n';
    }
    if (!f) throw std::runtime_error("save_catalog: write failed: " + path);
}

SyntheticCatalog load_catalog(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_catalog: cannot open " + path);
    std::string magic, version;
    std::size_t n = 0;
    SyntheticCatalog cat;
    f >> magic >> version >> n >> cat.depth >> cat.branching >> cat.dim >> cat.noise >> cat.seed;
    if (magic != "gti-catalog" || version != "v1")
        throw std::runtime_error("load_catalog: bad header in " + path);
    std::string line;
    std::getline(f, line); // rest of header line
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(f, line)) throw std::runtime_error("load_catalog: truncated " + path);
        std::istringstream ls(line);
        std::string id, title, desc, pathstr, zstr;
        std::getline(ls, id, '\t');
        std::getline(ls, title, '\t');
        std::getline(ls, desc, '\t');
        std::getline(ls, pathstr, '\t');
        std::getline(ls, zstr);
        CatalogItem item;
        item.id = unescape_tabs(id);
        item.title = unescape_tabs(title);
        item.description = unescape_tabs(desc);
        std::istringstream ps(pathstr);
        std::string tok;
        while (std::getline(ps, tok, ',')) item.path.push_back(std::stoul(tok));
        std::istringstream zs(zstr);
        double v;
        while (zs >> v) item.z.push_back(v);
        if (item.z.size() != cat.dim) throw std::runtime_error("load_catalog: bad row in " + path);
        cat.items.push_back(std::move(item));
    }
    return cat;
}

void save_interactions(const InteractionDataset& data, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_interactions: cannot open " + path);
    f << "gti-interactions v1 " << data.histories.size() << '\n';
    for (std::size_t u = 0; u < data.histories.size(); ++u) {
        f << data.home_leaf[u];
        for (std::size_t it : data.histories[u]) f << ' ' << it;
        f << '\n';
    }
    if (!f) throw std::runtime_error("save_interactions: write failed: " + path);
}

InteractionDataset load_interactions(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_interactions: cannot open " + path);
    std::string magic, version;
    std::size_t n = 0;
    f >> magic >> version >> n;
    if (magic != "gti-interactions" || version != "v1")
        throw std::runtime_error("load_interactions: bad header in " + path);
    std::string line;
    std::getline(f, line);
    InteractionDataset data;
    for (std::size_t u = 0; u < n; ++u) {
        if (!std::getline(f, line)) throw std::runtime_error("load_interactions: truncated " + path);
        std::istringstream ls(line);
        std::size_t home = 0, item = 0;
        ls >> home;
        data.home_leaf.push_back(home);
        data.histories.emplace_back();
        while (ls >> item) data.histories.back().push_back(item);
        if (data.histories.back().size() < 3)
            throw std::runtime_error("load_interactions: history shorter than 3 in " + path);
    }
    return data;
}

} // namespace gti::corpus
