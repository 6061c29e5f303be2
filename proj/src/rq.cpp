#include "gti/rq.hpp"

#include "gti/kernels.hpp"
#include "gti/numerics.hpp"
#include "gti/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gti::rq {

namespace {

std::uint32_t nearest_code(const CodebookStack& cb, std::size_t level, const double* r) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cb.entries; ++k) {
        double d = kernels::sqdist(r, cb.codeword(level, k), cb.dim);
        if (d < best_d) { // strict: ties keep the lowest index
            best_d = d;
            best = static_cast<std::uint32_t>(k);
        }
    }
    return best;
}

} // namespace

CodebookStack fit_codebooks(const DenseMatrix& items, std::size_t levels, std::size_t entries,
                            std::uint64_t seed) {
    if (levels < 1 || entries < 2) throw std::invalid_argument("fit_codebooks: need L >= 1, K >= 2");
    if (items.rows < entries) throw std::invalid_argument("fit_codebooks: fewer items than K");

    CodebookStack cb;
    cb.levels = levels;
    cb.entries = entries;
    cb.dim = items.cols;
    cb.vectors.resize(levels * entries * cb.dim);

    DenseMatrix residuals = items;
    Rng rng(seed);
    for (std::size_t l = 0; l < levels; ++l) {
        KMeansResult km = kmeans(residuals, entries, rng.derive("rq-level").derive(l).next_u64());
        std::copy(km.centroids.values.begin(), km.centroids.values.end(),
                  cb.vectors.begin() + static_cast<std::ptrdiff_t>(l * entries * cb.dim));
        for (std::size_t i = 0; i < residuals.rows; ++i) {
            std::uint32_t c = nearest_code(cb, l, residuals.row(i));
            kernels::axpy(-1.0, cb.codeword(l, c), residuals.row(i), cb.dim);
        }
    }
    return cb;
}

QuantizeResult quantize(std::span<const double> z, const CodebookStack& cb) {
    if (z.size() != cb.dim) throw std::invalid_argument("quantize: dimension mismatch");
    QuantizeResult out;
    out.residual.assign(z.begin(), z.end());
    out.sid.codes.reserve(cb.levels);
    for (std::size_t l = 0; l < cb.levels; ++l) {
        std::uint32_t c = nearest_code(cb, l, out.residual.data());
        out.sid.codes.push_back(c);
        kernels::axpy(-1.0, cb.codeword(l, c), out.residual.data(), cb.dim);
    }
    return out;
}

DenseMatrix sinkhorn_balance(const DenseMatrix& cost, std::size_t iterations, double epsilon,
                             bool* converged) {
    if (epsilon <= 0.0) throw std::invalid_argument("sinkhorn_balance: epsilon must be positive");
    if (cost.rows != cost.cols) throw std::invalid_argument("sinkhorn_balance: square cost required");
    if (!cost.all_finite()) throw std::invalid_argument("sinkhorn_balance: non-finite cost");

    const std::size_t n = cost.rows;
    DenseMatrix plan(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        // Subtracting the row minimum before exponentiating is absorbed by the
        // first row normalization and keeps exp() away from underflow.
        double mn = *std::min_element(cost.row(i), cost.row(i) + n);
        for (std::size_t j = 0; j < n; ++j)
            plan.at(i, j) = std::exp(-(cost.at(i, j) - mn) / epsilon);
    }

    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = kernels::sum(plan.row(i), n);
            if (s > 0.0) kernels::scale(plan.row(i), n, 1.0 / s);
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += plan.at(i, j);
            if (s > 0.0)
                for (std::size_t i = 0; i < n; ++i) plan.at(i, j) /= s;
        }
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, std::abs(kernels::sum(plan.row(i), n) - 1.0));
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += plan.at(i, j);
        worst = std::max(worst, std::abs(s - 1.0));
    }
    if (converged) *converged = worst <= 1e-6;
    return plan;
}

namespace {

struct PendingItem {
    std::size_t index;               // into ItemEmbeddings
    std::vector<double> final_residual; // residual entering the final level
    std::uint32_t greedy_code;
};

} // namespace

SidMap assign_all(const ItemEmbeddings& items, const CodebookStack& cb, const SinkhornParams& sp) {
    if (items.ids.size() != items.z.rows)
        throw std::invalid_argument("assign_all: ids and embeddings disagree");

    const std::size_t n_items = items.ids.size();
    const std::size_t last = cb.levels - 1;
    SidMap map;
    map.item_ids = items.ids;
    map.assignments.resize(n_items);

    // Greedy pass, remembering the residual that enters the final level.
    std::vector<std::vector<double>> final_res(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        std::vector<double> r(items.z.row(i), items.z.row(i) + cb.dim);
        SemanticId sid;
        for (std::size_t l = 0; l < cb.levels; ++l) {
            if (l == last) final_res[i] = r;
            std::uint32_t c = nearest_code(cb, l, r.data());
            sid.codes.push_back(c);
            kernels::axpy(-1.0, cb.codeword(l, c), r.data(), cb.dim);
        }
        map.assignments[i].sid = std::move(sid);
    }

    // Full-SID collision groups.
    std::map<SemanticId, std::vector<std::size_t>> by_sid;
    for (std::size_t i = 0; i < n_items; ++i) by_sid[map.assignments[i].sid].push_back(i);

    // Prefixes that contain at least one collision; all items under the prefix
    // take part in the rebalancing so the reassignment cannot introduce a new
    // collision.
    std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> groups;
    for (const auto& [sid, members] : by_sid) {
        if (members.size() < 2) continue;
        std::vector<std::uint32_t> prefix(sid.codes.begin(), sid.codes.end() - 1);
        groups.try_emplace(prefix);
    }
    if (!groups.empty()) {
        for (std::size_t i = 0; i < n_items; ++i) {
            const auto& codes = map.assignments[i].sid.codes;
            std::vector<std::uint32_t> prefix(codes.begin(), codes.end() - 1);
            auto it = groups.find(prefix);
            if (it != groups.end()) it->second.push_back(i);
        }
    }
    for (const auto& [sid, members] : by_sid)
        if (members.size() > 1) map.greedy_collisions += members.size();

    for (const auto& [prefix, members] : groups) {
        const std::size_t n = members.size();
        const std::size_t K = cb.entries;
        const std::size_t m = std::max(n, K);

        DenseMatrix cost(m, m, 0.0);
        double max_cost = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < K; ++k) {
                double d = kernels::sqdist(final_res[members[r]].data(), cb.codeword(last, k), cb.dim);
                cost.at(r, k) = d;
                max_cost = std::max(max_cost, d);
            }
        // Dummy columns repel real items; dummy rows are indifferent.
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = K; k < m; ++k) cost.at(r, k) = 2.0 * max_cost + 1.0;

        DenseMatrix plan = sinkhorn_balance(cost, sp.iterations, sp.epsilon);

        // Decode a one-to-one assignment from the plan: largest mass first,
        // ties by lower cost, then lower item index, then lower code.
        struct Cell {
            double p, c;
            std::size_t r, k;
        };
        std::vector<Cell> cells;
        cells.reserve(n * K);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < K; ++k) cells.push_back({plan.at(r, k), cost.at(r, k), r, k});
        std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
            if (a.p != b.p) return a.p > b.p;
            if (a.c != b.c) return a.c < b.c;
            if (a.r != b.r) return a.r < b.r;
            return a.k < b.k;
        });
        std::vector<bool> row_done(n, false), col_done(K, false);
        for (const Cell& c : cells) {
            if (row_done[c.r] || col_done[c.k]) continue;
            row_done[c.r] = true;
            col_done[c.k] = true;
            auto& asg = map.assignments[members[c.r]];
            std::uint32_t greedy = asg.sid.codes.back();
            asg.sid.codes.back() = static_cast<std::uint32_t>(c.k);
            if (asg.sid.codes.back() != greedy) {
                asg.rerouted = true;
                ++map.rerouted;
            }
        }
        // Overflow (n > K): keep the greedy code; suffixes disambiguate below.
    }

    // Disambiguation suffixes for any remaining duplicates.
    std::map<SemanticId, std::size_t> seen;
    for (std::size_t i = 0; i < n_items; ++i) {
        auto& asg = map.assignments[i];
        std::size_t occ = seen[asg.sid]++;
        if (occ > 0) {
            asg.suffix = static_cast<std::int32_t>(occ - 1);
            ++map.suffixed;
        }
    }
    return map;
}

UtilizationReport codebook_stats(const SidMap& map, std::size_t levels, std::size_t entries) {
    UtilizationReport rep;
    rep.usage.assign(levels, std::vector<std::size_t>(entries, 0));
    rep.rerouted = map.rerouted;
    rep.suffixed = map.suffixed;
    rep.collision_count = map.greedy_collisions;
    for (const auto& asg : map.assignments)
        for (std::size_t l = 0; l < levels; ++l) ++rep.usage[l][asg.sid.codes[l]];
    rep.perplexity.resize(levels);
    const double total = static_cast<double>(map.assignments.size());
    for (std::size_t l = 0; l < levels; ++l) {
        double h = 0.0;
        for (std::size_t k = 0; k < entries; ++k) {
            if (rep.usage[l][k] == 0) continue;
            double p = static_cast<double>(rep.usage[l][k]) / total;
            h -= p * std::log(p);
        }
        rep.perplexity[l] = std::exp(h);
    }
    return rep;
}

void save_codebooks(const CodebookStack& cb, std::uint64_t seed, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_codebooks: cannot open " + path);
    f << "gti-codebook v1 " << cb.levels << ' ' << cb.entries << ' ' << cb.dim << ' ' << seed << '\n';
    char buf[64];
    for (std::size_t l = 0; l < cb.levels; ++l)
        for (std::size_t k = 0; k < cb.entries; ++k) {
            const double* q = cb.codeword(l, k);
            for (std::size_t j = 0; j < cb.dim; ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", q[j]);
                f << buf << (j + 1 == cb.dim ? '\n' : ' ');
            }
        }
    if (!f) throw std::runtime_error("save_codebooks: write failed: " + path);
}

CodebookStack load_codebooks(const std::string& path, std::uint64_t* seed_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_codebooks: cannot open " + path);
    std::string magic, version;
    CodebookStack cb;
    std::uint64_t seed = 0;
    f >> magic >> version >> cb.levels >> cb.entries >> cb.dim >> seed;
    if (magic != "gti-codebook" || version != "v1")
        throw std::runtime_error("load_codebooks: bad header in " + path);
    cb.vectors.resize(cb.levels * cb.entries * cb.dim);
    for (double& v : cb.vectors)
        if (!(f >> v)) throw std::runtime_error("load_codebooks: truncated file " + path);
    if (seed_out) *seed_out = seed;
    return cb;
}

void save_sid_map(const SidMap& map, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_sid_map: cannot open " + path);
    std::size_t levels = map.assignments.empty() ? 0 : map.assignments[0].sid.codes.size();
    f << "gti-sidmap v1 " << map.item_ids.size() << ' ' << levels << ' ' << map.greedy_collisions
      << ' ' << map.rerouted << ' ' << map.suffixed << '\n';
    for (std::size_t i = 0; i < map.item_ids.size(); ++i) {
        const auto& a = map.assignments[i];
        f << map.item_ids[i];
        for (auto c : a.sid.codes) f << ' ' << c;
        f << ' ' << a.suffix << ' ' << (a.rerouted ? 1 : 0) << '\n';
    }
    if (!f) throw std::runtime_error("save_sid_map: write failed: " + path);
}

SidMap load_sid_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_sid_map: cannot open " + path);
    std::string magic, version;
    std::size_t n = 0, levels = 0;
    SidMap map;
    f >> magic >> version >> n >> levels >> map.greedy_collisions >> map.rerouted >> map.suffixed;
    if (magic != "gti-sidmap" || version != "v1")
        throw std::runtime_error("load_sid_map: bad header in " + path);
    map.item_ids.resize(n);
    map.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        f >> map.item_ids[i];
        map.assignments[i].sid.codes.resize(levels);
        for (auto& c : map.assignments[i].sid.codes) f >> c;
        int rerouted = 0;
        f >> map.assignments[i].suffix >> rerouted;
        map.assignments[i].rerouted = rerouted != 0;
        if (!f) throw std::runtime_error("load_sid_map: truncated file " + path);
    }
    return map;
}

} // namespace gti::rq
