#include "gti/diagnostics.hpp"

#include "gti/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gti::diag {

SimilarityMatrix cosine_block(const DenseMatrix& e, std::span<const std::size_t> a,
                              std::span<const std::size_t> b,
                              const std::vector<std::string>& labels) {
    if (a.empty()) throw std::invalid_argument("cosine_block: empty subset A");

    std::vector<std::size_t> rows(a.begin(), a.end());
    rows.insert(rows.end(), b.begin(), b.end());
    const std::size_t n = rows.size();
    for (std::size_t r : rows)
        if (r >= e.rows) throw std::out_of_range("cosine_block: row index out of range");
    if (!labels.empty() && labels.size() != n)
        throw std::invalid_argument("cosine_block: label count mismatch");

    SimilarityMatrix m;
    m.block_split = a.size();
    m.cos = DenseMatrix(n, n);
    m.degenerate.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!labels.empty()) {
            m.labels.push_back(labels[i]);
        } else {
            m.labels.push_back("r" + std::to_string(rows[i]));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            Cosine c = cosine(e.row_span(rows[i]), e.row_span(rows[j]));
            m.cos.at(i, j) = c.value;
            m.cos.at(j, i) = c.value;
            if (c.degenerate && i == j) m.degenerate[i] = 1;
        }
    }
    return m;
}

double effective_rank(const SingularSpectrum& spectrum) {
    if (spectrum.values.empty()) throw std::invalid_argument("effective_rank: empty spectrum");
    double s1 = spectrum.values.front();
    if (!(s1 > 0.0)) throw std::invalid_argument("effective_rank: all-zero spectrum");
    double total = 0.0;
    for (double s : spectrum.values)
        if (s > 1e-12 * s1) total += s;
    double h = 0.0;
    for (double s : spectrum.values) {
        if (s > 1e-12 * s1) {
            double p = s / total;
            h -= p * std::log(p);
        }
    }
    return std::exp(h);
}

std::size_t thresholded_rank(const SingularSpectrum& spectrum, double tau) {
    if (spectrum.values.empty()) throw std::invalid_argument("thresholded_rank: empty spectrum");
    double s1 = spectrum.values.front();
    std::size_t count = 0;
    for (double s : spectrum.values)
        if (s > tau * s1) ++count;
    return count;
}

namespace {

std::vector<double> upper_triangle_cosines(const DenseMatrix& rows) {
    const std::size_t n = rows.rows;
    std::vector<double> out;
    out.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            out.push_back(cosine(rows.row_span(i), rows.row_span(j)).value);
    return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Average ranks on ties.
std::vector<double> ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

RsaScore rsa(const DenseMatrix& oracle_vectors, const DenseMatrix& learned_vectors) {
    if (oracle_vectors.rows != learned_vectors.rows)
        throw std::invalid_argument("rsa: row count mismatch");
    if (oracle_vectors.rows < 3) throw std::invalid_argument("rsa: need at least 3 rows");

    std::vector<double> a = upper_triangle_cosines(oracle_vectors);
    std::vector<double> b = upper_triangle_cosines(learned_vectors);
    RsaScore score;
    score.n_pairs = a.size();
    score.pearson_r = pearson(a, b);
    score.spearman_rho = pearson(ranks(a), ranks(b));
    return score;
}

namespace {

std::vector<std::size_t> sample_without_replacement(std::size_t lo, std::size_t hi,
                                                    std::size_t count, Rng rng) {
    std::vector<std::size_t> pool(hi - lo);
    std::iota(pool.begin(), pool.end(), lo);
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

} // namespace

DiagnosticsReport diagnose_checkpoint(const ModelParams& params, const rq::CodebookStack* codebooks,
                                      std::uint64_t sample_seed, std::size_t sample_size) {
    const Vocabulary& v = params.vocab;
    if (!v.extended()) throw std::invalid_argument("diagnose_checkpoint: vocabulary not extended");
    const std::size_t d = params.p.cfg.d_model;
    DenseMatrix e(params.p.vocab_size, d);
    std::copy(params.p.embed.begin(), params.p.embed.end(), e.values.begin());

    DiagnosticsReport rep;

    std::vector<std::size_t> sid_rows(v.sid_count());
    std::iota(sid_rows.begin(), sid_rows.end(), static_cast<std::size_t>(v.sid_begin()));
    std::vector<std::string> sid_labels;
    for (std::size_t r : sid_rows) sid_labels.push_back(v.token_name(static_cast<int>(r)));
    rep.sid_block = cosine_block(e, sid_rows, {}, sid_labels);

    Rng rng = Rng(sample_seed).derive("diag-sample");
    rep.sampled_text_tokens =
        sample_without_replacement(0, v.text_size(), sample_size, rng.derive("text"));
    rep.sampled_sid_tokens = sample_without_replacement(
        static_cast<std::size_t>(v.sid_begin()), static_cast<std::size_t>(v.sid_begin()) + v.sid_count(),
        sample_size, rng.derive("sid"));
    std::vector<std::string> cross_labels;
    for (std::size_t r : rep.sampled_text_tokens)
        cross_labels.push_back(v.token_name(static_cast<int>(r)));
    for (std::size_t r : rep.sampled_sid_tokens)
        cross_labels.push_back(v.token_name(static_cast<int>(r)));
    rep.cross_block = cosine_block(e, rep.sampled_text_tokens, rep.sampled_sid_tokens, cross_labels);

    DenseMatrix e_sid(sid_rows.size(), d);
    for (std::size_t i = 0; i < sid_rows.size(); ++i)
        std::copy_n(e.row(sid_rows[i]), d, e_sid.row(i));
    rep.sid_spectrum = svd_values(e_sid);
    rep.sid_effective_rank = effective_rank(rep.sid_spectrum);
    rep.sid_thresholded_rank = thresholded_rank(rep.sid_spectrum);

    if (codebooks != nullptr) {
        if (codebooks->levels != v.sid_levels() || codebooks->entries != v.sid_entries())
            throw std::invalid_argument("diagnose_checkpoint: codebook shape mismatch");
        DenseMatrix oracle(sid_rows.size(), codebooks->dim);
        for (std::size_t i = 0; i < sid_rows.size(); ++i) {
            int tok = static_cast<int>(sid_rows[i]);
            std::copy_n(codebooks->codeword(v.sid_level(tok), v.sid_code(tok)), codebooks->dim,
                        oracle.row(i));
        }
        rep.rsa_score = rsa(oracle, e_sid);
        rep.rsa_present = true;
    }
    return rep;
}

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Diverging map: -1 -> blue, 0 -> white, +1 -> red.
std::string cell_color(double v, bool degenerate) {
    if (degenerate) return "#b0b0b0";
    v = std::clamp(v, -1.0, 1.0);
    int r, g, b;
    if (v >= 0.0) {
        r = 255;
        g = static_cast<int>(std::lround(255.0 * (1.0 - v)));
        b = g;
    } else {
        b = 255;
        r = static_cast<int>(std::lround(255.0 * (1.0 + v)));
        g = r;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("diagnostics: cannot open " + path);
    f << body;
    if (!f) throw std::runtime_error("diagnostics: write failed: " + path);
}

} // namespace

void render_heatmap(const SimilarityMatrix& m, const std::string& path) {
    const std::size_t n = m.cos.rows;
    const int cell = 6, margin = 8, legend_h = 26;
    const int w = margin * 2 + cell * static_cast<int>(n);
    const int h = margin * 2 + cell * static_cast<int>(n) + legend_h;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\">\n";
    svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            bool deg = m.degenerate[i] || m.degenerate[j];
            svg << "<rect x=\"" << margin + cell * static_cast<int>(j) << "\" y=\""
                << margin + cell * static_cast<int>(i) << "\" width=\"" << cell << "\" height=\""
                << cell << "\" fill=\"" << cell_color(m.cos.at(i, j), deg) << "\"/>\n";
        }
    }
    if (m.block_split > 0 && m.block_split < n) {
        int s = margin + cell * static_cast<int>(m.block_split);
        int extent = margin + cell * static_cast<int>(n);
        svg << "<line x1=\"" << s << "\" y1=\"" << margin << "\" x2=\"" << s << "\" y2=\"" << extent
            << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
        svg << "<line x1=\"" << margin << "\" y1=\"" << s << "\" x2=\"" << extent << "\" y2=\"" << s
            << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    }
    // Legend: blue (-1) -> white (0) -> red (+1), gray = degenerate row.
    int ly = margin + cell * static_cast<int>(n) + 6;
    const int steps = 64, lw = 3;
    for (int s = 0; s < steps; ++s) {
        double v = -1.0 + 2.0 * static_cast<double>(s) / static_cast<double>(steps - 1);
        svg << "<rect x=\"" << margin + s * lw << "\" y=\"" << ly << "\" width=\"" << lw
            << "\" height=\"8\" fill=\"" << cell_color(v, false) << "\"/>\n";
    }
    svg << "<text x=\"" << margin << "\" y=\"" << ly + 18
        << "\" font-family=\"monospace\" font-size=\"8\">-1</text>\n";
    svg << "<text x=\"" << margin + (steps / 2) * lw - 3 << "\" y=\"" << ly + 18
        << "\" font-family=\"monospace\" font-size=\"8\">0</text>\n";
    svg << "<text x=\"" << margin + (steps - 1) * lw - 4 << "\" y=\"" << ly + 18
        << "\" font-family=\"monospace\" font-size=\"8\">+1</text>\n";
    svg << "</svg>\n";
    write_file(path, svg.str());
}

void save_similarity_csv(const SimilarityMatrix& m, const std::string& path) {
    std::ostringstream out;
    out << "label,degenerate";
    for (const auto& l : m.labels) out << ',' << l;
    out << '\n';
    for (std::size_t i = 0; i < m.cos.rows; ++i) {
        out << m.labels[i] << ',' << static_cast<int>(m.degenerate[i]);
        for (std::size_t j = 0; j < m.cos.cols; ++j) out << ',' << fmt(m.cos.at(i, j));
        out << '\n';
    }
    write_file(path, out.str());
}

void write_report(const DiagnosticsReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto at = [&](const char* name) { return (fs::path(dir) / name).string(); };

    {
        std::ostringstream out;
        out << "index,singular_value\n";
        for (std::size_t i = 0; i < report.sid_spectrum.values.size(); ++i)
            out << i << ',' << fmt(report.sid_spectrum.values[i]) << '\n';
        write_file(at("spectra.csv"), out.str());
    }
    {
        std::ostringstream out;
        out << "measure,value\n";
        out << "entropy_effective_rank," << fmt(report.sid_effective_rank) << '\n';
        out << "thresholded_rank_tau_0.01," << report.sid_thresholded_rank << '\n';
        write_file(at("erank.csv"), out.str());
    }
    {
        std::ostringstream out;
        out << "present,pearson_r,spearman_rho,n_pairs\n";
        if (report.rsa_present) {
            out << "1," << fmt(report.rsa_score.pearson_r) << ','
                << fmt(report.rsa_score.spearman_rho) << ',' << report.rsa_score.n_pairs << '\n';
        } else {
            out << "0,,,0\n";
        }
        write_file(at("rsa.csv"), out.str());
    }
    save_similarity_csv(report.sid_block, at("cos_sid.csv"));
    render_heatmap(report.sid_block, at("cos_sid.svg"));
    save_similarity_csv(report.cross_block, at("cos_cross.csv"));
    render_heatmap(report.cross_block, at("cos_cross.svg"));

    std::ostringstream man;
    man << "gti-diagnostics v1\n";
    man << "sampled_text_tokens";
    for (std::size_t t : report.sampled_text_tokens) man << ' ' << t;
    man << "\nsampled_sid_tokens";
    for (std::size_t t : report.sampled_sid_tokens) man << ' ' << t;
    man << '\n';
    for (const char* name :
         {"spectra.csv", "erank.csv", "rsa.csv", "cos_sid.csv", "cos_sid.svg", "cos_cross.csv",
          "cos_cross.svg"}) {
        std::ifstream f(at(name), std::ios::binary);
        std::ostringstream body;
        body << f.rdbuf();
        std::string s = body.str();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
        man << name << ' ' << buf << '\n';
    }
    write_file(at("manifest.txt"), man.str());
}

} // namespace gti::diag
