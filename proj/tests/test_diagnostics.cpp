#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gti/diagnostics.hpp"
#include "gti/model.hpp"
#include "gti/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace gti;
using namespace gti::diag;

namespace {

SingularSpectrum spectrum(std::initializer_list<double> values) {
    SingularSpectrum s;
    s.values = values;
    return s;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 1;
    c.d_model = 8;
    c.d_ff = 16;
    c.context = 32;
    return c;
}

} // namespace

TEST_CASE("effective rank hand cases") {
    CHECK(effective_rank(spectrum({1, 1, 1, 1})) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(effective_rank(spectrum({5, 0, 0})) == 1.0); // exactly, zeros are cut
    // p = (4/7, 3/7): exp(H) with H = -sum p ln p
    double h = -(4.0 / 7.0) * std::log(4.0 / 7.0) - (3.0 / 7.0) * std::log(3.0 / 7.0);
    CHECK(effective_rank(spectrum({4, 3})) == doctest::Approx(std::exp(h)).epsilon(1e-12));
    CHECK(effective_rank(spectrum({4, 3})) == doctest::Approx(1.9797).epsilon(1e-3));

    SUBCASE("scale invariance") {
        CHECK(effective_rank(spectrum({4, 3, 2})) ==
              doctest::Approx(effective_rank(spectrum({40, 30, 20}))).epsilon(1e-12));
    }
    SUBCASE("bounds: 1 <= erank <= count") {
        Rng rng(6);
        for (int t = 0; t < 20; ++t) {
            SingularSpectrum s;
            for (int i = 0; i < 6; ++i) s.values.push_back(std::abs(rng.next_gaussian()) + 0.01);
            std::sort(s.values.begin(), s.values.end(), std::greater<double>());
            double er = effective_rank(s);
            CHECK(er >= 1.0 - 1e-12);
            CHECK(er <= 6.0 + 1e-12);
        }
    }
    SUBCASE("degenerate spectra throw") {
        CHECK_THROWS_AS(effective_rank(spectrum({})), std::invalid_argument);
        CHECK_THROWS_AS(effective_rank(spectrum({0, 0})), std::invalid_argument);
    }
}

TEST_CASE("thresholded rank") {
    CHECK(thresholded_rank(spectrum({1, 0.5, 0.009, 0.0001})) == 2); // tau = 0.01
    CHECK(thresholded_rank(spectrum({1, 0.5, 0.2}), 0.1) == 3);
    CHECK(thresholded_rank(spectrum({1, 0.5, 0.2}), 0.6) == 1);
}

TEST_CASE("cosine_block hand cases") {
    SUBCASE("orthonormal rows give the identity") {
        DenseMatrix e(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        std::vector<std::size_t> idx{0, 1, 2};
        auto sm = cosine_block(e, idx, {});
        CHECK(sm.cos.rows == 3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(sm.cos.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
    }
    SUBCASE("identical rows give exactly all-ones") {
        DenseMatrix e(4, 5);
        Rng(8).fill_gaussian(e.row(0), 5, 1.0);
        for (std::size_t r = 1; r < 4; ++r)
            std::copy(e.row(0), e.row(0) + 5, e.row(r));
        std::vector<std::size_t> idx{0, 1, 2, 3};
        auto sm = cosine_block(e, idx, {});
        for (double v : sm.cos.values) CHECK(v == 1.0);
    }
    SUBCASE("block split and labels") {
        DenseMatrix e(4, 2, {1, 0, 0, 1, 1, 1, 0, 0});
        std::vector<std::size_t> a{0, 1}, b{2, 3};
        auto sm = cosine_block(e, a, b);
        CHECK(sm.block_split == 2);
        CHECK(sm.labels.size() == 4);
        CHECK(sm.labels[0] == "r0");
        CHECK(sm.degenerate[3] == 1); // zero row
        CHECK(sm.cos.at(3, 0) == 0.0);
        // cross entry: cos((1,0),(1,1)) = 1/sqrt(2)
        CHECK(sm.cos.at(0, 2) == doctest::Approx(1.0 / std::sqrt(2.0)));
        // symmetry
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(sm.cos.at(i, j) == doctest::Approx(sm.cos.at(j, i)));
    }
    SUBCASE("random gaussian rows are near-orthogonal off the diagonal") {
        DenseMatrix e(200, 32);
        Rng(4).fill_gaussian(e.values.data(), e.values.size(), 1.0);
        std::vector<std::size_t> idx(200);
        for (std::size_t i = 0; i < 200; ++i) idx[i] = i;
        auto sm = cosine_block(e, idx, {});
        double mean = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < 200; ++i)
            for (std::size_t j = 0; j < 200; ++j)
                if (i != j) {
                    mean += std::abs(sm.cos.at(i, j));
                    ++n;
                }
        CHECK(mean / static_cast<double>(n) < 0.2);
    }
}

TEST_CASE("rsa hand cases") {
    SUBCASE("identical geometries correlate perfectly") {
        DenseMatrix a(6, 4);
        Rng(12).fill_gaussian(a.values.data(), a.values.size(), 1.0);
        auto score = rsa(a, a);
        CHECK(score.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(score.spearman_rho == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(score.n_pairs == 15);
    }
    SUBCASE("rotation and uniform scaling preserve the score") {
        DenseMatrix a(8, 2);
        Rng(13).fill_gaussian(a.values.data(), a.values.size(), 1.0);
        // rotate by 0.7 rad and scale by 3
        DenseMatrix b(8, 2);
        double c = std::cos(0.7), s = std::sin(0.7);
        for (std::size_t i = 0; i < 8; ++i) {
            b.at(i, 0) = 3.0 * (c * a.at(i, 0) - s * a.at(i, 1));
            b.at(i, 1) = 3.0 * (s * a.at(i, 0) + c * a.at(i, 1));
        }
        auto score = rsa(a, b);
        CHECK(score.pearson_r == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(score.spearman_rho == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("different ambient dimensions are allowed") {
        DenseMatrix a(5, 3), b(5, 7);
        Rng(14).fill_gaussian(a.values.data(), a.values.size(), 1.0);
        Rng(15).fill_gaussian(b.values.data(), b.values.size(), 1.0);
        auto score = rsa(a, b);
        CHECK(std::abs(score.pearson_r) <= 1.0);
        CHECK(score.n_pairs == 10);
    }
    SUBCASE("errors") {
        DenseMatrix a(2, 2), b(2, 2);
        CHECK_THROWS_AS(rsa(a, b), std::invalid_argument); // n < 3
        DenseMatrix c(4, 2), d(5, 2);
        CHECK_THROWS_AS(rsa(c, d), std::invalid_argument); // row mismatch
    }
}

TEST_CASE("diagnose_checkpoint on a mean-initialized extension") {
    ModelParams m = make_model(tiny_cfg(), 3);
    extend_vocabulary(m, 2, 4, 2, InitKind::kMean, 77);
    auto report = diagnose_checkpoint(m, nullptr, 5, 10);

    // All SID rows are identical copies of the vocabulary mean.
    CHECK(report.sid_effective_rank == 1.0);
    CHECK(report.sid_thresholded_rank == 1);
    for (double v : report.sid_block.cos.values) CHECK(v == 1.0);
    CHECK(report.sid_block.cos.rows == 8);
    CHECK(!report.rsa_present);
    CHECK(report.sampled_sid_tokens.size() <= 10);
    CHECK(report.sampled_text_tokens.size() <= 10);

    // SID labels use the level-letter token names.
    bool named = false;
    for (const auto& l : report.sid_block.labels)
        if (l.find("<a_") != std::string::npos || l.find("_0>") != std::string::npos) named = true;
    CHECK(named);
}

TEST_CASE("diagnose_checkpoint with codebook oracle fills the RSA section") {
    ModelParams m = make_model(tiny_cfg(), 4);
    extend_vocabulary(m, 2, 3, 1, InitKind::kRandom, 9);
    rq::CodebookStack cb;
    cb.levels = 2;
    cb.entries = 3;
    cb.dim = 6;
    cb.vectors.resize(cb.levels * cb.entries * cb.dim);
    Rng(21).fill_gaussian(cb.vectors.data(), cb.vectors.size(), 1.0);

    auto report = diagnose_checkpoint(m, &cb, 5, 10);
    CHECK(report.rsa_present);
    CHECK(report.rsa_score.n_pairs == 15); // 6 SID tokens -> C(6,2)
    CHECK(std::abs(report.rsa_score.pearson_r) <= 1.0);
    CHECK(std::abs(report.rsa_score.spearman_rho) <= 1.0);
}

TEST_CASE("diagnose_checkpoint requires an extended vocabulary") {
    ModelParams m = make_model(tiny_cfg(), 3);
    CHECK_THROWS_AS(diagnose_checkpoint(m, nullptr, 0), std::invalid_argument);
}

TEST_CASE("report artifacts are deterministic byte-for-byte") {
    namespace fs = std::filesystem;
    fs::path tmp = fs::temp_directory_path() / "gti_diag_report";
    fs::remove_all(tmp);

    ModelParams m = make_model(tiny_cfg(), 6);
    extend_vocabulary(m, 2, 3, 1, InitKind::kRandom, 10);
    auto report = diagnose_checkpoint(m, nullptr, 42, 8);

    fs::path d1 = tmp / "a", d2 = tmp / "b";
    write_report(report, d1.string());
    write_report(report, d2.string());

    const char* files[] = {"spectra.csv", "erank.csv",    "rsa.csv",      "cos_sid.csv",
                           "cos_sid.svg", "cos_cross.csv", "cos_cross.svg", "manifest.txt"};
    for (const char* f : files) {
        CAPTURE(f);
        REQUIRE(fs::exists(d1 / f));
        CHECK(slurp(d1 / f) == slurp(d2 / f));
        CHECK(!slurp(d1 / f).empty());
    }
    std::string svg = slurp(d1 / "cos_sid.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    std::string erank = slurp(d1 / "erank.csv");
    CHECK(erank.find("entropy_effective_rank") != std::string::npos);
    fs::remove_all(tmp);
}
