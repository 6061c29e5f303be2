#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gti/experiment.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>
#include <string>

using namespace gti;
using namespace gti::exp;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

#ifdef GTI_BINARY
int run_gti(const std::string& args) {
    std::string cmd = std::string(GTI_BINARY) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
#endif

} // namespace

TEST_CASE("empty JSON object yields the defaults") {
    auto spec = ExperimentSpec::from_json_text("{}");
    CHECK(spec.n_items == 64);
    CHECK(spec.levels == 4);
    CHECK(spec.entries == 8);
    CHECK(spec.model.d_model == 32);
    CHECK(spec.pretrain.steps == 1000);
    CHECK(spec.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(spec.eval_ks == std::vector<std::size_t>{1, 5, 10, 20});
    spec.validate();
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(ExperimentSpec::from_json_text(R"({"n_itemz": 3})"), std::invalid_argument);
    CHECK_THROWS_AS(ExperimentSpec::from_json_text(R"({"data": {"n_itemz": 3}})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(ExperimentSpec::from_json_text("not json"), std::invalid_argument);
}

TEST_CASE("nested overrides are applied") {
    auto spec = ExperimentSpec::from_json_text(
        R"({"data": {"n_items": 32, "depth": 3}, "rq": {"entries": 4},
            "phases": {"pretrain": {"steps": 10}}, "seeds": [5]})");
    CHECK(spec.n_items == 32);
    CHECK(spec.depth == 3);
    CHECK(spec.entries == 4);
    CHECK(spec.pretrain.steps == 10);
    CHECK(spec.ground.steps == 600); // untouched sibling keeps its default
    CHECK(spec.seeds == std::vector<std::uint64_t>{5});
}

TEST_CASE("validate rejects inconsistent shapes") {
    auto bad = [](const std::string& text) {
        // from_json_text validates before returning
        CHECK_THROWS_AS(ExperimentSpec::from_json_text(text), std::invalid_argument);
    };
    bad(R"({"data": {"n_items": 4}, "rq": {"entries": 8}})");    // fewer items than K
    bad(R"({"data": {"depth": 9}})");
    bad(R"({"data": {"branching": 1}})");
    bad(R"({"data": {"len_lo": 2}})");
    bad(R"({"model": {"d_model": 30, "heads": 4}})");            // not divisible
    bad(R"({"rq": {"sinkhorn_epsilon": 0.0}})");
    bad(R"({"seeds": []})");
}

TEST_CASE("canonical JSON and content hash round-trip") {
    auto spec = ExperimentSpec::from_json_text(R"({"data": {"n_items": 48}})");
    std::string text = spec.to_json();
    auto back = ExperimentSpec::from_json_text(text);
    CHECK(back.to_json() == text);
    CHECK(back.content_hash() == spec.content_hash());
    CHECK(ExperimentSpec{}.content_hash() != spec.content_hash());
}

TEST_CASE("arm naming") {
    auto arms = default_arms();
    REQUIRE(arms.size() == 4);
    CHECK(arms[0].strategy == baseline_arm().strategy);
    CHECK(arms[0].mode == baseline_arm().mode);
    std::set<std::string> slugs;
    for (const auto& a : arms) {
        slugs.insert(a.slug());
        for (char c : a.slug()) CHECK((std::isalnum(static_cast<unsigned char>(c)) || c == '_'));
    }
    CHECK(slugs.size() == 4);
}

#ifdef GTI_BINARY

TEST_CASE("cli exit codes") {
    namespace fs = std::filesystem;
    fs::path tmp = fs::temp_directory_path() / "gti_cli_test";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    SUBCASE("missing or invalid spec file is a config error") {
        CHECK(run_gti("gen-data --spec " + (tmp / "nope.json").string() + " --out " +
                      (tmp / "o").string()) == 2);
        std::ofstream((tmp / "bad.json")) << "{\"n_itemz\": 1}";
        CHECK(run_gti("gen-data --spec " + (tmp / "bad.json").string() + " --out " +
                      (tmp / "o").string()) == 2);
    }
    SUBCASE("unknown arm is a config error") {
        CHECK(run_gti("sft --arm warp --out " + (tmp / "o").string() + " --seed 1") == 2);
    }
    SUBCASE("stage run before its inputs is a runtime error") {
        CHECK(run_gti("fit-rq --out " + (tmp / "empty").string()) == 3);
    }
    SUBCASE("gen-data succeeds and is byte-deterministic") {
        std::ofstream((tmp / "small.json"))
            << R"({"data": {"n_items": 16, "n_users": 8}, "rq": {"levels": 2, "entries": 4}})";
        std::string spec_arg = " --spec " + (tmp / "small.json").string();
        CHECK(run_gti("gen-data" + spec_arg + " --out " + (tmp / "r1").string()) == 0);
        CHECK(run_gti("gen-data" + spec_arg + " --out " + (tmp / "r2").string()) == 0);
        for (const char* f : {"catalog.tsv", "interactions.tsv", "manifest.txt"}) {
            CAPTURE(f);
            CHECK(slurp(tmp / "r1" / "data" / f) == slurp(tmp / "r2" / "data" / f));
            CHECK(!slurp(tmp / "r1" / "data" / f).empty());
        }
    }
    fs::remove_all(tmp);
}

#endif
