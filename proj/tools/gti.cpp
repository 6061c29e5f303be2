#include "gti/experiment.hpp"
#include "gti/kernels.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

using gti::exp::Arm;
using gti::exp::ExperimentSpec;

std::vector<std::uint64_t> seeds_to_run(const ExperimentSpec& spec,
                                        const std::optional<std::uint64_t>& override_seed) {
    if (override_seed) return {*override_seed};
    return spec.seeds;
}

std::vector<Arm> arms_to_run(const std::string& arm_slug) {
    std::vector<Arm> all = gti::exp::default_arms();
    if (arm_slug.empty()) return all;
    for (const Arm& a : all)
        if (a.slug() == arm_slug) return {a};
    throw CLI::ValidationError("--arm", "unknown arm \"" + arm_slug + "\" (use one of: "
                                            "mi_vanilla, mi_multitask, gti_vanilla, gti_multitask)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GTI lab: semantic-ID generative retrieval with grounded token initialization"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out = "runs/default";
    std::optional<std::uint64_t> seed_override;
    std::size_t jobs = 1;
    std::string arm_slug;

    app.add_option("--spec", spec_path, "Experiment spec (JSON); defaults used when omitted");
    app.add_option("--out", out, "Output directory")->capture_default_str();
    app.add_option("--seed", seed_override, "Run a single seed instead of the spec's seed list");
    app.add_option("--jobs", jobs, "Parallel arm limit for run-all")->capture_default_str();
    app.add_option("--arm", arm_slug,
                   "Restrict sft/eval/diagnose to one arm "
                   "(mi_vanilla|mi_multitask|gti_vanilla|gti_multitask)");

    auto* c_gen = app.add_subcommand("gen-data", "Generate the synthetic catalog and interactions");
    auto* c_fit = app.add_subcommand("fit-rq", "Fit residual-quantization codebooks");
    auto* c_asg = app.add_subcommand("assign-sids", "Assign collision-free semantic IDs");
    auto* c_pre = app.add_subcommand("pretrain", "Pretrain the byte-level backbone");
    auto* c_ext = app.add_subcommand("extend", "Extend the vocabulary with mean-initialized SID rows");
    auto* c_grd = app.add_subcommand("ground", "Ground the new SID embeddings (frozen backbone)");
    auto* c_sft = app.add_subcommand("sft", "Fine-tune for retrieval (per arm)");
    auto* c_evl = app.add_subcommand("eval", "Constrained-beam evaluation (per arm)");
    auto* c_dia = app.add_subcommand("diagnose", "Embedding-geometry diagnostics (per arm)");
    auto* c_rep = app.add_subcommand("report", "Aggregate the relative-gain and K-sweep report");
    auto* c_all = app.add_subcommand("run-all", "Run the full arm grid end to end");

    // Accept the global options in either position: `gti --spec s.json gen-data`
    // and `gti gen-data --spec s.json`.
    for (CLI::App* sub : app.get_subcommands(nullptr)) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        ExperimentSpec spec =
            spec_path.empty() ? ExperimentSpec{} : ExperimentSpec::from_json_file(spec_path);
        spec.validate();

        std::fprintf(stderr, "{\"stage\":\"start\",\"kernels\":\"%s\",\"out\":\"%s\"}\n",
                     std::string(gti::kernels::active_name()).c_str(), out.c_str());

        if (c_gen->parsed()) {
            gti::exp::run_gen_data(spec, out);
        } else if (c_fit->parsed()) {
            gti::exp::run_fit_rq(spec, out);
        } else if (c_asg->parsed()) {
            gti::exp::run_assign_sids(spec, out);
        } else if (c_pre->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override)) gti::exp::run_pretrain(spec, out, s);
        } else if (c_ext->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override)) gti::exp::run_extend(spec, out, s);
        } else if (c_grd->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override)) gti::exp::run_ground(spec, out, s);
        } else if (c_sft->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override))
                for (const Arm& a : arms_to_run(arm_slug)) gti::exp::run_sft(spec, out, s, a);
        } else if (c_evl->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override))
                for (const Arm& a : arms_to_run(arm_slug)) gti::exp::run_eval(spec, out, s, a);
        } else if (c_dia->parsed()) {
            for (auto s : seeds_to_run(spec, seed_override))
                for (const Arm& a : arms_to_run(arm_slug)) gti::exp::run_diagnose(spec, out, s, a);
        } else if (c_rep->parsed()) {
            gti::exp::run_report(spec, out);
        } else if (c_all->parsed()) {
            gti::exp::run_all(spec, out, jobs);
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "{\"stage\":\"error\",\"kind\":\"config\",\"message\":\"%s\"}\n",
                     e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "{\"stage\":\"error\",\"kind\":\"config\",\"message\":\"%s\"}\n",
                     e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "{\"stage\":\"error\",\"kind\":\"runtime\",\"message\":\"%s\"}\n",
                     e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
