#include "gti/experiment.hpp"

#include "gti/diagnostics.hpp"
#include "gti/numerics.hpp"
#include "gti/rng.hpp"
#include "gti/train.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fs = std::filesystem;
using nlohmann::json;

namespace gti::exp {

namespace {

constexpr const char* kCodeVersion = "0.1.0";

void log_line(const std::string& stage, const std::string& detail) {
    std::fprintf(stderr, "{\"stage\":\"%s\",%s}\n", stage.c_str(), detail.c_str());
}

std::string hex64(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("manifest: cannot read " + path);
    std::ostringstream body;
    body << f.rdbuf();
    std::string s = body.str();
    return fnv1a(s.data(), s.size());
}

// Every stage directory carries its provenance and the checksums of what it
// produced; byte-identical inputs reproduce it byte-identically.
void write_manifest(const std::string& dir, const ExperimentSpec& spec, const std::string& seed,
                    const std::vector<std::string>& files) {
    std::ofstream f((fs::path(dir) / "manifest.txt").string(), std::ios::binary);
    if (!f) throw std::runtime_error("manifest: cannot open in " + dir);
    f << "gti-manifest v1\n";
    f << "code_version " << kCodeVersion << '\n';
    f << "spec_hash " << hex64(spec.content_hash()) << '\n';
    f << "seed " << seed << '\n';
    for (const auto& name : files)
        f << name << ' ' << hex64(file_checksum((fs::path(dir) / name).string())) << '\n';
    if (!f) throw std::runtime_error("manifest: write failed in " + dir);
}

void require_exists(const std::string& path, const std::string& hint) {
    if (!fs::exists(path))
        throw std::runtime_error("missing input " + path + " (run `" + hint + "` first)");
}

std::uint64_t interactions_seed(const ExperimentSpec& spec) {
    return Rng(spec.data_seed).derive("interactions").key();
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const char* scope, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw std::invalid_argument(std::string("spec: ") + scope + " must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw std::invalid_argument("spec: unknown key \"" + key + "\" in " + scope);
    }
}

void read_phase(const json& j, const char* name, PhaseSpec& out) {
    if (!j.contains(name)) return;
    const json& p = j.at(name);
    reject_unknown(p, name, {"steps", "batch", "lr"});
    read_field(p, "steps", out.steps);
    read_field(p, "batch", out.batch);
    read_field(p, "lr", out.lr);
}

} // namespace

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("spec: parse error: ") + e.what());
    }
    ExperimentSpec spec;
    try {
        reject_unknown(j, "top level", {"data", "rq", "model", "phases", "eval", "seeds"});
        if (j.contains("data")) {
            const json& d = j.at("data");
            reject_unknown(d, "data",
                           {"n_items", "depth", "branching", "emb_dim", "noise", "n_users",
                            "len_lo", "len_hi", "affinity", "history_window", "seed"});
            read_field(d, "n_items", spec.n_items);
            read_field(d, "depth", spec.depth);
            read_field(d, "branching", spec.branching);
            read_field(d, "emb_dim", spec.emb_dim);
            read_field(d, "noise", spec.noise);
            read_field(d, "n_users", spec.n_users);
            read_field(d, "len_lo", spec.len_lo);
            read_field(d, "len_hi", spec.len_hi);
            read_field(d, "affinity", spec.affinity);
            read_field(d, "history_window", spec.history_window);
            read_field(d, "seed", spec.data_seed);
        }
        if (j.contains("rq")) {
            const json& r = j.at("rq");
            reject_unknown(r, "rq",
                           {"levels", "entries", "suffixes", "sinkhorn_iterations",
                            "sinkhorn_epsilon"});
            read_field(r, "levels", spec.levels);
            read_field(r, "entries", spec.entries);
            read_field(r, "suffixes", spec.suffixes);
            read_field(r, "sinkhorn_iterations", spec.sinkhorn_iterations);
            read_field(r, "sinkhorn_epsilon", spec.sinkhorn_epsilon);
        }
        if (j.contains("model")) {
            const json& m = j.at("model");
            reject_unknown(m, "model", {"layers", "heads", "d_model", "d_ff", "context"});
            read_field(m, "layers", spec.model.n_layers);
            read_field(m, "heads", spec.model.n_heads);
            read_field(m, "d_model", spec.model.d_model);
            read_field(m, "d_ff", spec.model.d_ff);
            read_field(m, "context", spec.model.context);
        }
        if (j.contains("phases")) {
            const json& p = j.at("phases");
            reject_unknown(p, "phases", {"pretrain", "ground", "sft"});
            read_phase(p, "pretrain", spec.pretrain);
            read_phase(p, "ground", spec.ground);
            read_phase(p, "sft", spec.sft);
        }
        if (j.contains("eval")) {
            const json& e = j.at("eval");
            reject_unknown(e, "eval", {"ks", "beam"});
            read_field(e, "ks", spec.eval_ks);
            read_field(e, "beam", spec.beam);
        }
        read_field(j, "seeds", spec.seeds);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("spec: bad field type: ") + e.what());
    }
    spec.validate();
    return spec;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("spec: cannot open " + path);
    std::ostringstream body;
    body << f.rdbuf();
    return from_json_text(body.str());
}

std::string ExperimentSpec::to_json() const {
    json j;
    j["data"] = {{"n_items", n_items},
                 {"depth", depth},
                 {"branching", branching},
                 {"emb_dim", emb_dim},
                 {"noise", noise},
                 {"n_users", n_users},
                 {"len_lo", len_lo},
                 {"len_hi", len_hi},
                 {"affinity", affinity},
                 {"history_window", history_window},
                 {"seed", data_seed}};
    j["rq"] = {{"levels", levels},
               {"entries", entries},
               {"suffixes", suffixes},
               {"sinkhorn_iterations", sinkhorn_iterations},
               {"sinkhorn_epsilon", sinkhorn_epsilon}};
    j["model"] = {{"layers", model.n_layers},
                  {"heads", model.n_heads},
                  {"d_model", model.d_model},
                  {"d_ff", model.d_ff},
                  {"context", model.context}};
    j["phases"] = {{"pretrain", {{"steps", pretrain.steps}, {"batch", pretrain.batch}, {"lr", pretrain.lr}}},
                   {"ground", {{"steps", ground.steps}, {"batch", ground.batch}, {"lr", ground.lr}}},
                   {"sft", {{"steps", sft.steps}, {"batch", sft.batch}, {"lr", sft.lr}}}};
    j["eval"] = {{"ks", eval_ks}, {"beam", beam}};
    j["seeds"] = seeds;
    return j.dump(2) + "\n";
}

std::uint64_t ExperimentSpec::content_hash() const {
    std::string s = to_json();
    return fnv1a(s.data(), s.size());
}

void ExperimentSpec::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("spec: " + msg); };
    if (n_items < entries) fail("n_items must be >= rq.entries (k-means needs enough points)");
    if (depth == 0 || depth > 4) fail("depth must be in 1..4");
    if (branching < 2) fail("branching must be >= 2");
    if (emb_dim == 0) fail("emb_dim must be >= 1");
    if (noise < 0.0) fail("noise must be >= 0");
    if (n_users == 0) fail("n_users must be >= 1");
    if (len_lo < 3) fail("len_lo must be >= 3 (leave-one-out needs train/valid/test)");
    if (len_hi < len_lo) fail("len_hi must be >= len_lo");
    if (affinity < 0.0 || affinity > 1.0) fail("affinity must be in [0, 1]");
    if (history_window == 0) fail("history_window must be >= 1");
    if (levels == 0 || entries == 0) fail("rq.levels and rq.entries must be >= 1");
    if (sinkhorn_iterations == 0) fail("rq.sinkhorn_iterations must be >= 1");
    if (sinkhorn_epsilon <= 0.0) fail("rq.sinkhorn_epsilon must be > 0");
    if (model.n_layers == 0 || model.n_heads == 0) fail("model.layers and model.heads must be >= 1");
    if (model.d_model % model.n_heads != 0) fail("model.d_model must be divisible by model.heads");
    if (model.context == 0) fail("model.context must be >= 1");
    if (pretrain.batch == 0 || ground.batch == 0 || sft.batch == 0) fail("phase batch must be >= 1");
    if (eval_ks.empty()) fail("eval.ks must be non-empty");
    for (std::size_t k : eval_ks)
        if (k == 0) fail("eval.ks entries must be >= 1");
    if (beam == 0) fail("eval.beam must be >= 1");
    if (seeds.empty()) fail("seeds must be non-empty");
}

std::string Arm::name() const {
    std::string base = strategy == init::Kind::kGti ? "GTI" : "MI";
    std::string sft = mode == corpus::SftMode::kMultitask ? "Multi-task SFT" : "Vanilla SFT";
    std::string label = base + "+" + sft;
    if (strategy == init::Kind::kMean && mode == corpus::SftMode::kVanilla) label += " (Baseline)";
    if (strategy == init::Kind::kMean && mode == corpus::SftMode::kMultitask) label += " (LC-Rec)";
    return label;
}

std::string Arm::slug() const {
    std::string base = strategy == init::Kind::kGti ? "gti" : "mi";
    return base + (mode == corpus::SftMode::kMultitask ? "_multitask" : "_vanilla");
}

std::vector<Arm> default_arms() {
    return {{init::Kind::kMean, corpus::SftMode::kVanilla},
            {init::Kind::kMean, corpus::SftMode::kMultitask},
            {init::Kind::kGti, corpus::SftMode::kVanilla},
            {init::Kind::kGti, corpus::SftMode::kMultitask}};
}

const Arm& baseline_arm() {
    static const Arm arm{init::Kind::kMean, corpus::SftMode::kVanilla};
    return arm;
}

std::string data_dir(const std::string& out) { return (fs::path(out) / "data").string(); }
std::string rq_dir(const std::string& out) { return (fs::path(out) / "rq").string(); }
std::string seed_dir(const std::string& out, std::uint64_t seed) {
    return (fs::path(out) / ("seed" + std::to_string(seed))).string();
}
std::string arm_dir(const std::string& out, std::uint64_t seed, const Arm& arm) {
    return (fs::path(seed_dir(out, seed)) / arm.slug()).string();
}

void run_gen_data(const ExperimentSpec& spec, const std::string& out) {
    std::string dir = data_dir(out);
    fs::create_directories(dir);
    corpus::SyntheticCatalog catalog = corpus::generate_catalog(
        spec.n_items, spec.depth, spec.branching, spec.noise, spec.emb_dim, spec.data_seed);
    corpus::InteractionDataset inter = corpus::generate_interactions(
        catalog, spec.n_users, spec.len_lo, spec.len_hi, spec.affinity, interactions_seed(spec));
    corpus::save_catalog(catalog, (fs::path(dir) / "catalog.tsv").string());
    corpus::save_interactions(inter, (fs::path(dir) / "interactions.tsv").string());
    write_manifest(dir, spec, "-", {"catalog.tsv", "interactions.tsv"});
    log_line("gen-data", "\"items\":" + std::to_string(catalog.items.size()) +
                             ",\"users\":" + std::to_string(inter.histories.size()));
}

void run_fit_rq(const ExperimentSpec& spec, const std::string& out) {
    require_exists((fs::path(data_dir(out)) / "catalog.tsv").string(), "gen-data");
    std::string dir = rq_dir(out);
    fs::create_directories(dir);
    corpus::SyntheticCatalog catalog =
        corpus::load_catalog((fs::path(data_dir(out)) / "catalog.tsv").string());
    rq::ItemEmbeddings emb = catalog.embeddings();
    rq::CodebookStack cb = rq::fit_codebooks(emb.z, spec.levels, spec.entries, spec.data_seed);
    rq::save_codebooks(cb, spec.data_seed, (fs::path(dir) / "codebooks.txt").string());
    write_manifest(dir, spec, "-", {"codebooks.txt"});
    log_line("fit-rq", "\"levels\":" + std::to_string(cb.levels) +
                           ",\"entries\":" + std::to_string(cb.entries));
}

void run_assign_sids(const ExperimentSpec& spec, const std::string& out) {
    std::string dir = rq_dir(out);
    require_exists((fs::path(dir) / "codebooks.txt").string(), "fit-rq");
    corpus::SyntheticCatalog catalog =
        corpus::load_catalog((fs::path(data_dir(out)) / "catalog.tsv").string());
    rq::CodebookStack cb = rq::load_codebooks((fs::path(dir) / "codebooks.txt").string());
    rq::SinkhornParams sp{spec.sinkhorn_iterations, spec.sinkhorn_epsilon};
    rq::SidMap sids = rq::assign_all(catalog.embeddings(), cb, sp);
    if (sids.suffixed > spec.suffixes)
        throw std::runtime_error("assign-sids: needs " + std::to_string(sids.suffixed) +
                                 " suffix tokens but rq.suffixes = " + std::to_string(spec.suffixes));
    rq::save_sid_map(sids, (fs::path(dir) / "sid_map.txt").string());

    rq::UtilizationReport stats = rq::codebook_stats(sids, spec.levels, spec.entries);
    {
        std::ofstream f((fs::path(dir) / "stats.csv").string(), std::ios::binary);
        f << "level,perplexity";
        for (std::size_t k = 0; k < spec.entries; ++k) f << ",code" << k;
        f << '\n';
        char buf[64];
        for (std::size_t l = 0; l < spec.levels; ++l) {
            std::snprintf(buf, sizeof buf, "%.17g", stats.perplexity[l]);
            f << l << ',' << buf;
            for (std::size_t k = 0; k < spec.entries; ++k) f << ',' << stats.usage[l][k];
            f << '\n';
        }
        if (!f) throw std::runtime_error("assign-sids: write failed: stats.csv");
    }
    write_manifest(dir, spec, "-", {"codebooks.txt", "sid_map.txt", "stats.csv"});
    log_line("assign-sids", "\"collisions\":" + std::to_string(sids.greedy_collisions) +
                                ",\"rerouted\":" + std::to_string(sids.rerouted) +
                                ",\"suffixed\":" + std::to_string(sids.suffixed));
}

namespace {

corpus::SyntheticCatalog load_catalog_for(const std::string& out) {
    std::string path = (fs::path(data_dir(out)) / "catalog.tsv").string();
    require_exists(path, "gen-data");
    return corpus::load_catalog(path);
}

corpus::InteractionDataset load_interactions_for(const std::string& out) {
    std::string path = (fs::path(data_dir(out)) / "interactions.tsv").string();
    require_exists(path, "gen-data");
    return corpus::load_interactions(path);
}

rq::SidMap load_sids_for(const std::string& out) {
    std::string path = (fs::path(rq_dir(out)) / "sid_map.txt").string();
    require_exists(path, "assign-sids");
    return rq::load_sid_map(path);
}

rq::CodebookStack load_codebooks_for(const std::string& out) {
    std::string path = (fs::path(rq_dir(out)) / "codebooks.txt").string();
    require_exists(path, "fit-rq");
    return rq::load_codebooks(path);
}

} // namespace

void run_pretrain(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed) {
    corpus::SyntheticCatalog catalog = load_catalog_for(out);
    std::string dir = seed_dir(out, seed);
    fs::create_directories(dir);

    ModelParams model = make_model(spec.model, seed);
    std::vector<TokenSequence> data =
        corpus::build_pretrain_corpus(catalog, model.vocab, spec.model.context);

    train::TrainConfig cfg;
    cfg.phase = train::Phase::kPretrain;
    cfg.steps = spec.pretrain.steps;
    cfg.batch = spec.pretrain.batch;
    cfg.lr = spec.pretrain.lr;
    cfg.seed = seed;
    train::RunRecord rec = train::run_phase(model, data, cfg);
    if (rec.aborted) throw std::runtime_error("pretrain: diverged (non-finite loss)");

    save_checkpoint(model, (fs::path(dir) / "pretrain.ckpt").string());
    train::save_run_record(rec, (fs::path(dir) / "pretrain_record.txt").string());
    write_manifest(dir, spec, std::to_string(seed), {"pretrain.ckpt", "pretrain_record.txt"});
    double last = rec.step_loss.empty() ? 0.0 : rec.step_loss.back();
    log_line("pretrain", "\"seed\":" + std::to_string(seed) +
                             ",\"steps\":" + std::to_string(rec.step_loss.size()) +
                             ",\"final_loss\":" + std::to_string(last));
}

void run_extend(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed) {
    std::string dir = seed_dir(out, seed);
    std::string src = (fs::path(dir) / "pretrain.ckpt").string();
    require_exists(src, "pretrain");
    ModelParams model = load_checkpoint(src);
    extend_vocabulary(model, spec.levels, spec.entries, spec.suffixes, InitKind::kMean, seed);
    save_checkpoint(model, (fs::path(dir) / "extended_mean.ckpt").string());
    log_line("extend", "\"seed\":" + std::to_string(seed) +
                           ",\"vocab\":" + std::to_string(model.p.vocab_size));
}

void run_ground(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed) {
    std::string dir = seed_dir(out, seed);
    std::string src = (fs::path(dir) / "extended_mean.ckpt").string();
    require_exists(src, "extend");
    corpus::SyntheticCatalog catalog = load_catalog_for(out);
    rq::SidMap sids = load_sids_for(out);
    ModelParams model = load_checkpoint(src);

    std::vector<corpus::GroundingExample> examples =
        corpus::build_grounding_corpus(catalog, sids, model.vocab, /*bidirectional=*/true);
    std::vector<TokenSequence> data;
    data.reserve(examples.size());
    for (auto& e : examples) data.push_back(std::move(e.seq));

    train::TrainConfig cfg;
    cfg.phase = train::Phase::kGround;
    cfg.steps = spec.ground.steps;
    cfg.batch = spec.ground.batch;
    cfg.lr = spec.ground.lr;
    cfg.seed = seed;
    train::RunRecord rec = train::run_phase(model, data, cfg);
    if (!rec.freeze_ok) throw std::runtime_error("ground: freeze contract violated");

    save_checkpoint(model, (fs::path(dir) / "grounded.ckpt").string());
    train::save_run_record(rec, (fs::path(dir) / "ground_record.txt").string());
    double last = rec.step_loss.empty() ? 0.0 : rec.step_loss.back();
    log_line("ground", "\"seed\":" + std::to_string(seed) +
                           ",\"steps\":" + std::to_string(rec.step_loss.size()) +
                           ",\"final_loss\":" + std::to_string(last));
}

void run_sft(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed,
             const Arm& arm) {
    std::string sdir = seed_dir(out, seed);
    std::string src = arm.strategy == init::Kind::kGti
                          ? (fs::path(sdir) / "grounded.ckpt").string()
                          : (fs::path(sdir) / "extended_mean.ckpt").string();
    require_exists(src, arm.strategy == init::Kind::kGti ? "ground" : "extend");
    corpus::SyntheticCatalog catalog = load_catalog_for(out);
    corpus::InteractionDataset inter = load_interactions_for(out);
    rq::SidMap sids = load_sids_for(out);
    ModelParams model = load_checkpoint(src);

    std::vector<corpus::SftExample> examples =
        corpus::build_sft_corpus(inter, catalog, sids, model.vocab, arm.mode,
                                 corpus::Split::kTrain, spec.history_window);
    std::vector<TokenSequence> data;
    data.reserve(examples.size());
    for (auto& e : examples) data.push_back(std::move(e.seq));

    train::TrainConfig cfg;
    cfg.phase = train::Phase::kSft;
    cfg.steps = spec.sft.steps;
    cfg.batch = spec.sft.batch;
    cfg.lr = spec.sft.lr;
    cfg.seed = seed;
    train::RunRecord rec = train::run_phase(model, data, cfg);
    if (rec.aborted) throw std::runtime_error("sft: diverged (non-finite loss)");

    std::string dir = arm_dir(out, seed, arm);
    fs::create_directories(dir);
    save_checkpoint(model, (fs::path(dir) / "sft.ckpt").string());
    train::save_run_record(rec, (fs::path(dir) / "sft_record.txt").string());
    double last = rec.step_loss.empty() ? 0.0 : rec.step_loss.back();
    log_line("sft", "\"seed\":" + std::to_string(seed) + ",\"arm\":\"" + arm.slug() +
                        "\",\"steps\":" + std::to_string(rec.step_loss.size()) +
                        ",\"final_loss\":" + std::to_string(last));
}

void run_eval(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed,
              const Arm& arm) {
    std::string dir = arm_dir(out, seed, arm);
    std::string src = (fs::path(dir) / "sft.ckpt").string();
    require_exists(src, "sft");
    corpus::SyntheticCatalog catalog = load_catalog_for(out);
    corpus::InteractionDataset inter = load_interactions_for(out);
    rq::SidMap sids = load_sids_for(out);
    ModelParams model = load_checkpoint(src);

    std::vector<corpus::EvalQuery> queries = corpus::build_eval_queries(
        inter, catalog, sids, model.vocab, corpus::Split::kTest, spec.history_window);
    decode::SidTrie trie = decode::SidTrie::build(sids, model.vocab);
    std::vector<decode::MetricRow> rows =
        decode::evaluate(model, queries, trie, spec.eval_ks, spec.beam);
    decode::save_metrics_csv(rows, arm.name(), (fs::path(dir) / "metrics.csv").string());
    write_manifest(dir, spec, std::to_string(seed), {"sft.ckpt", "sft_record.txt", "metrics.csv"});
    log_line("eval", "\"seed\":" + std::to_string(seed) + ",\"arm\":\"" + arm.slug() +
                         "\",\"queries\":" + std::to_string(queries.size()));
}

void run_diagnose(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed,
                  const Arm& arm) {
    std::string dir = arm_dir(out, seed, arm);
    std::string src = (fs::path(dir) / "sft.ckpt").string();
    require_exists(src, "sft");
    rq::CodebookStack cb = load_codebooks_for(out);
    ModelParams model = load_checkpoint(src);
    diag::DiagnosticsReport rep = diag::diagnose_checkpoint(model, &cb, spec.data_seed);
    diag::write_report(rep, (fs::path(dir) / "diag").string());
    log_line("diagnose", "\"seed\":" + std::to_string(seed) + ",\"arm\":\"" + arm.slug() +
                             "\",\"effective_rank\":" + std::to_string(rep.sid_effective_rank));
}

std::vector<MetricValue> load_metrics_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_metrics_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "arm,metric,k,mean,stderr,n_queries")
        throw std::runtime_error("load_metrics_csv: bad header in " + path);
    std::vector<MetricValue> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
                cells.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (cells.size() != 6) throw std::runtime_error("load_metrics_csv: bad row in " + path);
        MetricValue v;
        v.arm = cells[0];
        v.metric = cells[1];
        v.k = std::stoull(cells[2]);
        v.mean = std::stod(cells[3]);
        v.n_queries = std::stoull(cells[5]);
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

} // namespace

void run_report(const ExperimentSpec& spec, const std::string& out) {
    std::vector<Arm> arms = default_arms();
    // (arm slug, metric, k) -> per-seed means, in seed order
    std::map<std::tuple<std::string, std::string, std::size_t>, std::vector<double>> grid;
    std::map<std::string, std::string> arm_names;

    std::ostringstream ksweep;
    ksweep << "arm,seed,metric,k,value\n";
    char buf[64];
    for (const Arm& arm : arms) {
        arm_names[arm.slug()] = arm.name();
        for (std::uint64_t seed : spec.seeds) {
            std::string path = (fs::path(arm_dir(out, seed, arm)) / "metrics.csv").string();
            require_exists(path, "eval");
            for (const MetricValue& v : load_metrics_csv(path)) {
                grid[{arm.slug(), v.metric, v.k}].push_back(v.mean);
                std::snprintf(buf, sizeof buf, "%.17g", v.mean);
                ksweep << arm.slug() << ',' << seed << ',' << v.metric << ',' << v.k << ',' << buf
                       << '\n';
            }
        }
    }

    std::ostringstream report;
    report << "arm,metric,k,mean,median,rel_gain_pct\n";
    const std::string base_slug = baseline_arm().slug();
    for (const Arm& arm : arms) {
        for (const std::string& metric : {std::string("precision"), std::string("recall"),
                                          std::string("ndcg")}) {
            for (std::size_t k : spec.eval_ks) {
                const auto& vals = grid.at({arm.slug(), metric, k});
                const auto& base_vals = grid.at({base_slug, metric, k});
                double m = 0.0;
                for (double v : vals) m += v;
                m /= static_cast<double>(vals.size());
                double bm = 0.0;
                for (double v : base_vals) bm += v;
                bm /= static_cast<double>(base_vals.size());
                report << '"' << arm_names[arm.slug()] << "\"," << metric << ',' << k << ',';
                std::snprintf(buf, sizeof buf, "%.17g", m);
                report << buf << ',';
                std::snprintf(buf, sizeof buf, "%.17g", median(vals));
                report << buf << ',';
                auto gain = decode::relative_gain(m, bm);
                if (gain) {
                    std::snprintf(buf, sizeof buf, "%.2f", *gain);
                    report << buf;
                } else {
                    report << "n/a";
                }
                report << '\n';
            }
        }
    }

    // Geometry summary from the per-arm diagnostics reports.
    std::ostringstream geom;
    geom << "arm,seed,effective_rank,thresholded_rank,rsa_pearson_r,rsa_spearman_rho\n";
    for (const Arm& arm : arms) {
        for (std::uint64_t seed : spec.seeds) {
            fs::path diag_dir = fs::path(arm_dir(out, seed, arm)) / "diag";
            require_exists((diag_dir / "erank.csv").string(), "diagnose");
            std::ifstream ef((diag_dir / "erank.csv").string());
            std::string line, erank = "0", trank = "0";
            std::getline(ef, line);
            while (std::getline(ef, line)) {
                auto comma = line.find(',');
                std::string key = line.substr(0, comma), val = line.substr(comma + 1);
                if (key == "entropy_effective_rank") erank = val;
                if (key == "thresholded_rank_tau_0.01") trank = val;
            }
            std::ifstream rf((diag_dir / "rsa.csv").string());
            std::getline(rf, line);
            std::getline(rf, line);
            std::vector<std::string> cells;
            std::size_t start = 0;
            for (std::size_t i = 0; i <= line.size(); ++i) {
                if (i == line.size() || line[i] == ',') {
                    cells.push_back(line.substr(start, i - start));
                    start = i + 1;
                }
            }
            std::string r = cells.size() > 2 && cells[0] == "1" ? cells[1] : "";
            std::string rho = cells.size() > 2 && cells[0] == "1" ? cells[2] : "";
            geom << arm.slug() << ',' << seed << ',' << erank << ',' << trank << ',' << r << ','
                 << rho << '\n';
        }
    }

    auto write = [&](const char* name, const std::string& body) {
        std::ofstream f((fs::path(out) / name).string(), std::ios::binary);
        if (!f) throw std::runtime_error(std::string("report: cannot open ") + name);
        f << body;
        if (!f) throw std::runtime_error(std::string("report: write failed: ") + name);
    };
    write("report.csv", report.str());
    write("ksweep.csv", ksweep.str());
    write("geometry.csv", geom.str());
    write_manifest(out, spec, "-", {"report.csv", "ksweep.csv", "geometry.csv"});
    log_line("report", "\"arms\":" + std::to_string(arms.size()) +
                           ",\"seeds\":" + std::to_string(spec.seeds.size()));
}

void run_all(const ExperimentSpec& spec, const std::string& out, std::size_t jobs) {
    (void)jobs; // arms run serially; every stage is deterministic regardless
    run_gen_data(spec, out);
    run_fit_rq(spec, out);
    run_assign_sids(spec, out);
    for (std::uint64_t seed : spec.seeds) {
        run_pretrain(spec, out, seed);
        run_extend(spec, out, seed);
        run_ground(spec, out, seed);
        for (const Arm& arm : default_arms()) {
            run_sft(spec, out, seed, arm);
            run_eval(spec, out, seed, arm);
            run_diagnose(spec, out, seed, arm);
        }
    }
    run_report(spec, out);
}

} // namespace gti::exp
