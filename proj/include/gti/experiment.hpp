#pragma once

#include "gti/corpus.hpp"
#include "gti/decode.hpp"
#include "gti/init.hpp"
#include "gti/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gti::exp {

struct PhaseSpec {
    std::size_t steps = 0;
    std::size_t batch = 16;
    double lr = 0.1;
};

// Declarative run configuration; JSON on disk, every field defaulted, unknown
// keys rejected.
struct ExperimentSpec {
    // synthetic data
    std::size_t n_items = 64;
    std::size_t depth = 2;
    std::size_t branching = 4;
    std::size_t emb_dim = 16;
    double noise = 0.05;
    std::size_t n_users = 128;
    std::size_t len_lo = 5;
    std::size_t len_hi = 9;
    double affinity = 0.85;
    std::size_t history_window = 4;
    std::uint64_t data_seed = 7;

    // residual quantizer
    std::size_t levels = 4;
    std::size_t entries = 8;
    std::size_t suffixes = 8;
    std::size_t sinkhorn_iterations = 200;
    double sinkhorn_epsilon = 0.05;

    ModelConfig model;

    PhaseSpec pretrain{1000, 16, 0.1};
    PhaseSpec ground{600, 16, 0.5};
    PhaseSpec sft{400, 16, 0.03};

    std::vector<std::size_t> eval_ks{1, 5, 10, 20};
    std::size_t beam = 24;

    std::vector<std::uint64_t> seeds{1, 2, 3};

    static ExperimentSpec from_json_file(const std::string& path);
    static ExperimentSpec from_json_text(const std::string& text);
    std::string to_json() const;          // canonical form, used for hashing
    std::uint64_t content_hash() const;
    void validate() const;                // throws std::invalid_argument
};

struct Arm {
    init::Kind strategy = init::Kind::kMean; // kMean or kGti
    corpus::SftMode mode = corpus::SftMode::kVanilla;

    std::string name() const; // report label, e.g. "GTI+Vanilla SFT"
    std::string slug() const; // filesystem-safe, e.g. "gti_vanilla"
};

// Grid order: baseline first (it anchors the relative gains).
std::vector<Arm> default_arms();
const Arm& baseline_arm();

// Stage entry points. Each writes its outputs (plus a manifest) under `out`
// and is deterministic given spec + inputs. Later stages load the files the
// earlier ones wrote.
void run_gen_data(const ExperimentSpec& spec, const std::string& out);
void run_fit_rq(const ExperimentSpec& spec, const std::string& out);
void run_assign_sids(const ExperimentSpec& spec, const std::string& out);
void run_pretrain(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed);
void run_extend(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed);
void run_ground(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed);
void run_sft(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed, const Arm& arm);
void run_eval(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed,
              const Arm& arm);
void run_diagnose(const ExperimentSpec& spec, const std::string& out, std::uint64_t seed,
                  const Arm& arm);
void run_report(const ExperimentSpec& spec, const std::string& out);
void run_all(const ExperimentSpec& spec, const std::string& out, std::size_t jobs = 1);

// Directory layout helpers (relative to `out`).
std::string data_dir(const std::string& out);
std::string rq_dir(const std::string& out);
std::string seed_dir(const std::string& out, std::uint64_t seed);
std::string arm_dir(const std::string& out, std::uint64_t seed, const Arm& arm);

// Parsed back out of an arm's metrics.csv.
struct MetricValue {
    std::string arm;
    std::string metric;
    std::size_t k = 0;
    double mean = 0.0;
    std::size_t n_queries = 0;
};

std::vector<MetricValue> load_metrics_csv(const std::string& path);

} // namespace gti::exp
