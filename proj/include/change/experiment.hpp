#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "change/config.hpp"
#include "change/data.hpp"
#include "change/model.hpp"
#include "change/tasks.hpp"

namespace change {

// Full pipeline configuration: data generation, base language-model training,
// graph-instructed pretraining, per-method fine-tuning, Clean/Att evaluation.
struct ExperimentConfig {
    std::string task = "topic";  // topic | pairing | toxic
    std::uint64_t seed = 42;

    std::string pinyin_path;   // bundled table paths
    std::string similar_path;
    std::string graph_path;    // optional explicit graph TSV; overrides tables

    SyntheticConfig synth;
    EncoderConfig model;       // vocab_size/num_classes filled in by the run

    AttackPolicy pretrain_attack;  // corpus construction
    int false_paths = 2;
    AttackPolicy eval_attack;      // Att setting

    MlmTrainConfig mlm;
    PretrainConfig pretrain;
    FinetuneConfig finetune;

    bool run_base = true;
    bool run_cvgi = true;
    bool run_change = true;

    std::uint64_t config_hash = 0;  // filled from the KvConfig it was parsed from

    static ExperimentConfig from_kv(const KvConfig& kv);
};

struct MethodResults {
    Mode mode = Mode::Base;
    MetricsReport clean_test, att_test;
    MetricsReport clean_dev, att_dev;
    FinetuneOutcome finetune;
};

struct ExperimentResult {
    std::vector<MethodResults> methods;
    std::string report_table;   // human-readable
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

// Runs the whole pipeline, writing checkpoints, metrics logs, report.txt and
// results.jsonl into out_dir. Deterministic for fixed seeds (single thread).
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::ostream* progress = nullptr);

std::string render_report_table(const ExperimentResult& result);
void write_results_jsonl(const ExperimentResult& result, std::ostream& out);

}  // namespace change
