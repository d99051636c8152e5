#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "change/attack.hpp"
#include "change/graph.hpp"

namespace change {

// One labeled example; text_b is empty for single-sentence tasks.
struct Example {
    int id = 0;
    std::string text_a;
    std::string text_b;
    int label = 0;
};

struct DatasetSplit {
    std::vector<Example> items;

    bool empty() const { return items.empty(); }
    std::size_t size() const { return items.size(); }
};

struct LabeledDataset {
    std::string name;
    int num_classes = 2;
    bool is_pair = false;
    DatasetSplit train, dev, test;
    std::string provenance = "clean";
};

// Perturbs dev and test texts through the variation graph; train and labels
// untouched, example ids retained so attacked rows align with clean parents.
LabeledDataset attack_dataset(const LabeledDataset& clean, const VariationGraph& g,
                              const AttackPolicy& policy, std::uint64_t seed);

nlohmann::json to_json(const Example& e, bool is_pair);
Example example_from_json(const nlohmann::json& j, bool is_pair);
void save_split(const DatasetSplit& split, bool is_pair, std::ostream& out);
DatasetSplit load_split(std::istream& in, bool is_pair);
DatasetSplit load_split_file(const std::string& path, bool is_pair);

// --- synthetic tasks ----------------------------------------------------------

// Desk-scale stand-ins for the three evaluation tasks, generated from the
// bundled character table: keyword-defined topic classification, same-topic
// pair matching, and keyword-triggered toxic detection. `corpus` is the
// matching unlabeled sentence stream used for language-model pretraining.
struct SyntheticTasks {
    LabeledDataset topic;
    LabeledDataset pairing;
    LabeledDataset toxic;
    std::vector<std::string> corpus;
};

struct SyntheticConfig {
    int train_size = 2000;
    int dev_size = 250;
    int test_size = 250;
    int corpus_sentences = 3000;
    int topic_classes = 4;
};

SyntheticTasks make_synthetic_tasks(const PinyinTable& table, const VariationGraph& g,
                                    std::uint64_t seed, const SyntheticConfig& cfg = {});

// --- metrics --------------------------------------------------------------------

// Confusion-count-backed metrics. For binary tasks precision/recall/micro-F1
// are the positive-class values; for multiclass, micro-F1 uses global counts
// and precision/recall are macro averages.
struct MetricsReport {
    int num_classes = 0;
    std::vector<std::vector<std::int64_t>> confusion;  // [gold][pred]
    double macro_f1 = 0, micro_f1 = 0, precision = 0, recall = 0;

    static MetricsReport from_confusion(std::vector<std::vector<std::int64_t>> confusion);
    static MetricsReport from_predictions(const std::vector<int>& gold,
                                          const std::vector<int>& pred, int num_classes);
    // tn is only needed to fill the confusion matrix; the headline binary
    // metrics derive from tp/fp/fn.
    static MetricsReport from_binary_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                            std::int64_t tn);

    nlohmann::json to_json() const;
};

}  // namespace change
