#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "change/attack.hpp"
#include "change/data.hpp"
#include "change/model.hpp"
#include "change/reconstruct.hpp"
#include "change/vocab.hpp"

namespace change {

// --- label / masking construction ------------------------------------------------

// Token index (into the [CLS]-prefixed encoding of sample.attacked) of each
// record's observed token; CharToPinyin variants map to their merged syllable
// token.
std::vector<int> record_anchor_tokens(const AttackedSample& sample, const Vocabulary& v);

// Binary attacked/normal labels over the raw-text positions of `base`.
struct AtpLabels {
    std::vector<std::pair<int, int>> labels;  // (token position, 0/1)
};

AtpLabels build_atp_labels(const TokenSequence& base, const std::vector<int>& attacked_positions);

struct MlmTarget {
    std::vector<std::pair<int, int>> targets;  // (position, original token id)
};

// Masking-count law shared by AMP and ACP: above the path-count threshold,
// ceil(fraction * count) tokens; otherwise one (zero when there are no spans).
int masked_count(int span_count, int threshold, double fraction);

// Selects method (marker-open) tokens of r to mask; targets carry the marker
// ids to predict.
MlmTarget amp_masking(const ReconstructedInput& r, int threshold, double fraction, Rng& rng);
// Selects candidate tokens of r to mask; targets carry the candidate ids.
MlmTarget acp_masking(const ReconstructedInput& r, int threshold, double fraction, Rng& rng);

void apply_mlm_target(std::vector<int>& ids, const MlmTarget& target);

// --- pretraining -----------------------------------------------------------------

struct PretrainConfig {
    double w_atp = 1.0, w_amp = 1.0, w_acp = 1.0;
    double mask_fraction = 0.15;
    int path_threshold = 6;
    int steps = 2000;
    int batch_size = 64;
    double lr = 1e-4;
    int warmup_steps = 2000;
    std::uint64_t seed = 42;
    int log_every = 50;
    int length_cap = 192;
};

struct StepLog {
    std::int64_t step = 0;
    double total = 0, atp = 0, amp = 0, acp = 0, mlm = 0, cls = 0;
    double lr = 0;
};

struct TrainLog {
    std::vector<StepLog> entries;
};

void write_step_log(std::ostream& out, const StepLog& entry);

// Sample reconstructed with its true and false attacking paths, plus the 2D
// mask and ATP labels; masking is re-drawn per step, everything else is fixed.
struct PretrainExample {
    ReconstructedInput rec;
    AttentionMask2D mask;
    std::vector<std::pair<int, int>> atp_labels;
};

PretrainExample build_pretrain_example(const PretrainSample& sample, const Vocabulary& v,
                                       int length_cap);

// Joint ATP+AMP+ACP training with Adam and linear warmup. Validates sample
// records against the graph. Deterministic for a fixed config in
// single-threaded use. Throws DataError on divergence (with the step number).
TrainLog pretrain(EncoderModel& model, const std::vector<PretrainSample>& corpus,
                  const VariationGraph& g, const Vocabulary& v, const PretrainConfig& cfg,
                  std::ostream* metrics_out = nullptr);

// Plain masked-language-model training on clean sentences; used to produce
// the base language model that RAT scoring relies on. Selected positions are
// replaced by [MASK] / a random token / kept, per the corruption split.
struct MlmTrainConfig {
    int steps = 1000;
    int batch_size = 32;
    double lr = 3e-4;
    int warmup_steps = 100;
    double mask_fraction = 0.15;
    double mask_prob = 0.8;    // of selected positions
    double random_prob = 0.1;  // replaced by a random token
    std::uint64_t seed = 7;
    int log_every = 50;
};

TrainLog train_mlm(EncoderModel& model, const std::vector<std::string>& sentences,
                   const Vocabulary& v, const MlmTrainConfig& cfg,
                   std::ostream* metrics_out = nullptr);

// --- fine-tuning / inference -------------------------------------------------------

enum class Mode { Base, Cvgi, Change };

std::string_view mode_name(Mode m);
std::optional<Mode> mode_from_name(std::string_view s);

struct CvgiOptions {
    double k_percent = 15.0;
    int max_paths_per_token = 4;
    int length_cap = 192;
    bool per_position_remask = false;
};

struct PreparedInput {
    std::vector<int> ids;
    AttentionMask2D mask;
};

// BASE: plain [CLS] text [SEP] with full attention. CVGI/CHANGE: RAT scoring
// with `scorer`, path retrieval from `g`, reconstruction and the 2D mask.
PreparedInput prepare_input(const Example& ex, bool is_pair, Mode mode, const Vocabulary& v,
                            const VariationGraph* g, const EncoderModel* scorer,
                            const CvgiOptions& opts);

struct FinetuneConfig {
    int max_epochs = 10;
    int batch_size = 16;
    double lr = 3e-4;
    int warmup_steps = 50;
    std::uint64_t seed = 1;
    bool early_stop = true;
    int patience = 2;
    CvgiOptions cvgi;
};

struct FinetuneOutcome {
    double best_dev_macro_f1 = 0;
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<double> dev_curve;
};

// Classification fine-tuning with per-epoch dev evaluation and early stop;
// the model is left at its best-dev parameters. BASE mode accepts null graph
// and scorer.
FinetuneOutcome finetune(EncoderModel& model, const LabeledDataset& data, Mode mode,
                         const VariationGraph* g, const EncoderModel* scorer,
                         const Vocabulary& v, const FinetuneConfig& cfg,
                         std::ostream* log = nullptr);

MetricsReport evaluate_split(const EncoderModel& model, Mode mode, const VariationGraph* g,
                             const EncoderModel* scorer, const Vocabulary& v, bool is_pair,
                             const DatasetSplit& split, const CvgiOptions& opts);

}  // namespace change
