#include "change/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "change/utf8.hpp"

namespace change {

std::vector<int> record_anchor_tokens(const AttackedSample& sample, const Vocabulary& v) {
    auto segments = v.segment(sample.attacked);
    // codepoint start offset of each token
    std::vector<int> token_at_cp;
    for (std::size_t t = 0; t < segments.size(); ++t) {
        std::size_t len = utf8_length(segments[t]);
        for (std::size_t k = 0; k < len; ++k) token_at_cp.push_back(static_cast<int>(t));
    }
    std::vector<int> anchors;
    for (const auto& [start, len] : attacked_spans(sample)) {
        (void)len;
        if (start < 0 || start >= static_cast<int>(token_at_cp.size())) {
            throw DataError("attack record outside attacked text");
        }
        anchors.push_back(1 + token_at_cp[static_cast<std::size_t>(start)]);  // +1 for [CLS]
    }
    return anchors;
}

AtpLabels build_atp_labels(const TokenSequence& base, const std::vector<int>& attacked_positions) {
    AtpLabels out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        if (base.tags[i] != SegTag::RawText) continue;
        bool hit = std::find(attacked_positions.begin(), attacked_positions.end(),
                             static_cast<int>(i)) != attacked_positions.end();
        out.labels.emplace_back(static_cast<int>(i), hit ? 1 : 0);
    }
    return out;
}

int masked_count(int span_count, int threshold, double fraction) {
    if (span_count <= 0) return 0;
    if (span_count > threshold) {
        return static_cast<int>(std::ceil(fraction * static_cast<double>(span_count) - 1e-9));
    }
    return 1;
}

static MlmTarget mask_span_tokens(const ReconstructedInput& r, int threshold, double fraction,
                                  Rng& rng, int offset_in_span) {
    MlmTarget out;
    int count = masked_count(static_cast<int>(r.spans.size()), threshold, fraction);
    if (count == 0) return out;
    std::vector<int> span_idx(r.spans.size());
    std::iota(span_idx.begin(), span_idx.end(), 0);
    for (int i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                        span_idx.size() - 1);
        std::swap(span_idx[static_cast<std::size_t>(i)], span_idx[pick(rng)]);
    }
    span_idx.resize(static_cast<std::size_t>(count));
    std::sort(span_idx.begin(), span_idx.end());
    for (int s : span_idx) {
        int pos = r.base_length + 3 * s + offset_in_span;
        out.targets.emplace_back(pos, r.tokens.ids[static_cast<std::size_t>(pos)]);
    }
    return out;
}

MlmTarget amp_masking(const ReconstructedInput& r, int threshold, double fraction, Rng& rng) {
    return mask_span_tokens(r, threshold, fraction, rng, 0);
}

MlmTarget acp_masking(const ReconstructedInput& r, int threshold, double fraction, Rng& rng) {
    return mask_span_tokens(r, threshold, fraction, rng, 1);
}

void apply_mlm_target(std::vector<int>& ids, const MlmTarget& target) {
    for (const auto& [pos, original] : target.targets) {
        (void)original;
        ids[static_cast<std::size_t>(pos)] = kMaskId;
    }
}

PretrainExample build_pretrain_example(const PretrainSample& sample, const Vocabulary& v,
                                       int length_cap) {
    PretrainExample ex;
    TokenSequence base = make_input(v, sample.base.attacked);
    auto anchors = record_anchor_tokens(sample.base, v);

    std::vector<AttackingPathSpan> spans;
    for (std::size_t i = 0; i < sample.base.records.size(); ++i) {
        const auto& rec = sample.base.records[i];
        int cid = v.id_of(rec.original);
        if (cid < 0) continue;
        spans.push_back({anchors[i], rec.rel, rec.original, cid});
    }
    // false paths share anchors with the true record at the same position
    for (const auto& fp : sample.false_paths) {
        auto it = std::find_if(sample.base.records.begin(), sample.base.records.end(),
                               [&](const AttackRecord& r) { return r.position == fp.position; });
        if (it == sample.base.records.end()) {
            throw DataError("false path not anchored at an attacked position");
        }
        std::size_t rec_idx = static_cast<std::size_t>(it - sample.base.records.begin());
        int cid = v.id_of(fp.variant);
        if (cid < 0) continue;
        spans.push_back({anchors[rec_idx], fp.rel, fp.variant, cid});
    }

    ex.rec = reconstruct(base, std::move(spans), length_cap);
    ex.mask = build_attention_mask(ex.rec);
    ex.atp_labels = build_atp_labels(base, anchors).labels;
    return ex;
}

void write_step_log(std::ostream& out, const StepLog& e) {
    out << "{\"step\":" << e.step << ",\"total\":" << e.total << ",\"atp\":" << e.atp
        << ",\"amp\":" << e.amp << ",\"acp\":" << e.acp << ",\"mlm\":" << e.mlm
        << ",\"cls\":" << e.cls << ",\"lr\":" << e.lr << "}\n";
}

TrainLog pretrain(EncoderModel& model, const std::vector<PretrainSample>& corpus,
                  const VariationGraph& g, const Vocabulary& v, const PretrainConfig& cfg,
                  std::ostream* metrics_out) {
    if (corpus.empty()) throw DataError("pretrain: empty corpus");
    for (const auto& s : corpus) {
        for (const auto& rec : s.base.records) {
            if (!g.contains(rec.original, rec.rel, rec.variant)) {
                throw DataError("pretrain: corpus record not in graph: " + rec.original + "->" +
                                rec.variant);
            }
        }
    }

    std::vector<PretrainExample> prepared;
    prepared.reserve(corpus.size());
    for (const auto& s : corpus) prepared.push_back(build_pretrain_example(s, v, cfg.length_cap));

    TrainLog log;
    AdamState adam(model);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Rng rng = make_rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, prepared.size() - 1);

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<LossSpec> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            const PretrainExample& ex = prepared[pick(rng)];
            LossSpec spec;
            spec.ids = ex.rec.tokens.ids;
            spec.mask = ex.mask;
            spec.w_atp = cfg.w_atp;
            spec.w_amp = cfg.w_amp;
            spec.w_acp = cfg.w_acp;
            spec.atp_labels = ex.atp_labels;
            if (cfg.w_amp > 0) {
                MlmTarget amp = amp_masking(ex.rec, cfg.path_threshold, cfg.mask_fraction, rng);
                apply_mlm_target(spec.ids, amp);
                spec.amp_targets = std::move(amp.targets);
            }
            if (cfg.w_acp > 0) {
                MlmTarget acp = acp_masking(ex.rec, cfg.path_threshold, cfg.mask_fraction, rng);
                apply_mlm_target(spec.ids, acp);
                spec.acp_targets = std::move(acp.targets);
            }
            batch.push_back(std::move(spec));
        }
        model.zero_grads();
        LossBreakdown loss;
        try {
            loss = loss_and_gradients(model, batch, &rng);
        } catch (const DataError& e) {
            throw DataError("pretrain diverged at step " + std::to_string(step) + ": " + e.what());
        }
        double scale = warmup_lr_scale(step, cfg.warmup_steps);
        adam.step(model, adam_cfg, scale);

        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            StepLog entry{step, loss.total, loss.atp, loss.amp, loss.acp, loss.mlm, loss.cls,
                          adam_cfg.lr * scale};
            if (metrics_out) write_step_log(*metrics_out, entry);
            log.entries.push_back(entry);
        }
    }
    return log;
}

TrainLog train_mlm(EncoderModel& model, const std::vector<std::string>& sentences,
                   const Vocabulary& v, const MlmTrainConfig& cfg, std::ostream* metrics_out) {
    if (sentences.empty()) throw DataError("train_mlm: empty corpus");
    std::vector<std::vector<int>> encoded;
    encoded.reserve(sentences.size());
    for (const auto& s : sentences) {
        TokenSequence seq = make_input(v, s);
        if (static_cast<int>(seq.size()) > model.config().max_len) {
            seq.ids.resize(static_cast<std::size_t>(model.config().max_len));
        }
        encoded.push_back(std::move(seq.ids));
    }

    TrainLog log;
    AdamState adam(model);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Rng rng = make_rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, encoded.size() - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> random_token(kNumReserved, v.size() - 1);

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<LossSpec> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::vector<int>& ids = encoded[pick(rng)];
            LossSpec spec;
            spec.ids = ids;
            int n = static_cast<int>(ids.size());
            spec.mask = AttentionMask2D::full(n);
            spec.w_mlm = 1.0;

            std::vector<int> positions;
            for (int i = 0; i < n; ++i) {
                if (ids[static_cast<std::size_t>(i)] != kClsId &&
                    ids[static_cast<std::size_t>(i)] != kSepId) {
                    positions.push_back(i);
                }
            }
            if (positions.empty()) continue;
            int count = std::max<int>(
                1, static_cast<int>(std::lround(cfg.mask_fraction *
                                                static_cast<double>(positions.size()))));
            count = std::min<int>(count, static_cast<int>(positions.size()));
            for (int i = 0; i < count; ++i) {
                std::uniform_int_distribution<std::size_t> swap_pick(static_cast<std::size_t>(i),
                                                                     positions.size() - 1);
                std::swap(positions[static_cast<std::size_t>(i)], positions[swap_pick(rng)]);
            }
            for (int i = 0; i < count; ++i) {
                int pos = positions[static_cast<std::size_t>(i)];
                int original = spec.ids[static_cast<std::size_t>(pos)];
                double r = coin(rng);
                if (r < cfg.mask_prob) {
                    spec.ids[static_cast<std::size_t>(pos)] = kMaskId;
                } else if (r < cfg.mask_prob + cfg.random_prob) {
                    spec.ids[static_cast<std::size_t>(pos)] = random_token(rng);
                }  // else keep the original token
                spec.mlm_targets.emplace_back(pos, original);
            }
            batch.push_back(std::move(spec));
        }
        if (batch.empty()) continue;
        model.zero_grads();
        LossBreakdown loss;
        try {
            loss = loss_and_gradients(model, batch, &rng);
        } catch (const DataError& e) {
            throw DataError("train_mlm diverged at step " + std::to_string(step) + ": " + e.what());
        }
        double scale = warmup_lr_scale(step, cfg.warmup_steps);
        adam.step(model, adam_cfg, scale);
        if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
            StepLog entry{step, loss.total, loss.atp, loss.amp, loss.acp, loss.mlm, loss.cls,
                          adam_cfg.lr * scale};
            if (metrics_out) write_step_log(*metrics_out, entry);
            log.entries.push_back(entry);
        }
    }
    return log;
}

std::string_view mode_name(Mode m) {
    switch (m) {
        case Mode::Base: return "BASE";
        case Mode::Cvgi: return "CVGI";
        case Mode::Change: return "CHANGE";
    }
    return "?";
}

std::optional<Mode> mode_from_name(std::string_view s) {
    if (s == "BASE" || s == "base") return Mode::Base;
    if (s == "CVGI" || s == "cvgi") return Mode::Cvgi;
    if (s == "CHANGE" || s == "change") return Mode::Change;
    return std::nullopt;
}

PreparedInput prepare_input(const Example& ex, bool is_pair, Mode mode, const Vocabulary& v,
                            const VariationGraph* g, const EncoderModel* scorer,
                            const CvgiOptions& opts) {
    TokenSequence base = is_pair ? make_pair_input(v, ex.text_a, ex.text_b)
                                 : make_input(v, ex.text_a);
    if (mode == Mode::Base) {
        return {base.ids, AttentionMask2D::full(static_cast<int>(base.size()))};
    }
    if (g == nullptr) throw DataError("CVGI input preparation requires a variation graph");
    if (scorer == nullptr) throw DataError("CVGI input preparation requires a scorer model");

    TokenProbabilities probs = lm_token_probabilities(*scorer, base, opts.per_position_remask);
    std::vector<int> flagged = recognize_attacked_tokens(probs, base, opts.k_percent);
    std::vector<AttackingPathSpan> spans =
        retrieve_paths(flagged, base, v, *g, opts.max_paths_per_token);
    ReconstructedInput rec = reconstruct(base, std::move(spans), opts.length_cap);
    AttentionMask2D mask = build_attention_mask(rec);
    return {rec.tokens.ids, std::move(mask)};
}

static std::vector<PreparedInput> prepare_split(const DatasetSplit& split, bool is_pair, Mode mode,
                                                const Vocabulary& v, const VariationGraph* g,
                                                const EncoderModel* scorer,
                                                const CvgiOptions& opts) {
    std::vector<PreparedInput> out;
    out.reserve(split.size());
    for (const auto& ex : split.items) {
        out.push_back(prepare_input(ex, is_pair, mode, v, g, scorer, opts));
    }
    return out;
}

static MetricsReport eval_prepared(const EncoderModel& model,
                                   const std::vector<PreparedInput>& inputs,
                                   const DatasetSplit& split, int num_classes) {
    std::vector<int> gold, pred;
    ForwardOptions opts;
    opts.mlm = false;
    opts.cls = true;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        ForwardOutput fwd = model.forward(inputs[i].ids, inputs[i].mask, opts);
        Eigen::Index argmax = 0;
        fwd.cls_logits.maxCoeff(&argmax);
        pred.push_back(static_cast<int>(argmax));
        gold.push_back(split.items[i].label);
    }
    return MetricsReport::from_predictions(gold, pred, num_classes);
}

MetricsReport evaluate_split(const EncoderModel& model, Mode mode, const VariationGraph* g,
                             const EncoderModel* scorer, const Vocabulary& v, bool is_pair,
                             const DatasetSplit& split, const CvgiOptions& opts) {
    if (split.empty()) throw DataError("evaluate: empty split");
    auto prepared = prepare_split(split, is_pair, mode, v, g, scorer, opts);
    return eval_prepared(model, prepared, split, model.config().num_classes);
}

FinetuneOutcome finetune(EncoderModel& model, const LabeledDataset& data, Mode mode,
                         const VariationGraph* g, const EncoderModel* scorer, const Vocabulary& v,
                         const FinetuneConfig& cfg, std::ostream* log) {
    if (data.train.empty() || data.dev.empty()) {
        throw DataError("finetune: train and dev splits must be non-empty");
    }
    if (model.config().num_classes != data.num_classes) {
        throw DataError("finetune: model classification head does not match dataset classes");
    }

    auto train_inputs = prepare_split(data.train, data.is_pair, mode, v, g, scorer, cfg.cvgi);
    auto dev_inputs = prepare_split(data.dev, data.is_pair, mode, v, g, scorer, cfg.cvgi);

    AdamState adam(model);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    Rng rng = make_rng(cfg.seed);

    FinetuneOutcome outcome;
    std::vector<Eigen::MatrixXd> best_params;
    double best_f1 = -1;
    int best_epoch = -1;
    std::int64_t step = 0;

    std::vector<std::size_t> order(train_inputs.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<LossSpec> batch;
            for (std::size_t i = start; i < end; ++i) {
                const auto& input = train_inputs[order[i]];
                LossSpec spec;
                spec.ids = input.ids;
                spec.mask = input.mask;
                spec.w_cls = 1.0;
                spec.cls_label = data.train.items[order[i]].label;
                batch.push_back(std::move(spec));
            }
            model.zero_grads();
            loss_and_gradients(model, batch, &rng);
            adam.step(model, adam_cfg, warmup_lr_scale(step, cfg.warmup_steps));
            ++step;
        }

        MetricsReport dev =
            eval_prepared(model, dev_inputs, data.dev, model.config().num_classes);
        outcome.dev_curve.push_back(dev.macro_f1);
        if (log) {
            *log << "{\"epoch\":" << epoch << ",\"dev_macro_f1\":" << dev.macro_f1 << "}\n";
        }
        if (dev.macro_f1 > best_f1) {
            best_f1 = dev.macro_f1;
            best_epoch = epoch;
            best_params.clear();
            for (const Param* p : std::as_const(model).parameters()) best_params.push_back(p->value);
        } else if (cfg.early_stop && epoch - best_epoch >= cfg.patience) {
            outcome.epochs_run = epoch + 1;
            break;
        }
        outcome.epochs_run = epoch + 1;
    }

    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    outcome.best_dev_macro_f1 = best_f1;
    outcome.best_epoch = best_epoch;
    return outcome;
}

}  // namespace change
