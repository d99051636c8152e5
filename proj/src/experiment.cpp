#include "change/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace change {

using nlohmann::json;

static AttackPolicy attack_policy_from_kv(const KvConfig& kv, const std::string& prefix,
                                          const AttackPolicy& defaults) {
    AttackPolicy p = defaults;
    p.enable_pinyin = kv.get_bool(prefix + ".pinyin", p.enable_pinyin);
    p.enable_visual = kv.get_bool(prefix + ".visual", p.enable_visual);
    p.enable_char_to_pinyin = kv.get_bool(prefix + ".char_to_pinyin", p.enable_char_to_pinyin);
    p.attack_rate = kv.get_double(prefix + ".rate", p.attack_rate);
    p.max_attacks_per_sentence = kv.get_int(prefix + ".max_attacks", p.max_attacks_per_sentence);
    p.seed = kv.get_u64(prefix + ".seed", p.seed);
    return p;
}

ExperimentConfig ExperimentConfig::from_kv(const KvConfig& kv) {
    ExperimentConfig cfg;
    cfg.task = kv.get_or("task", cfg.task);
    cfg.seed = kv.get_u64("seed", cfg.seed);
    cfg.pinyin_path = kv.get_or("data.pinyin", cfg.pinyin_path);
    cfg.similar_path = kv.get_or("data.similar", cfg.similar_path);
    cfg.graph_path = kv.get_or("data.graph", cfg.graph_path);

    cfg.synth.train_size = kv.get_int("synth.train_size", cfg.synth.train_size);
    cfg.synth.dev_size = kv.get_int("synth.dev_size", cfg.synth.dev_size);
    cfg.synth.test_size = kv.get_int("synth.test_size", cfg.synth.test_size);
    cfg.synth.corpus_sentences = kv.get_int("synth.corpus_sentences", cfg.synth.corpus_sentences);
    cfg.synth.topic_classes = kv.get_int("synth.classes", cfg.synth.topic_classes);

    cfg.model.layers = kv.get_int("model.layers", cfg.model.layers);
    cfg.model.heads = kv.get_int("model.heads", cfg.model.heads);
    cfg.model.dim = kv.get_int("model.dim", cfg.model.dim);
    cfg.model.ffn_dim = kv.get_int("model.ffn_dim", cfg.model.ffn_dim);
    cfg.model.max_len = kv.get_int("model.max_len", cfg.model.max_len);
    cfg.model.dropout = kv.get_double("model.dropout", cfg.model.dropout);
    cfg.model.seed = kv.get_u64("model.seed", cfg.model.seed);

    cfg.pretrain_attack.seed = 101;  // distinct default streams
    cfg.eval_attack.seed = 202;
    cfg.pretrain_attack = attack_policy_from_kv(kv, "pretrain_attack", cfg.pretrain_attack);
    cfg.eval_attack = attack_policy_from_kv(kv, "eval_attack", cfg.eval_attack);
    cfg.false_paths = kv.get_int("false_paths", cfg.false_paths);

    cfg.mlm.steps = kv.get_int("mlm.steps", cfg.mlm.steps);
    cfg.mlm.batch_size = kv.get_int("mlm.batch_size", cfg.mlm.batch_size);
    cfg.mlm.lr = kv.get_double("mlm.lr", cfg.mlm.lr);
    cfg.mlm.warmup_steps = kv.get_int("mlm.warmup", cfg.mlm.warmup_steps);
    cfg.mlm.mask_fraction = kv.get_double("mlm.mask_fraction", cfg.mlm.mask_fraction);
    cfg.mlm.seed = kv.get_u64("mlm.seed", cfg.mlm.seed);

    cfg.pretrain.w_atp = kv.get_double("pretrain.w_atp", cfg.pretrain.w_atp);
    cfg.pretrain.w_amp = kv.get_double("pretrain.w_amp", cfg.pretrain.w_amp);
    cfg.pretrain.w_acp = kv.get_double("pretrain.w_acp", cfg.pretrain.w_acp);
    cfg.pretrain.mask_fraction = kv.get_double("pretrain.mask_fraction", cfg.pretrain.mask_fraction);
    cfg.pretrain.path_threshold = kv.get_int("pretrain.path_threshold", cfg.pretrain.path_threshold);
    cfg.pretrain.steps = kv.get_int("pretrain.steps", cfg.pretrain.steps);
    cfg.pretrain.batch_size = kv.get_int("pretrain.batch_size", cfg.pretrain.batch_size);
    cfg.pretrain.lr = kv.get_double("pretrain.lr", cfg.pretrain.lr);
    cfg.pretrain.warmup_steps = kv.get_int("pretrain.warmup", cfg.pretrain.warmup_steps);
    cfg.pretrain.seed = kv.get_u64("pretrain.seed", cfg.pretrain.seed);
    cfg.pretrain.length_cap = kv.get_int("pretrain.length_cap", cfg.pretrain.length_cap);

    cfg.finetune.max_epochs = kv.get_int("finetune.epochs", cfg.finetune.max_epochs);
    cfg.finetune.batch_size = kv.get_int("finetune.batch_size", cfg.finetune.batch_size);
    cfg.finetune.lr = kv.get_double("finetune.lr", cfg.finetune.lr);
    cfg.finetune.warmup_steps = kv.get_int("finetune.warmup", cfg.finetune.warmup_steps);
    cfg.finetune.seed = kv.get_u64("finetune.seed", cfg.finetune.seed);
    cfg.finetune.early_stop = kv.get_bool("finetune.early_stop", cfg.finetune.early_stop);
    cfg.finetune.patience = kv.get_int("finetune.patience", cfg.finetune.patience);
    cfg.finetune.cvgi.k_percent = kv.get_double("finetune.k_percent", cfg.finetune.cvgi.k_percent);
    cfg.finetune.cvgi.max_paths_per_token =
        kv.get_int("finetune.max_paths", cfg.finetune.cvgi.max_paths_per_token);
    cfg.finetune.cvgi.length_cap = kv.get_int("finetune.length_cap", cfg.finetune.cvgi.length_cap);
    cfg.finetune.cvgi.per_position_remask =
        kv.get_bool("finetune.remask", cfg.finetune.cvgi.per_position_remask);

    cfg.run_base = kv.get_bool("run.base", cfg.run_base);
    cfg.run_cvgi = kv.get_bool("run.cvgi", cfg.run_cvgi);
    cfg.run_change = kv.get_bool("run.change", cfg.run_change);

    cfg.config_hash = kv.hash();
    return cfg;
}

static void note(std::ostream* progress, const std::string& msg) {
    if (progress) *progress << "[experiment] " << msg << "\n" << std::flush;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::ostream* progress) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    // graph
    VariationGraph graph;
    PinyinTable table;
    if (!cfg.pinyin_path.empty()) {
        table = load_pinyin_table_file(cfg.pinyin_path);
    } else {
        throw DataError("experiment config: data.pinyin is required (run the data build step)");
    }
    if (!cfg.graph_path.empty()) {
        graph = load_graph_file(cfg.graph_path);
    } else {
        auto pairs = cfg.similar_path.empty()
                         ? std::vector<std::pair<std::string, std::string>>{}
                         : load_similar_pairs_file(cfg.similar_path);
        graph = build_default_graph(table, pairs);
    }
    note(progress, "graph ready: " + std::to_string(graph.size()) + " triples");

    // synthetic tasks + dataset choice
    SyntheticTasks tasks = make_synthetic_tasks(table, graph, cfg.seed, cfg.synth);
    const LabeledDataset* dataset = nullptr;
    if (cfg.task == "topic") dataset = &tasks.topic;
    else if (cfg.task == "pairing") dataset = &tasks.pairing;
    else if (cfg.task == "toxic") dataset = &tasks.toxic;
    else throw DataError("experiment config: unknown task '" + cfg.task + "'");

    // vocabulary over clean corpus + task texts + graph nodes
    std::vector<std::string> vocab_lines = tasks.corpus;
    for (const DatasetSplit* split : {&dataset->train, &dataset->dev, &dataset->test}) {
        for (const auto& ex : split->items) {
            vocab_lines.push_back(ex.text_a);
            if (!ex.text_b.empty()) vocab_lines.push_back(ex.text_b);
        }
    }
    Vocabulary vocab = Vocabulary::build(vocab_lines, graph);
    {
        std::ofstream vf(out_path("vocab.txt"));
        vocab.save(vf);
    }
    note(progress, "vocabulary: " + std::to_string(vocab.size()) + " tokens");

    // base language model (MLM on the clean corpus)
    EncoderConfig model_cfg = cfg.model;
    model_cfg.vocab_size = vocab.size();
    model_cfg.num_classes = dataset->num_classes;
    model_cfg.validate();
    EncoderModel base(model_cfg);
    {
        std::ofstream log(out_path("mlm_log.jsonl"));
        train_mlm(base, tasks.corpus, vocab, cfg.mlm, &log);
    }
    base.save_file(out_path("base.ckpt"));
    note(progress, "base language model trained (" + std::to_string(cfg.mlm.steps) + " steps)");

    // graph-instructed pretraining corpus + CHANGE pretrain
    std::vector<PretrainSample> corpus;
    corpus.reserve(tasks.corpus.size());
    for (std::size_t i = 0; i < tasks.corpus.size(); ++i) {
        Rng rng = make_rng(cfg.pretrain_attack.seed, i);
        corpus.push_back(
            generate_pretrain_sample(tasks.corpus[i], graph, cfg.pretrain_attack, cfg.false_paths, rng));
    }
    EncoderModel change_model = base;
    if (cfg.run_change) {
        std::ofstream log(out_path("pretrain_log.jsonl"));
        pretrain(change_model, corpus, graph, vocab, cfg.pretrain, &log);
        change_model.save_file(out_path("change.ckpt"));
        note(progress, "graph-instructed pretraining done (" + std::to_string(cfg.pretrain.steps) +
                           " steps)");
    }

    // Att datasets
    LabeledDataset attacked = attack_dataset(*dataset, graph, cfg.eval_attack, cfg.eval_attack.seed);

    ExperimentResult result;
    result.config_hash = cfg.config_hash;
    result.seed = cfg.seed;

    struct MethodPlan {
        Mode mode;
        bool enabled;
        const EncoderModel* init;
        const EncoderModel* scorer;  // frozen pretrained weights
    };
    const std::vector<MethodPlan> plans = {
        {Mode::Base, cfg.run_base, &base, nullptr},
        {Mode::Cvgi, cfg.run_cvgi, &base, &base},
        {Mode::Change, cfg.run_change, &change_model, &change_model},
    };

    for (const auto& plan : plans) {
        if (!plan.enabled) continue;
        MethodResults mr;
        mr.mode = plan.mode;
        EncoderModel model = *plan.init;
        const VariationGraph* g = plan.mode == Mode::Base ? nullptr : &graph;
        note(progress, std::string("fine-tuning ") + std::string(mode_name(plan.mode)));
        mr.finetune = finetune(model, *dataset, plan.mode, g, plan.scorer, vocab, cfg.finetune);
        model.save_file(out_path("finetuned_" + std::string(mode_name(plan.mode)) + ".ckpt"));

        mr.clean_test = evaluate_split(model, plan.mode, g, plan.scorer, vocab, dataset->is_pair,
                                       dataset->test, cfg.finetune.cvgi);
        mr.att_test = evaluate_split(model, plan.mode, g, plan.scorer, vocab, dataset->is_pair,
                                     attacked.test, cfg.finetune.cvgi);
        mr.clean_dev = evaluate_split(model, plan.mode, g, plan.scorer, vocab, dataset->is_pair,
                                      dataset->dev, cfg.finetune.cvgi);
        mr.att_dev = evaluate_split(model, plan.mode, g, plan.scorer, vocab, dataset->is_pair,
                                    attacked.dev, cfg.finetune.cvgi);
        note(progress, std::string(mode_name(plan.mode)) +
                           " clean macro-F1 " + std::to_string(mr.clean_test.macro_f1) +
                           ", att macro-F1 " + std::to_string(mr.att_test.macro_f1));
        result.methods.push_back(std::move(mr));
    }

    result.report_table = render_report_table(result);
    {
        std::ofstream report(out_path("report.txt"));
        report << result.report_table;
    }
    {
        std::ofstream results(out_path("results.jsonl"));
        write_results_jsonl(result, results);
    }
    return result;
}

std::string render_report_table(const ExperimentResult& result) {
    std::ostringstream out;
    out << std::left << std::setw(8) << "method" << std::setw(8) << "setting" << std::right
        << std::setw(10) << "macro_f1" << std::setw(10) << "micro_f1" << std::setw(11)
        << "precision" << std::setw(8) << "recall" << '\n';
    out << std::string(55, '-') << '\n';
    auto row = [&](std::string_view method, std::string_view setting, const MetricsReport& m) {
        out << std::left << std::setw(8) << method << std::setw(8) << setting << std::right
            << std::fixed << std::setprecision(4) << std::setw(10) << m.macro_f1 << std::setw(10)
            << m.micro_f1 << std::setw(11) << m.precision << std::setw(8) << m.recall << '\n';
    };
    for (const auto& mr : result.methods) {
        row(mode_name(mr.mode), "Clean", mr.clean_test);
        row(mode_name(mr.mode), "Att", mr.att_test);
    }
    return out.str();
}

void write_results_jsonl(const ExperimentResult& result, std::ostream& out) {
    std::ostringstream hash_hex;
    hash_hex << std::hex << std::setw(16) << std::setfill('0') << result.config_hash;
    for (const auto& mr : result.methods) {
        auto row = [&](std::string_view setting, const MetricsReport& m) {
            json j = m.to_json();
            j["method"] = std::string(mode_name(mr.mode));
            j["setting"] = std::string(setting);
            j["seed"] = result.seed;
            j["config_hash"] = hash_hex.str();
            out << j.dump() << '\n';
        };
        row("Clean", mr.clean_test);
        row("Att", mr.att_test);
        row("CleanDev", mr.clean_dev);
        row("AttDev", mr.att_dev);
    }
}

}  // namespace change
