// Command-line surface for the variation-graph toolkit: graph inspection,
// text attacks, pretraining-corpus construction, reconstruction debugging,
// training, evaluation, and the full Clean/Att experiment.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "change/attack.hpp"
#include "change/config.hpp"
#include "change/data.hpp"
#include "change/experiment.hpp"
#include "change/graph.hpp"
#include "change/model.hpp"
#include "change/reconstruct.hpp"
#include "change/tasks.hpp"
#include "change/vocab.hpp"

using namespace change;

namespace {

struct GraphSource {
    std::string graph_path;
    std::string pinyin_path = "data/pinyin.tsv";
    std::string similar_path = "data/similar.tsv";

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--graph", graph_path, "graph TSV file (default: build from tables)");
        cmd->add_option("--pinyin", pinyin_path, "pinyin table TSV");
        cmd->add_option("--similar", similar_path, "visual-similarity pairs TSV");
    }

    VariationGraph load() const {
        if (!graph_path.empty()) return load_graph_file(graph_path);
        auto table = load_pinyin_table_file(pinyin_path);
        auto pairs = load_similar_pairs_file(similar_path);
        return build_default_graph(table, pairs);
    }
};

AttackPolicy policy_from_config(const KvConfig& kv, std::uint64_t seed) {
    AttackPolicy p;
    p.enable_pinyin = kv.get_bool("attack.pinyin", p.enable_pinyin);
    p.enable_visual = kv.get_bool("attack.visual", p.enable_visual);
    p.enable_char_to_pinyin = kv.get_bool("attack.char_to_pinyin", p.enable_char_to_pinyin);
    p.attack_rate = kv.get_double("attack.rate", p.attack_rate);
    p.max_attacks_per_sentence = kv.get_int("attack.max_attacks", p.max_attacks_per_sentence);
    p.seed = seed;
    return p;
}

int cmd_graph(const std::string& action, const GraphSource& src, const std::string& out_path) {
    VariationGraph g = src.load();
    if (action == "stats") {
        auto s = g.stats();
        std::cout << "triples=" << s.triples << " pinyin=" << s.per_relation[0]
                  << " visual=" << s.per_relation[1] << " char_to_pinyin=" << s.per_relation[2]
                  << " nodes=" << s.nodes << "\n";
        return 0;
    }
    if (action == "validate") {
        // symmetry and dedup are enforced structurally; re-run the checks
        std::size_t checked = 0;
        for (const auto& t : g.triples()) {
            bool fwd = false, bwd = false;
            for (const auto& nb : g.neighbors(t.a)) fwd |= nb.rel == t.rel && nb.node == t.b;
            for (const auto& nb : g.neighbors(t.b)) bwd |= nb.rel == t.rel && nb.node == t.a;
            if (!fwd || !bwd) {
                std::cerr << "asymmetric triple: " << t.a << " " << relation_tag(t.rel) << " "
                          << t.b << "\n";
                return 2;
            }
            ++checked;
        }
        std::cout << "ok: " << checked << " triples, " << g.stats().nodes << " nodes\n";
        return 0;
    }
    if (action == "export") {
        if (out_path.empty()) {
            g.serialize(std::cout);
        } else {
            std::ofstream out(out_path);
            if (!out) throw DataError("cannot open output file: " + out_path);
            g.serialize(out);
        }
        return 0;
    }
    throw UsageError("unknown graph action: " + action);
}

int cmd_attack(const GraphSource& src, const std::string& in_path, const std::string& out_path,
               const AttackPolicy& policy, const std::string& records_path) {
    VariationGraph g = src.load();
    std::ifstream in(in_path);
    if (!in) throw DataError("cannot open input file: " + in_path);
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot open output file: " + out_path);
    std::optional<std::ofstream> records;
    if (!records_path.empty()) {
        records.emplace(records_path);
        if (!*records) throw DataError("cannot open records file: " + records_path);
    }
    std::string line;
    std::size_t index = 0;
    std::size_t attacked_count = 0;
    while (std::getline(in, line)) {
        std::size_t idx = index++;
        if (line.empty()) {
            out << "\n";
            continue;
        }
        Rng rng = make_rng(policy.seed, idx);
        auto sample = attack_text(line, g, policy, rng);
        out << sample.attacked << "\n";
        if (records) {
            nlohmann::json j;
            j["line"] = idx;
            j["records"] = nlohmann::json::array();
            for (const auto& rec : sample.records) j["records"].push_back(to_json(rec));
            *records << j.dump() << "\n";
        }
        ++attacked_count;
    }
    std::cerr << "attacked " << attacked_count << " lines -> " << out_path << "\n";
    return 0;
}

int cmd_corpus(const GraphSource& src, const std::string& in_path, const std::string& out_path,
               const AttackPolicy& policy, int false_paths) {
    VariationGraph g = src.load();
    std::ifstream in(in_path);
    if (!in) throw DataError("cannot open input file: " + in_path);
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot open output file: " + out_path);
    std::size_t n = build_corpus(in, g, policy, false_paths, out);
    std::cerr << "wrote " << n << " samples -> " << out_path << "\n";
    return 0;
}

std::string_view relation_markers_open(Relation r) {
    return kReservedTokens[static_cast<std::size_t>(marker_open_id(r))];
}
std::string_view relation_markers_close(Relation r) {
    return kReservedTokens[static_cast<std::size_t>(marker_close_id(r))];
}

int cmd_reconstruct(const GraphSource& src, const std::string& text,
                    const std::string& checkpoint, const std::string& vocab_path, double k,
                    int max_paths, int length_cap, bool dump_mask) {
    VariationGraph g = src.load();
    Vocabulary v = vocab_path.empty() ? Vocabulary::build({text}, g)
                                      : Vocabulary::load_file(vocab_path);
    TokenSequence base = make_input(v, text);

    std::vector<int> flagged;
    if (!checkpoint.empty()) {
        EncoderModel model = EncoderModel::load_file(checkpoint);
        if (model.config().vocab_size != v.size()) {
            throw DataError("checkpoint vocabulary size does not match --vocab");
        }
        auto probs = lm_token_probabilities(model, base);
        flagged = recognize_attacked_tokens(probs, base, k);
    } else {
        // no scorer: flag every raw token that has graph neighbors
        for (std::size_t i = 0; i < base.size(); ++i) {
            if (base.tags[i] != SegTag::RawText) continue;
            if (!g.neighbors(v.token(base.ids[i])).empty()) flagged.push_back(static_cast<int>(i));
        }
    }

    auto spans = retrieve_paths(flagged, base, v, g, max_paths);
    auto rec = reconstruct(base, spans, length_cap);
    std::cout << "tokens:";
    for (int id : rec.tokens.ids) std::cout << " " << v.token(id);
    std::cout << "\nspans:\n";
    for (std::size_t s = 0; s < rec.spans.size(); ++s) {
        const auto& span = rec.spans[s];
        std::cout << "  anchor=" << span.anchor << " token=" << v.token(base.ids[static_cast<std::size_t>(span.anchor)])
                  << " " << std::string(relation_markers_open(span.rel)) << span.candidate
                  << std::string(relation_markers_close(span.rel)) << "\n";
    }
    if (rec.dropped_spans > 0) {
        std::cout << "dropped_spans: " << rec.dropped_spans << "\n";
    }
    if (dump_mask) {
        build_attention_mask(rec).dump(std::cout);
    }
    return 0;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chinese character-variation graph toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    std::string config_path;
    app.add_option("--seed", seed, "global seed")->capture_default_str();
    app.add_option("--config", config_path, "key=value config file");

    // graph
    auto* graph_cmd = app.add_subcommand("graph", "inspect or validate the variation graph");
    std::string graph_action = "stats";
    std::string graph_out;
    graph_cmd->add_option("action", graph_action, "stats|validate|export")->required();
    GraphSource graph_src;
    graph_src.add_flags(graph_cmd);
    graph_cmd->add_option("--out", graph_out, "output file for export");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "attack a text file line by line");
    GraphSource attack_src;
    attack_src.add_flags(attack_cmd);
    std::string attack_in, attack_out, attack_records;
    double attack_rate = 0.15;
    int attack_max = 8;
    attack_cmd->add_option("--in", attack_in, "input text file")->required();
    attack_cmd->add_option("--out", attack_out, "output text file")->required();
    attack_cmd->add_option("--records", attack_records, "JSONL attack records sidecar");
    attack_cmd->add_option("--rate", attack_rate, "attack rate")->capture_default_str();
    attack_cmd->add_option("--max-attacks", attack_max, "max attacks per sentence")
        ->capture_default_str();

    // corpus
    auto* corpus_cmd = app.add_subcommand("corpus", "build a pretraining corpus (JSONL)");
    GraphSource corpus_src;
    corpus_src.add_flags(corpus_cmd);
    std::string corpus_in, corpus_out;
    double corpus_rate = 0.15;
    int corpus_max = 8;
    int corpus_false = 2;
    corpus_cmd->add_option("--in", corpus_in, "input text file, one sentence per line")->required();
    corpus_cmd->add_option("--out", corpus_out, "output JSONL file")->required();
    corpus_cmd->add_option("--rate", corpus_rate, "attack rate")->capture_default_str();
    corpus_cmd->add_option("--max-attacks", corpus_max, "max attacks per sentence")
        ->capture_default_str();
    corpus_cmd->add_option("--false-paths", corpus_false, "false paths per sample")
        ->capture_default_str();

    // reconstruct
    auto* rec_cmd = app.add_subcommand("reconstruct", "debug: print spans and the 2D mask");
    GraphSource rec_src;
    rec_src.add_flags(rec_cmd);
    std::string rec_text, rec_ckpt, rec_vocab;
    double rec_k = 15.0;
    int rec_max_paths = 4;
    int rec_cap = 192;
    bool rec_mask = false;
    rec_cmd->add_option("--text", rec_text, "input text")->required();
    rec_cmd->add_option("--checkpoint", rec_ckpt, "scorer checkpoint for RAT (optional)");
    rec_cmd->add_option("--vocab", rec_vocab, "vocabulary file (required with --checkpoint)");
    rec_cmd->add_option("--k", rec_k, "lowest-k%% threshold")->capture_default_str();
    rec_cmd->add_option("--max-paths", rec_max_paths, "max paths per token")->capture_default_str();
    rec_cmd->add_option("--cap", rec_cap, "reconstruction length cap")->capture_default_str();
    rec_cmd->add_flag("--mask", rec_mask, "dump the 2D attention mask");

    // pretrain
    auto* pre_cmd = app.add_subcommand("pretrain", "train with the graph-instructed tasks or MLM");
    GraphSource pre_src;
    pre_src.add_flags(pre_cmd);
    std::string pre_task = "change";
    std::string pre_corpus, pre_vocab, pre_init, pre_out, pre_log;
    pre_cmd->add_option("--task", pre_task, "change|mlm")->capture_default_str();
    pre_cmd->add_option("--corpus", pre_corpus,
                        "JSONL pretrain corpus (change) or text file (mlm)")
        ->required();
    pre_cmd->add_option("--vocab", pre_vocab, "vocabulary file")->required();
    pre_cmd->add_option("--init", pre_init, "initial checkpoint (optional)");
    pre_cmd->add_option("--out", pre_out, "output checkpoint")->required();
    pre_cmd->add_option("--log", pre_log, "metrics log JSONL");

    // finetune
    auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a classifier");
    GraphSource ft_src;
    ft_src.add_flags(ft_cmd);
    std::string ft_mode = "BASE", ft_train, ft_dev, ft_init, ft_scorer, ft_vocab, ft_out;
    bool ft_pair = false;
    int ft_classes = 2;
    ft_cmd->add_option("--mode", ft_mode, "BASE|CVGI|CHANGE")->capture_default_str();
    ft_cmd->add_option("--train", ft_train, "train JSONL")->required();
    ft_cmd->add_option("--dev", ft_dev, "dev JSONL")->required();
    ft_cmd->add_option("--init", ft_init, "initial checkpoint");
    ft_cmd->add_option("--scorer", ft_scorer, "scorer checkpoint (CVGI/CHANGE)");
    ft_cmd->add_option("--vocab", ft_vocab, "vocabulary file")->required();
    ft_cmd->add_option("--out", ft_out, "output checkpoint")->required();
    ft_cmd->add_flag("--pair", ft_pair, "text_a/text_b pair task");
    ft_cmd->add_option("--classes", ft_classes, "number of classes")->capture_default_str();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
    GraphSource eval_src;
    eval_src.add_flags(eval_cmd);
    std::string eval_mode = "BASE", eval_ckpt, eval_scorer, eval_vocab, eval_data;
    bool eval_pair = false;
    eval_cmd->add_option("--mode", eval_mode, "BASE|CVGI|CHANGE")->capture_default_str();
    eval_cmd->add_option("--checkpoint", eval_ckpt, "fine-tuned checkpoint");
    eval_cmd->add_option("--scorer", eval_scorer, "scorer checkpoint (CVGI/CHANGE)");
    eval_cmd->add_option("--vocab", eval_vocab, "vocabulary file");
    eval_cmd->add_option("--data", eval_data, "dataset JSONL");
    eval_cmd->add_flag("--pair", eval_pair, "text_a/text_b pair task");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "run the full Clean/Att comparison");
    std::string exp_out = "experiment_out";
    exp_cmd->add_option("--out", exp_out, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        KvConfig kv;
        if (!config_path.empty()) kv = KvConfig::parse_file(config_path);

        if (graph_cmd->parsed()) return cmd_graph(graph_action, graph_src, graph_out);

        if (attack_cmd->parsed()) {
            AttackPolicy policy = policy_from_config(kv, seed);
            policy.attack_rate = attack_rate;
            policy.max_attacks_per_sentence = attack_max;
            return cmd_attack(attack_src, attack_in, attack_out, policy, attack_records);
        }

        if (corpus_cmd->parsed()) {
            AttackPolicy policy = policy_from_config(kv, seed);
            policy.attack_rate = corpus_rate;
            policy.max_attacks_per_sentence = corpus_max;
            return cmd_corpus(corpus_src, corpus_in, corpus_out, policy, corpus_false);
        }

        if (rec_cmd->parsed()) {
            if (!rec_ckpt.empty() && rec_vocab.empty()) {
                throw DataError("--checkpoint requires --vocab (the model's vocabulary file)");
            }
            return cmd_reconstruct(rec_src, rec_text, rec_ckpt, rec_vocab, rec_k, rec_max_paths,
                                   rec_cap, rec_mask);
        }

        if (pre_cmd->parsed()) {
            VariationGraph g = pre_src.load();
            Vocabulary v = Vocabulary::load_file(pre_vocab);
            EncoderConfig mc;
            mc.layers = kv.get_int("model.layers", mc.layers);
            mc.heads = kv.get_int("model.heads", mc.heads);
            mc.dim = kv.get_int("model.dim", mc.dim);
            mc.ffn_dim = kv.get_int("model.ffn_dim", mc.ffn_dim);
            mc.max_len = kv.get_int("model.max_len", mc.max_len);
            mc.dropout = kv.get_double("model.dropout", mc.dropout);
            mc.num_classes = kv.get_int("model.num_classes", 2);
            mc.vocab_size = v.size();
            mc.seed = seed;
            EncoderModel model = pre_init.empty() ? EncoderModel(mc)
                                                  : EncoderModel::load_file(pre_init);
            std::ofstream log;
            if (!pre_log.empty()) log.open(pre_log);
            std::ostream* log_ptr = pre_log.empty() ? nullptr : &log;
            if (pre_task == "mlm") {
                MlmTrainConfig tc;
                tc.steps = kv.get_int("mlm.steps", tc.steps);
                tc.batch_size = kv.get_int("mlm.batch_size", tc.batch_size);
                tc.lr = kv.get_double("mlm.lr", tc.lr);
                tc.warmup_steps = kv.get_int("mlm.warmup", tc.warmup_steps);
                tc.seed = seed;
                train_mlm(model, read_lines(pre_corpus), v, tc, log_ptr);
            } else if (pre_task == "change") {
                PretrainConfig pc;
                pc.w_atp = kv.get_double("pretrain.w_atp", pc.w_atp);
                pc.w_amp = kv.get_double("pretrain.w_amp", pc.w_amp);
                pc.w_acp = kv.get_double("pretrain.w_acp", pc.w_acp);
                pc.steps = kv.get_int("pretrain.steps", pc.steps);
                pc.batch_size = kv.get_int("pretrain.batch_size", pc.batch_size);
                pc.lr = kv.get_double("pretrain.lr", pc.lr);
                pc.warmup_steps = kv.get_int("pretrain.warmup", pc.warmup_steps);
                pc.length_cap = kv.get_int("pretrain.length_cap", pc.length_cap);
                pc.seed = seed;
                pretrain(model, load_corpus_file(pre_corpus), g, v, pc, log_ptr);
            } else {
                throw UsageError("unknown pretrain task: " + pre_task);
            }
            model.save_file(pre_out);
            std::cerr << "saved " << pre_out << "\n";
            return 0;
        }

        if (ft_cmd->parsed()) {
            auto mode = mode_from_name(ft_mode);
            if (!mode) throw UsageError("unknown mode: " + ft_mode);
            if (ft_init.empty()) throw DataError("finetune requires --init (run pretrain first)");
            VariationGraph g = ft_src.load();
            Vocabulary v = Vocabulary::load_file(ft_vocab);
            EncoderModel model = EncoderModel::load_file(ft_init);
            std::optional<EncoderModel> scorer;
            if (*mode != Mode::Base) {
                scorer.emplace(EncoderModel::load_file(ft_scorer.empty() ? ft_init : ft_scorer));
            }
            LabeledDataset data;
            data.num_classes = ft_classes;
            data.is_pair = ft_pair;
            data.train = load_split_file(ft_train, ft_pair);
            data.dev = load_split_file(ft_dev, ft_pair);
            FinetuneConfig fc;
            fc.max_epochs = kv.get_int("finetune.epochs", fc.max_epochs);
            fc.batch_size = kv.get_int("finetune.batch_size", fc.batch_size);
            fc.lr = kv.get_double("finetune.lr", fc.lr);
            fc.warmup_steps = kv.get_int("finetune.warmup", fc.warmup_steps);
            fc.cvgi.k_percent = kv.get_double("finetune.k_percent", fc.cvgi.k_percent);
            fc.cvgi.max_paths_per_token = kv.get_int("finetune.max_paths", fc.cvgi.max_paths_per_token);
            fc.cvgi.length_cap = kv.get_int("finetune.length_cap", fc.cvgi.length_cap);
            fc.seed = seed;
            auto outcome = finetune(model, data, *mode, *mode == Mode::Base ? nullptr : &g,
                                    scorer ? &*scorer : nullptr, v, fc, &std::cerr);
            model.save_file(ft_out);
            std::cout << "best_dev_macro_f1=" << outcome.best_dev_macro_f1
                      << " best_epoch=" << outcome.best_epoch << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            auto mode = mode_from_name(eval_mode);
            if (!mode) throw UsageError("unknown mode: " + eval_mode);
            if (eval_ckpt.empty()) {
                throw DataError("eval requires --checkpoint (produce one with `finetune`)");
            }
            if (eval_vocab.empty()) throw DataError("eval requires --vocab");
            if (eval_data.empty()) throw DataError("eval requires --data");
            VariationGraph g = eval_src.load();
            Vocabulary v = Vocabulary::load_file(eval_vocab);
            EncoderModel model = EncoderModel::load_file(eval_ckpt);
            std::optional<EncoderModel> scorer;
            if (*mode != Mode::Base) {
                if (eval_scorer.empty()) {
                    throw DataError("eval in CVGI/CHANGE mode requires --scorer");
                }
                scorer.emplace(EncoderModel::load_file(eval_scorer));
            }
            auto split = load_split_file(eval_data, eval_pair);
            CvgiOptions opts;
            opts.k_percent = kv.get_double("finetune.k_percent", opts.k_percent);
            auto report = evaluate_split(model, *mode, *mode == Mode::Base ? nullptr : &g,
                                         scorer ? &*scorer : nullptr, v, eval_pair, split, opts);
            std::cout << report.to_json().dump() << "\n";
            return 0;
        }

        if (exp_cmd->parsed()) {
            KvConfig exp_kv = kv;
            if (!exp_kv.has("seed")) exp_kv.set("seed", std::to_string(seed));
            if (!exp_kv.has("data.pinyin")) exp_kv.set("data.pinyin", "data/pinyin.tsv");
            if (!exp_kv.has("data.similar")) exp_kv.set("data.similar", "data/similar.tsv");
            auto cfg = ExperimentConfig::from_kv(exp_kv);
            auto result = run_experiment(cfg, exp_out, &std::cerr);
            std::cout << result.report_table;
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
