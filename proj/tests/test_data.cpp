#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "change/config.hpp"
#include "change/data.hpp"
#include "change/experiment.hpp"
#include "change/utf8.hpp"

using namespace change;

static PinyinTable bundled_table() {
    return load_pinyin_table_file(std::string(CHANGE_DATA_DIR) + "/pinyin.tsv");
}

static VariationGraph bundled_graph(const PinyinTable& table) {
    return build_default_graph(
        table, load_similar_pairs_file(std::string(CHANGE_DATA_DIR) + "/similar.tsv"));
}

TEST_CASE("synthetic tasks are deterministic in the seed") {
    auto table = bundled_table();
    SyntheticConfig cfg;
    cfg.train_size = 40;
    cfg.dev_size = 10;
    cfg.test_size = 10;
    cfg.corpus_sentences = 30;
    auto g = bundled_graph(table);
    auto a = make_synthetic_tasks(table, g, 99, cfg);
    auto b = make_synthetic_tasks(table, g, 99, cfg);
    REQUIRE(a.topic.train.size() == 40);
    for (std::size_t i = 0; i < a.topic.train.size(); ++i) {
        CHECK(a.topic.train.items[i].text_a == b.topic.train.items[i].text_a);
        CHECK(a.topic.train.items[i].label == b.topic.train.items[i].label);
    }
    CHECK(a.corpus == b.corpus);
    auto c = make_synthetic_tasks(table, g, 100, cfg);
    CHECK(a.topic.train.items[0].text_a != c.topic.train.items[0].text_a);
}

TEST_CASE("toxic task positive rate is one half by construction") {
    auto table = bundled_table();
    SyntheticConfig cfg;
    cfg.train_size = 200;
    cfg.dev_size = 50;
    cfg.test_size = 50;
    cfg.corpus_sentences = 10;
    auto tasks = make_synthetic_tasks(table, bundled_graph(table), 7, cfg);
    int positives = 0;
    for (const auto& e : tasks.toxic.train.items) positives += e.label;
    CHECK(positives == 100);
    CHECK(tasks.toxic.num_classes == 2);
}

TEST_CASE("pair task has two balanced labels and two texts") {
    auto table = bundled_table();
    SyntheticConfig cfg;
    cfg.train_size = 40;
    cfg.dev_size = 10;
    cfg.test_size = 10;
    cfg.corpus_sentences = 10;
    auto tasks = make_synthetic_tasks(table, bundled_graph(table), 7, cfg);
    CHECK(tasks.pairing.is_pair);
    int positives = 0;
    for (const auto& e : tasks.pairing.train.items) {
        CHECK(!e.text_a.empty());
        CHECK(!e.text_b.empty());
        positives += e.label;
    }
    CHECK(positives == 20);
}

TEST_CASE("majority-class macro-F1 sits near the analytic floor") {
    auto table = bundled_table();
    SyntheticConfig cfg;
    cfg.train_size = 400;
    cfg.dev_size = 40;
    cfg.test_size = 40;
    cfg.corpus_sentences = 10;
    auto tasks = make_synthetic_tasks(table, bundled_graph(table), 7, cfg);
    std::vector<int> gold, pred;
    for (const auto& e : tasks.topic.test.items) {
        gold.push_back(e.label);
        pred.push_back(0);  // majority/constant predictor
    }
    auto report = MetricsReport::from_predictions(gold, pred, tasks.topic.num_classes);
    // analytic oracle for a balanced C-class set predicted all-one-class:
    // the predicted class has P=1/C, R=1 -> F1 = 2/(C+1); others 0
    int c = tasks.topic.num_classes;
    double expected = (2.0 / (c + 1.0)) / c;
    CHECK(report.macro_f1 == doctest::Approx(expected).epsilon(1e-9));
    CHECK(report.macro_f1 < 0.3);
}

TEST_CASE("attack_dataset: zero-rate policy is the identity apart from provenance") {
    auto table = bundled_table();
    SyntheticConfig scfg;
    scfg.train_size = 20;
    scfg.dev_size = 10;
    scfg.test_size = 10;
    scfg.corpus_sentences = 5;
    auto tasks = make_synthetic_tasks(table, bundled_graph(table), 21, scfg);
    auto g = build_default_graph(table, {});
    AttackPolicy policy;
    policy.attack_rate = 0.0;
    auto attacked = attack_dataset(tasks.topic, g, policy, 5);
    CHECK(attacked.provenance.rfind("attacked", 0) == 0);
    REQUIRE(attacked.test.size() == tasks.topic.test.size());
    for (std::size_t i = 0; i < attacked.test.size(); ++i) {
        CHECK(attacked.test.items[i].text_a == tasks.topic.test.items[i].text_a);
        CHECK(attacked.test.items[i].label == tasks.topic.test.items[i].label);
    }
}

TEST_CASE("attack_dataset: every changed character traces to a graph triple") {
    auto table = bundled_table();
    SyntheticConfig scfg;
    scfg.train_size = 10;
    scfg.dev_size = 30;
    scfg.test_size = 30;
    scfg.corpus_sentences = 5;
    auto tasks = make_synthetic_tasks(table, bundled_graph(table), 22, scfg);
    auto g = build_default_graph(table, load_similar_pairs_file(std::string(CHANGE_DATA_DIR) +
                                                                "/similar.tsv"));
    AttackPolicy policy;
    policy.attack_rate = 0.4;
    policy.enable_char_to_pinyin = false;  // keep lengths aligned for the diff
    auto attacked = attack_dataset(tasks.topic, g, policy, 77);
    int changed = 0;
    for (std::size_t i = 0; i < attacked.test.size(); ++i) {
        auto raw = utf8_chars(tasks.topic.test.items[i].text_a);
        auto att = utf8_chars(attacked.test.items[i].text_a);
        REQUIRE(raw.size() == att.size());
        for (std::size_t k = 0; k < raw.size(); ++k) {
            if (raw[k] != att[k]) {
                ++changed;
                bool in_graph = g.contains(raw[k], Relation::Pinyin, att[k]) ||
                                g.contains(raw[k], Relation::Visual, att[k]);
                CHECK(in_graph);
            }
        }
    }
    CHECK(changed > 0);
    // train untouched
    for (std::size_t i = 0; i < attacked.train.size(); ++i) {
        CHECK(attacked.train.items[i].text_a == tasks.topic.train.items[i].text_a);
    }
    // attacked dev size equals clean dev size
    CHECK(attacked.dev.size() == tasks.topic.dev.size());
}

TEST_CASE("metrics: perfect predictions score 1.0 everywhere") {
    std::vector<int> gold = {0, 1, 2, 3, 0, 1, 2, 3};
    auto report = MetricsReport::from_predictions(gold, gold, 4);
    CHECK(report.macro_f1 == 1.0);
    CHECK(report.micro_f1 == 1.0);
    CHECK(report.precision == 1.0);
    CHECK(report.recall == 1.0);
}

TEST_CASE("metrics: binary counts TP=8 FP=2 FN=2") {
    auto report = MetricsReport::from_binary_counts(8, 2, 2, 0);
    CHECK(report.precision == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(report.recall == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(report.micro_f1 == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("metrics: all-one-class on balanced binary gives macro-F1 1/3") {
    std::vector<int> gold, pred;
    for (int i = 0; i < 20; ++i) {
        gold.push_back(i % 2);
        pred.push_back(1);
    }
    auto report = MetricsReport::from_predictions(gold, pred, 2);
    // hand oracle: class1 P=0.5,R=1 -> F1=2/3; class0 F1=0; macro=(0+2/3)/2
    CHECK(report.macro_f1 == doctest::Approx((2.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("metrics recompute from stored confusion counts exactly") {
    std::vector<int> gold = {0, 1, 2, 1, 0, 2, 2, 1, 0, 2};
    std::vector<int> pred = {0, 1, 1, 1, 2, 2, 0, 1, 0, 2};
    auto report = MetricsReport::from_predictions(gold, pred, 3);
    auto again = MetricsReport::from_confusion(report.confusion);
    CHECK(report.macro_f1 == again.macro_f1);
    CHECK(report.micro_f1 == again.micro_f1);
    CHECK(report.precision == again.precision);
    CHECK(report.recall == again.recall);
}

TEST_CASE("dataset JSONL round-trip") {
    DatasetSplit split;
    split.items.push_back({0, "微信", "", 1});
    split.items.push_back({1, "块快", "", 0});
    std::ostringstream out;
    save_split(split, false, out);
    std::istringstream in(out.str());
    auto loaded = load_split(in, false);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.items[0].text_a == "微信");
    CHECK(loaded.items[1].label == 0);

    DatasetSplit pairs;
    pairs.items.push_back({0, "微", "信", 1});
    std::ostringstream out2;
    save_split(pairs, true, out2);
    std::istringstream in2(out2.str());
    auto loaded2 = load_split(in2, true);
    CHECK(loaded2.items[0].text_b == "信");
}

TEST_CASE("kv config parsing, overrides, and hashing") {
    std::istringstream in("a = 1\n# comment\nmodel.dim=64\nflag = true\n\nname=x y\n");
    auto cfg = KvConfig::parse(in);
    CHECK(cfg.get_int("a", 0) == 1);
    CHECK(cfg.get_int("model.dim", 0) == 64);
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_or("name", "") == "x y");
    CHECK(cfg.get_or("missing", "d") == "d");
    auto h1 = cfg.hash();
    cfg.set("a", "2");
    CHECK(cfg.hash() != h1);
    std::istringstream bad("novalue\n");
    CHECK_THROWS_AS(KvConfig::parse(bad), DataError);
}

TEST_CASE("micro experiment produces the full report structure") {
    namespace fs = std::filesystem;
    ExperimentConfig cfg;
    cfg.task = "topic";
    cfg.seed = 5;
    cfg.pinyin_path = std::string(CHANGE_DATA_DIR) + "/pinyin.tsv";
    cfg.similar_path = std::string(CHANGE_DATA_DIR) + "/similar.tsv";
    cfg.synth.train_size = 48;
    cfg.synth.dev_size = 16;
    cfg.synth.test_size = 16;
    cfg.synth.corpus_sentences = 60;
    cfg.model.layers = 1;
    cfg.model.heads = 2;
    cfg.model.dim = 16;
    cfg.model.ffn_dim = 32;
    cfg.model.max_len = 96;
    cfg.model.dropout = 0.0;
    cfg.mlm.steps = 20;
    cfg.mlm.batch_size = 4;
    cfg.mlm.warmup_steps = 5;
    cfg.pretrain.steps = 20;
    cfg.pretrain.batch_size = 4;
    cfg.pretrain.warmup_steps = 5;
    cfg.pretrain.length_cap = 96;
    cfg.finetune.max_epochs = 1;
    cfg.finetune.batch_size = 8;
    cfg.finetune.cvgi.length_cap = 96;
    cfg.eval_attack.attack_rate = 0.3;

    std::string out_dir = (fs::temp_directory_path() / "change_micro_experiment").string();
    fs::remove_all(out_dir);
    auto result = run_experiment(cfg, out_dir);
    CHECK(result.methods.size() == 3);
    std::set<std::string> methods;
    for (const auto& mr : result.methods) {
        methods.insert(std::string(mode_name(mr.mode)));
        CHECK(mr.clean_test.num_classes == 4);
        CHECK(mr.att_test.num_classes == 4);
    }
    CHECK(methods == std::set<std::string>{"BASE", "CVGI", "CHANGE"});
    CHECK(fs::exists(fs::path(out_dir) / "report.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "results.jsonl"));
    CHECK(fs::exists(fs::path(out_dir) / "base.ckpt"));
    CHECK(fs::exists(fs::path(out_dir) / "change.ckpt"));
    // 3 methods x 4 settings rows
    std::ifstream results((fs::path(out_dir) / "results.jsonl").string());
    int rows = 0;
    std::string line;
    while (std::getline(results, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 12);
    // report table mentions each method once per test setting
    CHECK(result.report_table.find("BASE") != std::string::npos);
    CHECK(result.report_table.find("CHANGE") != std::string::npos);
    fs::remove_all(out_dir);
}
