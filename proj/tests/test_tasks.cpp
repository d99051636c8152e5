#include <doctest.h>

#include <cmath>
#include <sstream>

#include "change/tasks.hpp"
#include "change/utf8.hpp"

using namespace change;

namespace {

struct TaskFixture {
    VariationGraph g;
    Vocabulary v;

    TaskFixture() {
        PinyinTable table;
        table.entries["微"] = {"wei1"};
        table.entries["薇"] = {"wei1"};
        table.entries["块"] = {"kuai4"};
        table.entries["快"] = {"kuai4"};
        table.entries["筷"] = {"kuai4"};
        table.entries["单"] = {"dan1"};
        table.entries["丹"] = {"dan1"};
        g = build_default_graph(table, {{"微", "徽"}, {"块", "坏"}});
        v = Vocabulary::build({"加微信块快筷单丹徽坏您有"}, g);
    }

    EncoderConfig model_config() const {
        EncoderConfig cfg;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.dim = 16;
        cfg.ffn_dim = 32;
        cfg.vocab_size = v.size();
        cfg.max_len = 64;
        cfg.num_classes = 2;
        cfg.dropout = 0.0;
        cfg.seed = 3;
        return cfg;
    }

    std::vector<PretrainSample> corpus(int lines, double rate = 0.5) const {
        AttackPolicy policy;
        policy.attack_rate = rate;
        std::vector<PretrainSample> out;
        for (int i = 0; i < lines; ++i) {
            Rng rng = make_rng(17, static_cast<std::uint64_t>(i));
            out.push_back(generate_pretrain_sample("加微信块快单丹您有", g, policy, 2, rng));
        }
        return out;
    }
};

ReconstructedInput fake_reconstruction(const TaskFixture& f, int span_count) {
    auto base = make_input(f.v, "微块单");
    std::vector<AttackingPathSpan> spans;
    for (int i = 0; i < span_count; ++i) {
        spans.push_back({1 + (i % 3), static_cast<Relation>(i % 2), "薇", f.v.id_of("薇")});
    }
    // bypass sorting collisions by using reconstruct directly with a large cap
    return reconstruct(base, spans, 3 * span_count + 16);
}

}  // namespace

TEST_CASE("record_anchor_tokens maps merged syllables to one token") {
    TaskFixture f;
    AttackedSample s;
    s.raw = "加微信";
    s.attacked = "加wei1信";
    s.records = {{1, "微", Relation::CharToPinyin, "wei1"}};
    auto anchors = record_anchor_tokens(s, f.v);
    REQUIRE(anchors.size() == 1);
    CHECK(anchors[0] == 2);  // [CLS] 加 wei1 信 [SEP]

    auto seq = f.v.encode(s.attacked);
    CHECK(seq.size() == 3);
}

TEST_CASE("atp labels are a deterministic function of records") {
    TaskFixture f;
    auto base = make_input(f.v, "加微信");
    auto labels = build_atp_labels(base, {2});
    REQUIRE(labels.labels.size() == 3);
    CHECK(labels.labels[0] == std::pair<int, int>{1, 0});
    CHECK(labels.labels[1] == std::pair<int, int>{2, 1});
    CHECK(labels.labels[2] == std::pair<int, int>{3, 0});
    auto again = build_atp_labels(base, {2});
    CHECK(labels.labels == again.labels);
}

TEST_CASE("atp_loss analytic anchors") {
    // single token with p = 0.5 -> ln 2
    CHECK(atp_loss({0.0}, {1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(atp_loss({0.0}, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // saturated correct predictions -> loss ~ 0
    CHECK(atp_loss({30.0, 30.0}, {1, 1}) < 1e-9);
    CHECK(atp_loss({-30.0}, {0}) < 1e-9);
    CHECK_THROWS_AS(atp_loss({}, {}), DataError);
}

TEST_CASE("atp_loss matches a term-by-term oracle on random cases") {
    Rng rng = make_rng(88);
    std::uniform_real_distribution<double> logit(-6.0, 6.0);
    std::uniform_int_distribution<int> label(0, 1);
    std::uniform_int_distribution<int> len(1, 20);
    for (int trial = 0; trial < 100; ++trial) {
        int n = len(rng);
        std::vector<double> zs;
        std::vector<int> ys;
        for (int i = 0; i < n; ++i) {
            zs.push_back(logit(rng));
            ys.push_back(label(rng));
        }
        // oracle: direct probability formula, independently summed
        double oracle = 0;
        for (int i = 0; i < n; ++i) {
            double p = 1.0 / (1.0 + std::exp(-zs[static_cast<std::size_t>(i)]));
            oracle += ys[static_cast<std::size_t>(i)] == 1 ? -std::log(p) : -std::log(1.0 - p);
        }
        oracle /= n;
        CHECK(atp_loss(zs, ys) == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("amp/acp loss analytic anchors") {
    // probability 1 on the originals -> 0
    Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 50);
    logits(0, 7) = 60.0;
    logits(1, 8) = 60.0;
    CHECK(amp_loss(logits, {{0, 7}, {1, 8}}) < 1e-12);
    // one masked token, uniform logits over vocab 100 -> ln 100
    Eigen::MatrixXd uniform = Eigen::MatrixXd::Zero(1, 100);
    CHECK(acp_loss(uniform, {{0, 42}}) == doctest::Approx(std::log(100.0)).epsilon(1e-12));
    // empty target -> 0
    CHECK(amp_loss(uniform, {}) == 0.0);
}

TEST_CASE("amp/acp loss matches a gather-and-sum oracle") {
    Rng rng = make_rng(99);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 6, vocab = 30;
        Eigen::MatrixXd logits(n, vocab);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < vocab; ++j) logits(i, j) = u(rng);
        }
        std::vector<std::pair<int, int>> targets;
        for (int i = 0; i < n; ++i) {
            if (rng() % 2 == 0) targets.emplace_back(i, static_cast<int>(rng() % vocab));
        }
        // oracle: explicit softmax per row, then -log of the gathered entry
        double oracle = 0;
        for (const auto& [pos, tid] : targets) {
            double denom = 0;
            for (int j = 0; j < vocab; ++j) denom += std::exp(logits(pos, j));
            oracle += -std::log(std::exp(logits(pos, tid)) / denom);
        }
        CHECK(masked_ce_sum(logits, targets) == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("masking-count law") {
    CHECK(masked_count(20, 6, 0.15) == 3);
    CHECK(masked_count(10, 6, 0.15) == 2);  // ceil(1.5)
    CHECK(masked_count(2, 6, 0.15) == 1);
    CHECK(masked_count(1, 6, 0.15) == 1);
    CHECK(masked_count(0, 6, 0.15) == 0);
    CHECK(masked_count(7, 6, 0.15) == 2);   // ceil(1.05)
    CHECK(masked_count(40, 6, 0.15) == 6);  // exact 6.0
    // integer-arithmetic oracle over a wide range: ceil(3c/20) == (3c+19)/20
    for (int c = 1; c <= 5000; ++c) {
        int expect = c > 6 ? (3 * c + 19) / 20 : 1;
        CHECK(masked_count(c, 6, 0.15) == expect);
    }
}

TEST_CASE("amp_masking masks marker-open tokens per the law") {
    TaskFixture f;
    Rng rng = make_rng(5);
    for (int span_count : {0, 1, 2, 7, 10, 20}) {
        auto r = fake_reconstruction(f, span_count);
        REQUIRE(static_cast<int>(r.spans.size()) == span_count);
        auto target = amp_masking(r, 6, 0.15, rng);
        int expect = span_count == 0 ? 0 : (span_count > 6 ? (3 * span_count + 19) / 20 : 1);
        CHECK(static_cast<int>(target.targets.size()) == expect);
        for (const auto& [pos, original] : target.targets) {
            CHECK(r.tokens.tags[static_cast<std::size_t>(pos)] == SegTag::MarkerOpen);
            CHECK(original == r.tokens.ids[static_cast<std::size_t>(pos)]);
            CHECK(is_marker_open_id(original));
        }
    }
}

TEST_CASE("acp_masking masks candidate tokens per the law") {
    TaskFixture f;
    Rng rng = make_rng(6);
    for (int span_count : {1, 10}) {
        auto r = fake_reconstruction(f, span_count);
        auto target = acp_masking(r, 6, 0.15, rng);
        int expect = span_count > 6 ? (3 * span_count + 19) / 20 : 1;
        CHECK(static_cast<int>(target.targets.size()) == expect);
        for (const auto& [pos, original] : target.targets) {
            CHECK(r.tokens.tags[static_cast<std::size_t>(pos)] == SegTag::Candidate);
            CHECK(original == r.tokens.ids[static_cast<std::size_t>(pos)]);
        }
    }
}

TEST_CASE("masking-count law over random reconstructions") {
    TaskFixture f;
    Rng rng = make_rng(7);
    std::uniform_int_distribution<int> spans(0, 30);
    for (int trial = 0; trial < 1000; ++trial) {
        int count = spans(rng);
        auto r = fake_reconstruction(f, count);
        auto amp = amp_masking(r, 6, 0.15, rng);
        auto acp = acp_masking(r, 6, 0.15, rng);
        int expect = count == 0 ? 0 : (count > 6 ? (3 * count + 19) / 20 : 1);
        CHECK(static_cast<int>(amp.targets.size()) == expect);
        CHECK(static_cast<int>(acp.targets.size()) == expect);
    }
}

TEST_CASE("apply_mlm_target replaces exactly the targeted ids") {
    TaskFixture f;
    auto r = fake_reconstruction(f, 4);
    Rng rng = make_rng(8);
    auto target = amp_masking(r, 6, 0.15, rng);
    auto ids = r.tokens.ids;
    apply_mlm_target(ids, target);
    int masked = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != r.tokens.ids[i]) {
            CHECK(ids[i] == kMaskId);
            ++masked;
        }
    }
    CHECK(masked == static_cast<int>(target.targets.size()));
}

TEST_CASE("build_pretrain_example wires anchors, labels, and spans together") {
    TaskFixture f;
    auto corpus = f.corpus(20);
    for (const auto& sample : corpus) {
        auto ex = build_pretrain_example(sample, f.v, 96);
        // every true record becomes a span with candidate == original
        std::size_t true_spans = 0;
        for (const auto& span : ex.rec.spans) {
            bool is_true = false;
            for (const auto& rec : sample.base.records) {
                if (span.candidate == rec.original && span.rel == rec.rel) is_true = true;
            }
            for (const auto& fp : sample.false_paths) {
                if (span.candidate == fp.variant && span.rel == fp.rel) is_true = true;
            }
            CHECK(is_true);
            if (is_true) ++true_spans;
        }
        CHECK(ex.rec.spans.size() == sample.base.records.size() + sample.false_paths.size());
        (void)true_spans;
        // labels: exactly the attacked token positions carry 1
        int ones = 0;
        for (const auto& [pos, y] : ex.atp_labels) {
            (void)pos;
            ones += y;
        }
        CHECK(ones == static_cast<int>(sample.base.records.size()));
        // mask matches its own reconstruction
        CHECK(ex.mask.size() == static_cast<int>(ex.rec.tokens.size()));
    }
}

TEST_CASE("joint loss is linear in the weight vector for fixed logits") {
    TaskFixture f;
    auto cfg = f.model_config();
    EncoderModel m(cfg);
    auto corpus = f.corpus(4);
    auto ex = build_pretrain_example(corpus[0], f.v, 96);
    REQUIRE(!ex.rec.spans.empty());

    Rng rng = make_rng(9);
    auto amp = amp_masking(ex.rec, 6, 0.15, rng);
    auto acp = acp_masking(ex.rec, 6, 0.15, rng);
    LossSpec spec;
    spec.ids = ex.rec.tokens.ids;
    apply_mlm_target(spec.ids, amp);
    apply_mlm_target(spec.ids, acp);
    spec.mask = ex.mask;
    spec.atp_labels = ex.atp_labels;
    spec.amp_targets = amp.targets;
    spec.acp_targets = acp.targets;

    auto with_weights = [&](double wa, double wm, double wc) {
        LossSpec s = spec;
        s.w_atp = wa;
        s.w_amp = wm;
        s.w_acp = wc;
        double total = loss_and_gradients(m, {s}, nullptr).total;
        m.zero_grads();
        return total;
    };
    double joint = with_weights(1, 1, 1);
    double parts = with_weights(2, 0, 0) / 2 + with_weights(0, 2, 0) / 2 + with_weights(0, 0, 2) / 2;
    CHECK(joint == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("pretrain: AMP/ACP weights zero reduce to ATP-only logs") {
    TaskFixture f;
    EncoderModel m(f.model_config());
    PretrainConfig cfg;
    cfg.w_amp = 0;
    cfg.w_acp = 0;
    cfg.steps = 5;
    cfg.batch_size = 4;
    cfg.warmup_steps = 5;
    cfg.log_every = 1;
    cfg.length_cap = 96;
    auto log = pretrain(m, f.corpus(12), f.g, f.v, cfg);
    REQUIRE(!log.entries.empty());
    for (const auto& e : log.entries) {
        CHECK(e.amp == 0.0);
        CHECK(e.acp == 0.0);
        CHECK(e.atp > 0.0);
    }
}

TEST_CASE("pretrain rejects corpora that disagree with the graph") {
    TaskFixture f;
    auto corpus = f.corpus(3);
    corpus[0].base.records.push_back({0, "加", Relation::Pinyin, "您"});
    PretrainConfig cfg;
    cfg.steps = 1;
    cfg.batch_size = 1;
    EncoderModel m(f.model_config());
    CHECK_THROWS_AS(pretrain(m, corpus, f.g, f.v, cfg), DataError);
}

TEST_CASE("pretrain loop is seed-deterministic") {
    TaskFixture f;
    PretrainConfig cfg;
    cfg.steps = 12;
    cfg.batch_size = 4;
    cfg.warmup_steps = 10;
    cfg.log_every = 3;
    cfg.length_cap = 96;
    auto corpus = f.corpus(10);

    EncoderModel m1(f.model_config());
    EncoderModel m2(f.model_config());
    std::ostringstream log1, log2;
    pretrain(m1, corpus, f.g, f.v, cfg, &log1);
    pretrain(m2, corpus, f.g, f.v, cfg, &log2);
    CHECK(log1.str() == log2.str());
    auto p1 = std::as_const(m1).parameters();
    auto p2 = std::as_const(m2).parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i]->value == p2[i]->value);
}

TEST_CASE("pretrain: 300 steps lower all three losses on a 500-sentence corpus") {
    TaskFixture f;
    EncoderModel m(f.model_config());
    PretrainConfig cfg;
    cfg.steps = 300;
    cfg.batch_size = 8;
    cfg.lr = 3e-4;
    cfg.warmup_steps = 30;
    cfg.log_every = 299;
    cfg.length_cap = 96;
    auto log = pretrain(m, f.corpus(500), f.g, f.v, cfg);
    REQUIRE(log.entries.size() >= 2);
    const auto& first = log.entries.front();
    const auto& last = log.entries.back();
    CHECK(last.atp < first.atp);
    CHECK(last.amp < first.amp);
    CHECK(last.acp < first.acp);
}

TEST_CASE("train_mlm runs and reduces the loss") {
    TaskFixture f;
    auto cfg = f.model_config();
    EncoderModel m(cfg);
    std::vector<std::string> sentences;
    for (int i = 0; i < 50; ++i) sentences.push_back("加微信块快单丹您有");
    MlmTrainConfig mcfg;
    mcfg.steps = 120;
    mcfg.batch_size = 8;
    mcfg.warmup_steps = 20;
    mcfg.log_every = 119;
    auto log = train_mlm(m, sentences, f.v, mcfg);
    REQUIRE(log.entries.size() >= 2);
    CHECK(log.entries.back().mlm < log.entries.front().mlm);
}

TEST_CASE("prepare_input: BASE ignores graph and scorer") {
    TaskFixture f;
    Example ex;
    ex.text_a = "加微信";
    auto prepared = prepare_input(ex, false, Mode::Base, f.v, nullptr, nullptr, CvgiOptions{});
    CHECK(prepared.ids.size() == 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) CHECK(prepared.mask.at(i, j));
    }
}

TEST_CASE("prepare_input: CVGI with no flagged neighbors equals BASE") {
    TaskFixture f;
    EncoderModel scorer(f.model_config());
    Example ex;
    ex.text_a = "您有";  // characters without graph neighbors
    auto base = prepare_input(ex, false, Mode::Base, f.v, nullptr, nullptr, CvgiOptions{});
    auto cvgi = prepare_input(ex, false, Mode::Cvgi, f.v, &f.g, &scorer, CvgiOptions{});
    CHECK(base.ids == cvgi.ids);
    CHECK(base.mask == cvgi.mask);
    // and the forward outputs agree on the same weights
    auto o1 = scorer.forward(base.ids, base.mask);
    auto o2 = scorer.forward(cvgi.ids, cvgi.mask);
    CHECK(o1.hidden == o2.hidden);
}

TEST_CASE("prepare_input: CVGI requires graph and scorer") {
    TaskFixture f;
    Example ex;
    ex.text_a = "加微信";
    CHECK_THROWS_AS(prepare_input(ex, false, Mode::Cvgi, f.v, nullptr, nullptr, CvgiOptions{}),
                    DataError);
}

TEST_CASE("finetune: BASE mode never touches the graph and learns a toy task") {
    TaskFixture f;
    LabeledDataset data;
    data.num_classes = 2;
    Rng rng = make_rng(100);
    auto fill = [&](DatasetSplit& split, int n, int base_id) {
        for (int i = 0; i < n; ++i) {
            Example e;
            e.id = base_id + i;
            e.label = i % 2;
            e.text_a = e.label == 1 ? "微信加好" : "块快单丹";
            split.items.push_back(e);
        }
    };
    fill(data.train, 32, 0);
    fill(data.dev, 8, 1000);
    fill(data.test, 8, 2000);

    EncoderModel m(f.model_config());
    FinetuneConfig cfg;
    cfg.max_epochs = 10;
    cfg.batch_size = 8;
    cfg.lr = 3e-3;
    cfg.warmup_steps = 4;
    cfg.patience = 5;
    // null graph/scorer: would throw if BASE ever consulted them
    auto outcome = finetune(m, data, Mode::Base, nullptr, nullptr, f.v, cfg);
    CHECK(outcome.best_dev_macro_f1 > 0.9);
    auto report = evaluate_split(m, Mode::Base, nullptr, nullptr, f.v, false, data.test,
                                 cfg.cvgi);
    CHECK(report.macro_f1 > 0.9);
    (void)rng;
}

TEST_CASE("evaluate_split rejects empty splits") {
    TaskFixture f;
    EncoderModel m(f.model_config());
    DatasetSplit empty;
    CHECK_THROWS_AS(
        evaluate_split(m, Mode::Base, nullptr, nullptr, f.v, false, empty, CvgiOptions{}),
        DataError);
}

TEST_CASE("mode names round-trip") {
    for (Mode m : {Mode::Base, Mode::Cvgi, Mode::Change}) {
        CHECK(mode_from_name(mode_name(m)) == m);
    }
    CHECK(!mode_from_name("nope").has_value());
}
