#include "change/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "change/rng.hpp"
#include "change/utf8.hpp"

namespace change {

using nlohmann::json;

json to_json(const Example& e, bool is_pair) {
    if (is_pair) {
        return json{{"id", e.id}, {"text_a", e.text_a}, {"text_b", e.text_b}, {"label", e.label}};
    }
    return json{{"id", e.id}, {"text", e.text_a}, {"label", e.label}};
}

Example example_from_json(const json& j, bool is_pair) {
    Example e;
    e.id = j.at("id").get<int>();
    e.label = j.at("label").get<int>();
    if (is_pair) {
        e.text_a = j.at("text_a").get<std::string>();
        e.text_b = j.at("text_b").get<std::string>();
    } else {
        e.text_a = j.at("text").get<std::string>();
    }
    return e;
}

void save_split(const DatasetSplit& split, bool is_pair, std::ostream& out) {
    for (const auto& e : split.items) out << to_json(e, is_pair).dump() << '\n';
}

DatasetSplit load_split(std::istream& in, bool is_pair) {
    DatasetSplit split;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            split.items.push_back(example_from_json(json::parse(line), is_pair));
        } catch (const json::exception& e) {
            throw DataError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return split;
}

DatasetSplit load_split_file(const std::string& path, bool is_pair) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    return load_split(in, is_pair);
}

LabeledDataset attack_dataset(const LabeledDataset& clean, const VariationGraph& g,
                              const AttackPolicy& policy, std::uint64_t seed) {
    LabeledDataset out = clean;
    auto attack_split = [&](DatasetSplit& split, std::uint64_t split_tag) {
        for (auto& ex : split.items) {
            Rng rng = make_rng(seed, (split_tag << 32) | static_cast<std::uint32_t>(ex.id));
            ex.text_a = attack_text(ex.text_a, g, policy, rng).attacked;
            if (!ex.text_b.empty()) ex.text_b = attack_text(ex.text_b, g, policy, rng).attacked;
        }
    };
    attack_split(out.dev, 1);
    attack_split(out.test, 2);
    out.provenance = "attacked(seed=" + std::to_string(seed) +
                     ",rate=" + std::to_string(policy.attack_rate) + ")";
    return out;
}

// --- synthetic tasks -------------------------------------------------------------

namespace {

struct Lexicon {
    std::vector<std::vector<std::string>> topic_words;  // per class
    std::vector<std::string> toxic_words;
    std::vector<std::string> filler_words;
};

// Keyword characters are chosen so that their graph neighborhoods never
// overlap with each other or with filler characters: an attack on a keyword
// can only produce a character that carries no label signal of its own, and
// an attack on a filler can never fabricate a keyword. The label evidence
// delta between plain inputs and span-reconstructed inputs is then exactly
// the recovery path through the graph.
Lexicon build_lexicon(const PinyinTable& table, const VariationGraph& g, int classes, Rng& rng) {
    std::vector<std::string> chars;
    for (const auto& [ch, syllables] : table.entries) {
        (void)syllables;
        chars.push_back(ch);
    }
    std::shuffle(chars.begin(), chars.end(), rng);

    std::set<std::string> blocked;  // keyword chars and everything attack-reachable from them
    auto quarantine = [&](const std::string& c) {
        blocked.insert(c);
        for (const auto& nb : g.neighbors(c)) {
            blocked.insert(nb.node);
            if (nb.rel == Relation::CharToPinyin) {
                for (const auto& nb2 : g.neighbors(nb.node)) blocked.insert(nb2.node);
            }
        }
    };
    std::size_t cursor = 0;
    auto take_keyword_char = [&]() {
        while (cursor < chars.size() && blocked.count(chars[cursor])) ++cursor;
        if (cursor >= chars.size()) {
            throw DataError("character table too small for keyword quarantine");
        }
        std::string c = chars[cursor++];
        quarantine(c);
        return c;
    };
    auto take_word = [&]() { return take_keyword_char() + take_keyword_char(); };

    Lexicon lex;
    constexpr int kWordsPerClass = 6;
    for (int c = 0; c < classes; ++c) {
        std::vector<std::string> words;
        for (int w = 0; w < kWordsPerClass; ++w) words.push_back(take_word());
        lex.topic_words.push_back(std::move(words));
    }
    for (int w = 0; w < 6; ++w) lex.toxic_words.push_back(take_word());

    // fillers come from outside every keyword neighborhood
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < chars.size(); ++i) {
        if (!blocked.count(chars[i])) rest.push_back(chars[i]);
    }
    if (rest.size() < 24) throw DataError("character table too small for filler words");
    std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
    for (int w = 0; w < 60; ++w) {
        std::string a = rest[pick(rng)];
        std::string b = rest[pick(rng)];
        while (b == a) b = rest[pick(rng)];
        lex.filler_words.push_back(a + b);
    }
    return lex;
}

std::string make_sentence(const Lexicon& lex, int topic, int toxic_words, Rng& rng) {
    // one keyword word usually, sometimes two: the label signal is deliberately
    // thin so that character attacks on it matter
    std::uniform_int_distribution<int> kw_count(1, 2);
    std::uniform_int_distribution<int> fill_count(4, 6);
    std::vector<std::string> words;
    int kws = kw_count(rng);
    std::vector<std::size_t> kw_idx(lex.topic_words[static_cast<std::size_t>(topic)].size());
    std::iota(kw_idx.begin(), kw_idx.end(), 0);
    std::shuffle(kw_idx.begin(), kw_idx.end(), rng);
    for (int i = 0; i < kws; ++i) {
        words.push_back(lex.topic_words[static_cast<std::size_t>(topic)][kw_idx[static_cast<std::size_t>(i)]]);
    }
    std::uniform_int_distribution<std::size_t> fill_pick(0, lex.filler_words.size() - 1);
    int fills = fill_count(rng);
    for (int i = 0; i < fills; ++i) words.push_back(lex.filler_words[fill_pick(rng)]);
    std::uniform_int_distribution<std::size_t> toxic_pick(0, lex.toxic_words.size() - 1);
    for (int i = 0; i < toxic_words; ++i) words.push_back(lex.toxic_words[toxic_pick(rng)]);
    std::shuffle(words.begin(), words.end(), rng);
    std::string out;
    for (const auto& w : words) out += w;
    return out;
}

DatasetSplit make_topic_split(const Lexicon& lex, int classes, int size, Rng& rng) {
    DatasetSplit split;
    for (int i = 0; i < size; ++i) {
        Example e;
        e.id = i;
        e.label = i % classes;
        e.text_a = make_sentence(lex, e.label, 0, rng);
        split.items.push_back(std::move(e));
    }
    return split;
}

DatasetSplit make_pair_split(const Lexicon& lex, int classes, int size, Rng& rng) {
    DatasetSplit split;
    std::uniform_int_distribution<int> topic_pick(0, classes - 1);
    for (int i = 0; i < size; ++i) {
        Example e;
        e.id = i;
        e.label = i % 2;
        int ta = topic_pick(rng);
        int tb = ta;
        if (e.label == 0) {
            while (tb == ta) tb = topic_pick(rng);
        }
        e.text_a = make_sentence(lex, ta, 0, rng);
        e.text_b = make_sentence(lex, tb, 0, rng);
        split.items.push_back(std::move(e));
    }
    return split;
}

DatasetSplit make_toxic_split(const Lexicon& lex, int classes, int size, Rng& rng) {
    DatasetSplit split;
    std::uniform_int_distribution<int> topic_pick(0, classes - 1);
    std::uniform_int_distribution<int> toxic_count(1, 2);
    for (int i = 0; i < size; ++i) {
        Example e;
        e.id = i;
        e.label = i % 2;
        e.text_a = make_sentence(lex, topic_pick(rng), e.label == 1 ? toxic_count(rng) : 0, rng);
        split.items.push_back(std::move(e));
    }
    return split;
}

}  // namespace

SyntheticTasks make_synthetic_tasks(const PinyinTable& table, const VariationGraph& g,
                                    std::uint64_t seed, const SyntheticConfig& cfg) {
    SyntheticTasks tasks;
    Rng lex_rng = make_rng(seed, 1);
    Lexicon lex = build_lexicon(table, g, cfg.topic_classes, lex_rng);

    {
        Rng rng = make_rng(seed, 2);
        tasks.topic.name = "toy-topic";
        tasks.topic.num_classes = cfg.topic_classes;
        tasks.topic.train = make_topic_split(lex, cfg.topic_classes, cfg.train_size, rng);
        tasks.topic.dev = make_topic_split(lex, cfg.topic_classes, cfg.dev_size, rng);
        tasks.topic.test = make_topic_split(lex, cfg.topic_classes, cfg.test_size, rng);
    }
    {
        Rng rng = make_rng(seed, 3);
        tasks.pairing.name = "toy-pair";
        tasks.pairing.num_classes = 2;
        tasks.pairing.is_pair = true;
        tasks.pairing.train = make_pair_split(lex, cfg.topic_classes, cfg.train_size, rng);
        tasks.pairing.dev = make_pair_split(lex, cfg.topic_classes, cfg.dev_size, rng);
        tasks.pairing.test = make_pair_split(lex, cfg.topic_classes, cfg.test_size, rng);
    }
    {
        Rng rng = make_rng(seed, 4);
        tasks.toxic.name = "toy-toxic";
        tasks.toxic.num_classes = 2;
        tasks.toxic.train = make_toxic_split(lex, cfg.topic_classes, cfg.train_size, rng);
        tasks.toxic.dev = make_toxic_split(lex, cfg.topic_classes, cfg.dev_size, rng);
        tasks.toxic.test = make_toxic_split(lex, cfg.topic_classes, cfg.test_size, rng);
    }
    {
        Rng rng = make_rng(seed, 5);
        for (int i = 0; i < cfg.corpus_sentences; ++i) {
            int toxic = (i % 7 == 0) ? 1 : 0;
            tasks.corpus.push_back(make_sentence(lex, i % cfg.topic_classes, toxic, rng));
        }
    }
    return tasks;
}

// --- metrics --------------------------------------------------------------------

MetricsReport MetricsReport::from_confusion(std::vector<std::vector<std::int64_t>> confusion) {
    MetricsReport r;
    r.num_classes = static_cast<int>(confusion.size());
    r.confusion = std::move(confusion);
    const int c = r.num_classes;
    std::vector<std::int64_t> tp(c, 0), fp(c, 0), fn(c, 0);
    for (int gold = 0; gold < c; ++gold) {
        for (int pred = 0; pred < c; ++pred) {
            std::int64_t count = r.confusion[static_cast<std::size_t>(gold)][static_cast<std::size_t>(pred)];
            if (gold == pred) {
                tp[static_cast<std::size_t>(gold)] += count;
            } else {
                fn[static_cast<std::size_t>(gold)] += count;
                fp[static_cast<std::size_t>(pred)] += count;
            }
        }
    }
    auto safe_div = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    double macro_f1 = 0, macro_p = 0, macro_r = 0;
    for (int k = 0; k < c; ++k) {
        auto i = static_cast<std::size_t>(k);
        double p = safe_div(static_cast<double>(tp[i]), static_cast<double>(tp[i] + fp[i]));
        double rec = safe_div(static_cast<double>(tp[i]), static_cast<double>(tp[i] + fn[i]));
        double f1 = safe_div(2.0 * static_cast<double>(tp[i]),
                             static_cast<double>(2 * tp[i] + fp[i] + fn[i]));
        macro_f1 += f1;
        macro_p += p;
        macro_r += rec;
    }
    r.macro_f1 = c > 0 ? macro_f1 / c : 0;
    if (c == 2) {
        // positive-class view, the convention of binary toxic-style reports
        r.precision = safe_div(static_cast<double>(tp[1]), static_cast<double>(tp[1] + fp[1]));
        r.recall = safe_div(static_cast<double>(tp[1]), static_cast<double>(tp[1] + fn[1]));
        r.micro_f1 = safe_div(2.0 * static_cast<double>(tp[1]),
                              static_cast<double>(2 * tp[1] + fp[1] + fn[1]));
    } else {
        std::int64_t gtp = 0, gfp = 0, gfn = 0;
        for (int k = 0; k < c; ++k) {
            auto i = static_cast<std::size_t>(k);
            gtp += tp[i];
            gfp += fp[i];
            gfn += fn[i];
        }
        r.micro_f1 = safe_div(2.0 * static_cast<double>(gtp),
                              static_cast<double>(2 * gtp + gfp + gfn));
        r.precision = c > 0 ? macro_p / c : 0;
        r.recall = c > 0 ? macro_r / c : 0;
    }
    return r;
}

MetricsReport MetricsReport::from_predictions(const std::vector<int>& gold,
                                              const std::vector<int>& pred, int num_classes) {
    if (gold.size() != pred.size()) throw DataError("metrics: gold/pred length mismatch");
    if (gold.empty()) throw DataError("metrics: empty prediction set");
    std::vector<std::vector<std::int64_t>> confusion(
        static_cast<std::size_t>(num_classes),
        std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
            throw DataError("metrics: label out of range");
        }
        confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])]++;
    }
    return from_confusion(std::move(confusion));
}

MetricsReport MetricsReport::from_binary_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                                std::int64_t tn) {
    std::vector<std::vector<std::int64_t>> confusion = {{tn, fp}, {fn, tp}};
    return from_confusion(std::move(confusion));
}

json MetricsReport::to_json() const {
    return json{{"num_classes", num_classes}, {"macro_f1", macro_f1},  {"micro_f1", micro_f1},
                {"precision", precision},     {"recall", recall},      {"confusion", confusion}};
}

}  // namespace change
