#include "change/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "change/utf8.hpp"

namespace change {

using nlohmann::json;

bool AttackPolicy::relation_enabled(Relation r) const {
    switch (r) {
        case Relation::Pinyin: return enable_pinyin;
        case Relation::Visual: return enable_visual;
        case Relation::CharToPinyin: return enable_char_to_pinyin;
    }
    return false;
}

AttackedSample attack_text(const std::string& raw, const VariationGraph& g,
                           const AttackPolicy& policy, Rng& rng) {
    AttackedSample sample;
    sample.raw = raw;

    auto chars = utf8_chars(raw);
    std::vector<int> attackable;
    for (std::size_t i = 0; i < chars.size(); ++i) {
        for (const auto& nb : g.neighbors(chars[i])) {
            if (policy.relation_enabled(nb.rel)) {
                attackable.push_back(static_cast<int>(i));
                break;
            }
        }
    }

    long target = std::lround(policy.attack_rate * static_cast<double>(attackable.size()));
    target = std::min<long>(target, policy.max_attacks_per_sentence);
    target = std::clamp<long>(target, 0, static_cast<long>(attackable.size()));

    // partial Fisher-Yates: first `target` entries are a uniform sample
    for (long i = 0; i < target; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), attackable.size() - 1);
        std::swap(attackable[static_cast<std::size_t>(i)], attackable[pick(rng)]);
    }
    std::vector<int> positions(attackable.begin(), attackable.begin() + target);
    std::sort(positions.begin(), positions.end());

    for (int pos : positions) {
        const auto& all = g.neighbors(chars[static_cast<std::size_t>(pos)]);
        std::vector<VariationGraph::Neighbor> enabled;
        for (const auto& nb : all) {
            if (policy.relation_enabled(nb.rel)) enabled.push_back(nb);
        }
        std::uniform_int_distribution<std::size_t> pick(0, enabled.size() - 1);
        const auto& choice = enabled[pick(rng)];
        sample.records.push_back(
            {pos, chars[static_cast<std::size_t>(pos)], choice.rel, choice.node});
    }

    std::string attacked;
    std::size_t rec = 0;
    for (std::size_t i = 0; i < chars.size(); ++i) {
        if (rec < sample.records.size() &&
            sample.records[rec].position == static_cast<int>(i)) {
            attacked += sample.records[rec].variant;
            ++rec;
        } else {
            attacked += chars[i];
        }
    }
    sample.attacked = std::move(attacked);
    return sample;
}

std::vector<std::pair<int, int>> attacked_spans(const AttackedSample& sample) {
    std::vector<std::pair<int, int>> spans;
    int offset = 0;
    for (const auto& rec : sample.records) {
        int len = static_cast<int>(utf8_length(rec.variant));
        spans.emplace_back(rec.position + offset, len);
        offset += len - 1;
    }
    return spans;
}

std::string restore(const AttackedSample& sample) {
    auto chars = utf8_chars(sample.attacked);
    auto spans = attacked_spans(sample);
    std::string out;
    std::size_t i = 0;
    std::size_t rec = 0;
    while (i < chars.size()) {
        if (rec < spans.size() && spans[rec].first == static_cast<int>(i)) {
            out += sample.records[rec].original;
            i += static_cast<std::size_t>(spans[rec].second);
            ++rec;
        } else {
            out += chars[i];
            ++i;
        }
    }
    return out;
}

PretrainSample generate_pretrain_sample(const std::string& raw, const VariationGraph& g,
                                        const AttackPolicy& policy, int false_count, Rng& rng) {
    PretrainSample sample;
    sample.base = attack_text(raw, g, policy, rng);

    // candidate pool: neighbors of the observed (attacked) token, any
    // relation, excluding the true original
    std::vector<AttackRecord> pool;
    for (const auto& rec : sample.base.records) {
        for (const auto& nb : g.neighbors(rec.variant)) {
            if (nb.node == rec.original) continue;
            pool.push_back({rec.position, rec.variant, nb.rel, nb.node});
        }
    }
    long take = std::min<long>(false_count, static_cast<long>(pool.size()));
    for (long i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
    }
    sample.false_paths.assign(pool.begin(), pool.begin() + take);
    std::sort(sample.false_paths.begin(), sample.false_paths.end(),
              [](const AttackRecord& x, const AttackRecord& y) {
                  if (x.position != y.position) return x.position < y.position;
                  if (x.rel != y.rel) return x.rel < y.rel;
                  return x.variant < y.variant;
              });
    return sample;
}

json to_json(const AttackRecord& r) {
    return json{{"pos", r.position},
                {"orig", r.original},
                {"rel", std::string(relation_tag(r.rel))},
                {"var", r.variant}};
}

AttackRecord attack_record_from_json(const json& j) {
    AttackRecord r;
    r.position = j.at("pos").get<int>();
    r.original = j.at("orig").get<std::string>();
    auto rel = relation_from_tag(j.at("rel").get<std::string>());
    if (!rel) throw DataError("bad relation tag in sample record");
    r.rel = *rel;
    r.variant = j.at("var").get<std::string>();
    return r;
}

json to_json(const PretrainSample& s) {
    json records = json::array();
    for (const auto& r : s.base.records) records.push_back(to_json(r));
    json false_paths = json::array();
    for (const auto& r : s.false_paths) false_paths.push_back(to_json(r));
    return json{{"raw", s.base.raw},
                {"attacked", s.base.attacked},
                {"records", records},
                {"false_paths", false_paths}};
}

PretrainSample pretrain_sample_from_json(const json& j) {
    PretrainSample s;
    s.base.raw = j.at("raw").get<std::string>();
    s.base.attacked = j.at("attacked").get<std::string>();
    for (const auto& r : j.at("records")) s.base.records.push_back(attack_record_from_json(r));
    for (const auto& r : j.at("false_paths")) s.false_paths.push_back(attack_record_from_json(r));
    return s;
}

std::size_t build_corpus(std::istream& in, const VariationGraph& g, const AttackPolicy& policy,
                         int false_count, std::ostream& out) {
    std::string line;
    std::size_t line_index = 0;
    std::size_t written = 0;
    while (std::getline(in, line)) {
        std::size_t idx = line_index++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Rng rng = make_rng(policy.seed, idx);
        PretrainSample sample = generate_pretrain_sample(line, g, policy, false_count, rng);
        out << to_json(sample).dump() << '\n';
        if (!out) throw DataError("corpus write failed after " + std::to_string(written) +
                                  " samples (partial output)");
        ++written;
    }
    return written;
}

std::vector<PretrainSample> load_corpus(std::istream& in) {
    std::vector<PretrainSample> samples;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            samples.push_back(pretrain_sample_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return samples;
}

std::vector<PretrainSample> load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);
    return load_corpus(in);
}

}  // namespace change
