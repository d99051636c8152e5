#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "change/graph.hpp"
#include "change/rng.hpp"

namespace change {

// One substitution: raw[position] == original was replaced by variant along
// (original, rel, variant), a triple of the graph. For CharToPinyin the
// variant is a multi-letter syllable and the attacked text grows.
struct AttackRecord {
    int position = 0;  // codepoint index into the raw text
    std::string original;
    Relation rel = Relation::Pinyin;
    std::string variant;

    bool operator==(const AttackRecord&) const = default;
};

struct AttackedSample {
    std::string raw;
    std::string attacked;
    std::vector<AttackRecord> records;  // positions strictly increasing
};

struct AttackPolicy {
    bool enable_pinyin = true;
    bool enable_visual = true;
    bool enable_char_to_pinyin = true;
    double attack_rate = 0.15;          // fraction of attackable characters
    int max_attacks_per_sentence = 8;
    std::uint64_t seed = 0;             // used by corpus-level entry points

    bool relation_enabled(Relation r) const;
};

// True paths are base.records; false paths are graph triples anchored at
// attacked positions that do not restore the raw character. A false entry
// stores (position, observed attacked token, relation, wrong candidate).
struct PretrainSample {
    AttackedSample base;
    std::vector<AttackRecord> false_paths;
};

// Substitutes round(attack_rate * attackable) characters (capped by
// max_attacks_per_sentence), positions sampled uniformly without replacement,
// variant uniform over enabled graph neighbors.
AttackedSample attack_text(const std::string& raw, const VariationGraph& g,
                           const AttackPolicy& policy, Rng& rng);

// Applies the inverse substitutions of sample.records to sample.attacked.
std::string restore(const AttackedSample& sample);

// For each record, the (start, length) of its variant in attacked-text
// codepoint space.
std::vector<std::pair<int, int>> attacked_spans(const AttackedSample& sample);

PretrainSample generate_pretrain_sample(const std::string& raw, const VariationGraph& g,
                                        const AttackPolicy& policy, int false_count, Rng& rng);

// One JSON object per non-empty input line; per-line rng derived from
// (policy.seed, line index) so output is byte-stable and order-independent of
// any parallel split. Returns the number of samples written.
std::size_t build_corpus(std::istream& in, const VariationGraph& g, const AttackPolicy& policy,
                         int false_count, std::ostream& out);

nlohmann::json to_json(const AttackRecord& r);
nlohmann::json to_json(const PretrainSample& s);
AttackRecord attack_record_from_json(const nlohmann::json& j);
PretrainSample pretrain_sample_from_json(const nlohmann::json& j);

std::vector<PretrainSample> load_corpus(std::istream& in);
std::vector<PretrainSample> load_corpus_file(const std::string& path);

}  // namespace change
