#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "change/common.hpp"

namespace change {

// The three character-variation relations. Enum order is also the neighbor
// sort order (Pinyin, Visual, CharToPinyin).
enum class Relation : int { Pinyin = 0, Visual = 1, CharToPinyin = 2 };

inline constexpr std::array<Relation, 3> kAllRelations = {
    Relation::Pinyin, Relation::Visual, Relation::CharToPinyin};

std::string_view relation_tag(Relation r);                       // "PIN" / "VIS" / "CTY"
std::optional<Relation> relation_from_tag(std::string_view tag);

// An undirected (a, relation, b) edge. For Pinyin and Visual both endpoints
// are single characters; for CharToPinyin exactly one endpoint is a single
// character and the other a pinyin syllable (lowercase letters + tone 1-5).
struct VariationTriple {
    std::string a;
    Relation rel;
    std::string b;

    bool operator==(const VariationTriple&) const = default;
};

// True for strings like "wei1": one or more lowercase ASCII letters followed
// by exactly one tone digit 1-5.
bool is_pinyin_syllable(std::string_view s);

struct GraphStats {
    std::size_t triples = 0;
    std::array<std::size_t, 3> per_relation = {0, 0, 0};
    std::size_t nodes = 0;

    bool operator==(const GraphStats&) const = default;
};

// Undirected store of variation triples with a bidirectional neighbor index.
// Immutable once loaded; all queries are const and safe to share across
// threads.
class VariationGraph {
public:
    struct Neighbor {
        Relation rel;
        std::string node;

        bool operator==(const Neighbor&) const = default;
    };

    // Validates the triple invariants and inserts both index directions.
    // Returns false when the triple (in either orientation) is already
    // present. Throws DataError on invariant violations.
    bool add_triple(const std::string& a, Relation rel, const std::string& b);

    bool contains(const std::string& a, Relation rel, const std::string& b) const;

    // Neighbors of `node`, sorted by (relation, neighbor string). Absent
    // nodes yield an empty list.
    const std::vector<Neighbor>& neighbors(const std::string& node) const;

    GraphStats stats() const;
    std::size_t size() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }

    // All triples in canonical (a <= b lexicographic) orientation, sorted.
    std::vector<VariationTriple> triples() const;

    // TSV lines "a<TAB>TAG<TAB>b", sorted; round-trips through load_graph.
    void serialize(std::ostream& out) const;

    bool operator==(const VariationGraph& other) const { return triples_ == other.triples_; }

private:
    std::set<std::tuple<std::string, int, std::string>> triples_;  // canonical orientation
    std::map<std::string, std::vector<Neighbor>> index_;
};

struct LoadReport {
    std::size_t lines = 0;       // non-comment, non-empty lines parsed
    std::size_t triples = 0;     // unique triples added
    std::size_t duplicates = 0;  // repeated triples, either orientation
};

// Parses the TSV graph format: `node<TAB>TAG<TAB>node`, UTF-8, lines starting
// with '#' and blank lines ignored. Throws DataError (with a line number) on
// malformed lines, unknown tags, or invariant violations.
VariationGraph load_graph(std::istream& in, LoadReport* report = nullptr);
VariationGraph load_graph_file(const std::string& path, LoadReport* report = nullptr);

// --- bundled table inputs -------------------------------------------------

// `char<TAB>syllable[,syllable...]` lines; '#' comments ignored.
struct PinyinTable {
    std::map<std::string, std::vector<std::string>> entries;
};

PinyinTable load_pinyin_table(std::istream& in);
PinyinTable load_pinyin_table_file(const std::string& path);

// `a<TAB>b` visual-similarity pairs.
std::vector<std::pair<std::string, std::string>> load_similar_pairs(std::istream& in);
std::vector<std::pair<std::string, std::string>> load_similar_pairs_file(const std::string& path);

// Pinyin edges between every pair of distinct characters sharing a syllable,
// CharToPinyin edges from each character to each of its syllables, Visual
// edges from the similarity pairs.
VariationGraph build_default_graph(
    const PinyinTable& pinyin,
    const std::vector<std::pair<std::string, std::string>>& similar_pairs);

}  // namespace change
