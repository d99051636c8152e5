#include "change/graph.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "change/utf8.hpp"

namespace change {

std::string_view relation_tag(Relation r) {
    switch (r) {
        case Relation::Pinyin: return "PIN";
        case Relation::Visual: return "VIS";
        case Relation::CharToPinyin: return "CTY";
    }
    return "?";
}

std::optional<Relation> relation_from_tag(std::string_view tag) {
    if (tag == "PIN") return Relation::Pinyin;
    if (tag == "VIS") return Relation::Visual;
    if (tag == "CTY") return Relation::CharToPinyin;
    return std::nullopt;
}

bool is_pinyin_syllable(std::string_view s) {
    if (s.size() < 2) return false;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] < 'a' || s[i] > 'z') return false;
    }
    char tone = s.back();
    return tone >= '1' && tone <= '5';
}

static void validate_triple(const std::string& a, Relation rel, const std::string& b) {
    if (a.empty() || b.empty()) throw DataError("graph triple with empty node");
    if (a == b) throw DataError("graph triple with identical endpoints: " + a);
    if (rel == Relation::CharToPinyin) {
        bool a_char = is_single_char(a) && !is_pinyin_syllable(a);
        bool b_char = is_single_char(b) && !is_pinyin_syllable(b);
        bool a_syl = is_pinyin_syllable(a);
        bool b_syl = is_pinyin_syllable(b);
        if (!((a_char && b_syl) || (a_syl && b_char))) {
            throw DataError("CTY triple must link one character and one syllable: " + a + " / " + b);
        }
    } else {
        if (!is_single_char(a) || !is_single_char(b)) {
            throw DataError(std::string(relation_tag(rel)) +
                            " triple endpoints must be single characters: " + a + " / " + b);
        }
    }
}

bool VariationGraph::add_triple(const std::string& a, Relation rel, const std::string& b) {
    validate_triple(a, rel, b);
    const std::string& lo = std::min(a, b);
    const std::string& hi = std::max(a, b);
    auto [it, inserted] = triples_.emplace(lo, static_cast<int>(rel), hi);
    if (!inserted) return false;

    auto insert_sorted = [](std::vector<Neighbor>& list, Neighbor nb) {
        auto pos = std::lower_bound(list.begin(), list.end(), nb,
                                    [](const Neighbor& x, const Neighbor& y) {
                                        if (x.rel != y.rel) return x.rel < y.rel;
                                        return x.node < y.node;
                                    });
        list.insert(pos, std::move(nb));
    };
    insert_sorted(index_[a], Neighbor{rel, b});
    insert_sorted(index_[b], Neighbor{rel, a});
    return true;
}

bool VariationGraph::contains(const std::string& a, Relation rel, const std::string& b) const {
    const std::string& lo = std::min(a, b);
    const std::string& hi = std::max(a, b);
    return triples_.count({lo, static_cast<int>(rel), hi}) > 0;
}

const std::vector<VariationGraph::Neighbor>& VariationGraph::neighbors(const std::string& node) const {
    static const std::vector<Neighbor> kEmpty;
    auto it = index_.find(node);
    return it == index_.end() ? kEmpty : it->second;
}

GraphStats VariationGraph::stats() const {
    GraphStats s;
    s.triples = triples_.size();
    s.nodes = index_.size();
    for (const auto& [a, rel, b] : triples_) s.per_relation[static_cast<std::size_t>(rel)]++;
    return s;
}

std::vector<VariationTriple> VariationGraph::triples() const {
    std::vector<VariationTriple> out;
    out.reserve(triples_.size());
    for (const auto& [a, rel, b] : triples_) {
        out.push_back({a, static_cast<Relation>(rel), b});
    }
    return out;
}

void VariationGraph::serialize(std::ostream& out) const {
    for (const auto& [a, rel, b] : triples_) {
        out << a << '\t' << relation_tag(static_cast<Relation>(rel)) << '\t' << b << '\n';
    }
}

static std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

static std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

VariationGraph load_graph(std::istream& in, LoadReport* report) {
    VariationGraph g;
    LoadReport rep;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(std::move(line));
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) {
            throw DataError("graph line " + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                            std::to_string(fields.size()));
        }
        auto rel = relation_from_tag(fields[1]);
        if (!rel) {
            throw DataError("graph line " + std::to_string(lineno) + ": unknown relation tag '" + fields[1] + "'");
        }
        ++rep.lines;
        try {
            if (g.add_triple(fields[0], *rel, fields[2])) {
                ++rep.triples;
            } else {
                ++rep.duplicates;
            }
        } catch (const DataError& e) {
            throw DataError("graph line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (report) *report = rep;
    return g;
}

VariationGraph load_graph_file(const std::string& path, LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open graph file: " + path);
    return load_graph(in, report);
}

PinyinTable load_pinyin_table(std::istream& in) {
    PinyinTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(std::move(line));
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[0].empty()) {
            throw DataError("pinyin table line " + std::to_string(lineno) + ": expected `char<TAB>syllables`");
        }
        std::vector<std::string> syllables;
        std::stringstream ss(fields[1]);
        std::string syl;
        while (std::getline(ss, syl, ',')) {
            if (!is_pinyin_syllable(syl)) {
                throw DataError("pinyin table line " + std::to_string(lineno) + ": bad syllable '" + syl + "'");
            }
            syllables.push_back(syl);
        }
        if (syllables.empty()) {
            throw DataError("pinyin table line " + std::to_string(lineno) + ": no syllables");
        }
        auto& slot = table.entries[fields[0]];
        for (auto& s : syllables) {
            if (std::find(slot.begin(), slot.end(), s) == slot.end()) slot.push_back(s);
        }
    }
    return table;
}

PinyinTable load_pinyin_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pinyin table: " + path);
    return load_pinyin_table(in);
}

std::vector<std::pair<std::string, std::string>> load_similar_pairs(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(std::move(line));
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2) {
            throw DataError("similar pairs line " + std::to_string(lineno) + ": expected `a<TAB>b`");
        }
        pairs.emplace_back(fields[0], fields[1]);
    }
    return pairs;
}

std::vector<std::pair<std::string, std::string>> load_similar_pairs_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open similar pairs file: " + path);
    return load_similar_pairs(in);
}

VariationGraph build_default_graph(
    const PinyinTable& pinyin,
    const std::vector<std::pair<std::string, std::string>>& similar_pairs) {
    VariationGraph g;
    // syllable -> characters, in table (sorted-map) order
    std::map<std::string, std::vector<std::string>> by_syllable;
    for (const auto& [ch, syllables] : pinyin.entries) {
        for (const auto& syl : syllables) {
            g.add_triple(ch, Relation::CharToPinyin, syl);
            by_syllable[syl].push_back(ch);
        }
    }
    for (const auto& [syl, chars] : by_syllable) {
        for (std::size_t i = 0; i < chars.size(); ++i) {
            for (std::size_t j = i + 1; j < chars.size(); ++j) {
                g.add_triple(chars[i], Relation::Pinyin, chars[j]);
            }
        }
    }
    for (const auto& [a, b] : similar_pairs) {
        g.add_triple(a, Relation::Visual, b);
    }
    return g;
}

}  // namespace change
