#include "change/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>

#include "change/utf8.hpp"

namespace change {

int marker_open_id(Relation r) {
    switch (r) {
        case Relation::Pinyin: return kPinOpenId;
        case Relation::Visual: return kVisOpenId;
        case Relation::CharToPinyin: return kCtyOpenId;
    }
    return kUnkId;
}

int marker_close_id(Relation r) {
    return marker_open_id(r) + 1;
}

Relation relation_of_marker(int id) {
    switch (id) {
        case kPinOpenId:
        case kPinCloseId: return Relation::Pinyin;
        case kVisOpenId:
        case kVisCloseId: return Relation::Visual;
        case kCtyOpenId:
        case kCtyCloseId: return Relation::CharToPinyin;
    }
    throw DataError("token id " + std::to_string(id) + " is not a marker token");
}

bool is_marker_open_id(int id) {
    return id == kPinOpenId || id == kVisOpenId || id == kCtyOpenId;
}

Vocabulary::Vocabulary() {
    for (auto tok : kReservedTokens) add_token(std::string(tok));
}

void Vocabulary::add_token(const std::string& tok) {
    if (token_to_id_.count(tok)) return;
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(tok);
}

void Vocabulary::index_multichar() {
    max_plain_len_ = 1;
    for (int id = kNumReserved; id < size(); ++id) {
        max_plain_len_ = std::max(max_plain_len_, utf8_length(id_to_token_[id]));
    }
}

static bool is_space_char(const std::string& ch) {
    return ch.size() == 1 && std::isspace(static_cast<unsigned char>(ch[0]));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus_lines, const VariationGraph& g) {
    std::set<std::string> tokens;
    for (const auto& line : corpus_lines) {
        for (auto& ch : utf8_chars(line)) {
            if (!is_space_char(ch)) tokens.insert(ch);
        }
    }
    for (const auto& t : g.triples()) {
        tokens.insert(t.a);
        tokens.insert(t.b);
    }
    Vocabulary v;
    for (const auto& tok : tokens) v.add_token(tok);  // set iteration is sorted
    v.index_multichar();
    return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& extra) {
    std::set<std::string> tokens(extra.begin(), extra.end());
    Vocabulary v;
    for (const auto& tok : tokens) v.add_token(tok);
    v.index_multichar();
    return v;
}

int Vocabulary::id_of(std::string_view token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) {
        throw DataError("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::segment(std::string_view text) const {
    auto chars = utf8_chars(text);
    std::vector<std::string> out;
    out.reserve(chars.size());
    std::size_t i = 0;
    while (i < chars.size()) {
        std::size_t matched = 1;
        if (max_plain_len_ > 1) {
            std::size_t limit = std::min(max_plain_len_, chars.size() - i);
            std::string candidate;
            for (std::size_t len = limit; len >= 2; --len) {
                candidate.clear();
                for (std::size_t k = 0; k < len; ++k) candidate += chars[i + k];
                int id = id_of(candidate);
                if (id >= kNumReserved) {
                    out.push_back(candidate);
                    matched = len;
                    break;
                }
            }
        }
        if (matched == 1) {
            out.push_back(chars[i]);
        }
        i += matched;
    }
    return out;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
    TokenSequence seq;
    for (const auto& tok : segment(text)) {
        int id = id_of(tok);
        seq.push(id < 0 ? kUnkId : id, SegTag::RawText);
    }
    return seq;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) out += token(id);
    return out;
}

void Vocabulary::save(std::ostream& out) const {
    for (const auto& tok : id_to_token_) out << tok << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
    Vocabulary v;
    std::string line;
    int id = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (id < kNumReserved) {
            if (line != kReservedTokens[static_cast<std::size_t>(id)]) {
                throw DataError("vocabulary file: reserved token mismatch at id " + std::to_string(id));
            }
        } else {
            if (line.empty()) throw DataError("vocabulary file: empty token at id " + std::to_string(id));
            v.add_token(line);
        }
        ++id;
    }
    if (id < kNumReserved) throw DataError("vocabulary file: missing reserved tokens");
    v.index_multichar();
    return v;
}

Vocabulary Vocabulary::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    return load(in);
}

TokenSequence make_input(const Vocabulary& v, std::string_view text) {
    TokenSequence seq;
    seq.push(kClsId, SegTag::Special);
    for (const auto& tok : v.segment(text)) {
        int id = v.id_of(tok);
        seq.push(id < 0 ? kUnkId : id, SegTag::RawText);
    }
    seq.push(kSepId, SegTag::Special);
    return seq;
}

TokenSequence make_pair_input(const Vocabulary& v, std::string_view a, std::string_view b) {
    TokenSequence seq = make_input(v, a);
    for (const auto& tok : v.segment(b)) {
        int id = v.id_of(tok);
        seq.push(id < 0 ? kUnkId : id, SegTag::RawText);
    }
    seq.push(kSepId, SegTag::Special);
    return seq;
}

}  // namespace change
