#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "change/common.hpp"
#include "change/graph.hpp"

namespace change {

// Reserved token ids, fixed across every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kPinOpenId = 5;
inline constexpr int kPinCloseId = 6;
inline constexpr int kVisOpenId = 7;
inline constexpr int kVisCloseId = 8;
inline constexpr int kCtyOpenId = 9;
inline constexpr int kCtyCloseId = 10;
inline constexpr int kNumReserved = 11;

inline constexpr std::array<std::string_view, kNumReserved> kReservedTokens = {
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "[PIN]", "[/PIN]", "[VIS]", "[/VIS]", "[CTY]", "[/CTY]"};

int marker_open_id(Relation r);
int marker_close_id(Relation r);

// Which relation a marker id belongs to; throws for non-marker ids.
Relation relation_of_marker(int id);
bool is_marker_open_id(int id);

enum class SegTag : std::uint8_t { Special, RawText, MarkerOpen, Candidate, MarkerClose };

struct TokenSequence {
    std::vector<int> ids;
    std::vector<SegTag> tags;

    std::size_t size() const { return ids.size(); }
    void push(int id, SegTag tag) {
        ids.push_back(id);
        tags.push_back(tag);
    }

    bool operator==(const TokenSequence&) const = default;
};

// Character-level vocabulary with the reserved special/marker tokens at fixed
// ids. Multi-character tokens (pinyin syllables from the variation graph) are
// atomic: encoding matches them longest-first so an inline "wei1" becomes one
// token. Immutable after build; encode/decode are reentrant.
class Vocabulary {
public:
    Vocabulary();  // reserved tokens only

    // Reserved tokens, then every character of `corpus_lines`, every
    // single-character graph node, and every syllable node, sorted by string.
    static Vocabulary build(const std::vector<std::string>& corpus_lines, const VariationGraph& g);

    // Reserved tokens plus the given extra tokens (deduplicated, sorted).
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    int id_of(std::string_view token) const;  // -1 when absent
    const std::string& token(int id) const;   // throws DataError when out of range
    int size() const { return static_cast<int>(id_to_token_.size()); }
    bool is_special(int id) const { return id >= 0 && id < kNumReserved; }

    // Longest-match segmentation into token strings (unknown characters stay
    // as themselves; encode maps them to [UNK]).
    std::vector<std::string> segment(std::string_view text) const;

    TokenSequence encode(std::string_view text) const;  // all tags RawText
    std::string decode(const std::vector<int>& ids) const;

    void save(std::ostream& out) const;  // one token per line, line = id
    static Vocabulary load(std::istream& in);
    static Vocabulary load_file(const std::string& path);

    bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

private:
    void add_token(const std::string& tok);
    void index_multichar();

    std::vector<std::string> id_to_token_;
    std::map<std::string, int, std::less<>> token_to_id_;
    std::size_t max_plain_len_ = 1;  // max codepoint length of non-reserved tokens
};

// [CLS] text [SEP]
TokenSequence make_input(const Vocabulary& v, std::string_view text);
// [CLS] a [SEP] b [SEP]
TokenSequence make_pair_input(const Vocabulary& v, std::string_view a, std::string_view b);

}  // namespace change
