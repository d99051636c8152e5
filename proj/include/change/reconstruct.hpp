#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "change/graph.hpp"
#include "change/vocab.hpp"

namespace change {

class EncoderModel;

// Per-position probability of the observed token under the language model;
// same length as the token sequence it was computed from.
struct TokenProbabilities {
    std::vector<double> p;
};

// One candidate-original span: the observed token at `anchor` (an index into
// the base [CLS]-prefixed sequence) may be a variation of `candidate` via
// `rel`.
struct AttackingPathSpan {
    int anchor = 0;
    Relation rel = Relation::Pinyin;
    std::string candidate;
    int candidate_id = -1;

    bool operator==(const AttackingPathSpan&) const = default;
};

// Base sequence followed by three-token spans (marker-open, candidate,
// marker-close), spans sorted by (anchor, relation, candidate).
struct ReconstructedInput {
    TokenSequence tokens;
    std::vector<AttackingPathSpan> spans;
    std::vector<int> anchor_map;  // span index -> anchor token index
    int base_length = 0;          // tokens in the base segment (incl. specials)
    int dropped_spans = 0;        // spans discarded by the length cap
};

// n*n visibility matrix; (i,j) true means token i may attend to token j.
class AttentionMask2D {
public:
    AttentionMask2D() = default;
    explicit AttentionMask2D(int n, bool value = false)
        : n_(n), bits_(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), value ? 1 : 0) {}

    static AttentionMask2D full(int n) { return AttentionMask2D(n, true); }

    int size() const { return n_; }
    bool at(int i, int j) const { return bits_[idx(i, j)] != 0; }
    void set(int i, int j, bool v) { bits_[idx(i, j)] = v ? 1 : 0; }

    // Debug dump: `n=<len>` header then n rows of 0/1 characters.
    void dump(std::ostream& out) const;
    static AttentionMask2D parse(std::istream& in);

    bool operator==(const AttentionMask2D&) const = default;

private:
    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    int n_ = 0;
    std::vector<std::uint8_t> bits_;
};

// Probability of each observed token from one unmasked forward pass of the
// MLM head. With per_position_remask, position i is instead scored by a
// forward pass where token i is replaced by [MASK] (n passes).
TokenProbabilities lm_token_probabilities(const EncoderModel& model, const TokenSequence& input,
                                          bool per_position_remask = false);

// The floor(k/100 * n) lowest-probability non-special positions (at least 1),
// ties broken toward the lower index, returned in ascending index order.
std::vector<int> recognize_attacked_tokens(const TokenProbabilities& probs,
                                           const TokenSequence& tokens, double k_percent);

// One span per graph neighbor of the observed token at each flagged position,
// in neighbor order, truncated to max_paths_per_token. Tokens without
// neighbors (or candidates missing from the vocabulary) contribute nothing.
std::vector<AttackingPathSpan> retrieve_paths(const std::vector<int>& positions,
                                              const TokenSequence& base, const Vocabulary& v,
                                              const VariationGraph& g, int max_paths_per_token);

// Appends the spans as 3-token postfix units after the base sequence. Spans
// are sorted; those that would push the total length above length_cap are
// dropped from the end and counted in dropped_spans.
ReconstructedInput reconstruct(const TokenSequence& base, std::vector<AttackingPathSpan> spans,
                               int length_cap);

// Fig-style visibility: full attention inside the base block; each span token
// sees exactly its own span and its anchor (symmetrically); nothing else.
AttentionMask2D build_attention_mask(const ReconstructedInput& r);

}  // namespace change
