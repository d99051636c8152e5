#include "change/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace change {

void AttentionMask2D::dump(std::ostream& out) const {
    out << "n=" << n_ << '\n';
    for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) out << (at(i, j) ? '1' : '0');
        out << '\n';
    }
}

AttentionMask2D AttentionMask2D::parse(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("n=", 0) != 0) {
        throw DataError("mask dump: missing n= header");
    }
    int n = std::stoi(header.substr(2));
    AttentionMask2D mask(n);
    std::string row;
    for (int i = 0; i < n; ++i) {
        if (!std::getline(in, row) || static_cast<int>(row.size()) < n) {
            throw DataError("mask dump: truncated row " + std::to_string(i));
        }
        for (int j = 0; j < n; ++j) mask.set(i, j, row[static_cast<std::size_t>(j)] == '1');
    }
    return mask;
}

std::vector<int> recognize_attacked_tokens(const TokenProbabilities& probs,
                                           const TokenSequence& tokens, double k_percent) {
    if (probs.p.size() != tokens.size()) {
        throw DataError("token probabilities length does not match token sequence");
    }
    if (probs.p.empty()) throw DataError("token probabilities empty");
    std::vector<int> candidates;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens.tags[i] != SegTag::Special) candidates.push_back(static_cast<int>(i));
    }
    if (candidates.empty()) return {};

    std::size_t n = candidates.size();
    // floor with a snap epsilon so k=100 keeps everything; never below 1
    auto count = static_cast<std::size_t>(std::floor(k_percent / 100.0 * static_cast<double>(n) + 1e-9));
    count = std::clamp<std::size_t>(count, 1, n);

    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (probs.p[static_cast<std::size_t>(a)] != probs.p[static_cast<std::size_t>(b)]) {
            return probs.p[static_cast<std::size_t>(a)] < probs.p[static_cast<std::size_t>(b)];
        }
        return a < b;
    });
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

std::vector<AttackingPathSpan> retrieve_paths(const std::vector<int>& positions,
                                              const TokenSequence& base, const Vocabulary& v,
                                              const VariationGraph& g, int max_paths_per_token) {
    std::vector<AttackingPathSpan> spans;
    for (int pos : positions) {
        if (pos < 0 || pos >= static_cast<int>(base.size())) {
            throw DataError("flagged position out of range: " + std::to_string(pos));
        }
        if (base.tags[static_cast<std::size_t>(pos)] != SegTag::RawText) continue;
        const std::string& observed = v.token(base.ids[static_cast<std::size_t>(pos)]);
        int taken = 0;
        for (const auto& nb : g.neighbors(observed)) {
            if (taken >= max_paths_per_token) break;
            int cid = v.id_of(nb.node);
            if (cid < 0) continue;  // candidate not representable in this vocabulary
            spans.push_back({pos, nb.rel, nb.node, cid});
            ++taken;
        }
    }
    return spans;
}

ReconstructedInput reconstruct(const TokenSequence& base, std::vector<AttackingPathSpan> spans,
                               int length_cap) {
    for (const auto& s : spans) {
        if (s.anchor < 0 || s.anchor >= static_cast<int>(base.size()) ||
            base.tags[static_cast<std::size_t>(s.anchor)] != SegTag::RawText) {
            throw DataError("span anchor does not point at a raw-text token");
        }
    }
    std::sort(spans.begin(), spans.end(), [](const AttackingPathSpan& x, const AttackingPathSpan& y) {
        if (x.anchor != y.anchor) return x.anchor < y.anchor;
        if (x.rel != y.rel) return x.rel < y.rel;
        return x.candidate < y.candidate;
    });

    ReconstructedInput r;
    r.base_length = static_cast<int>(base.size());
    std::size_t max_spans = 0;
    if (length_cap > r.base_length) {
        max_spans = static_cast<std::size_t>((length_cap - r.base_length) / 3);
    }
    if (spans.size() > max_spans) {
        r.dropped_spans = static_cast<int>(spans.size() - max_spans);
        spans.resize(max_spans);
    }

    r.tokens = base;
    for (const auto& s : spans) {
        r.tokens.push(marker_open_id(s.rel), SegTag::MarkerOpen);
        r.tokens.push(s.candidate_id, SegTag::Candidate);
        r.tokens.push(marker_close_id(s.rel), SegTag::MarkerClose);
        r.anchor_map.push_back(s.anchor);
    }
    r.spans = std::move(spans);
    return r;
}

AttentionMask2D build_attention_mask(const ReconstructedInput& r) {
    int n = static_cast<int>(r.tokens.size());
    AttentionMask2D mask(n, false);
    for (int i = 0; i < r.base_length; ++i) {
        for (int j = 0; j < r.base_length; ++j) mask.set(i, j, true);
    }
    for (std::size_t s = 0; s < r.spans.size(); ++s) {
        int start = r.base_length + 3 * static_cast<int>(s);
        int anchor = r.anchor_map[s];
        for (int i = start; i < start + 3; ++i) {
            for (int j = start; j < start + 3; ++j) mask.set(i, j, true);
            mask.set(i, anchor, true);
            mask.set(anchor, i, true);
        }
    }
    return mask;
}

}  // namespace change
