#pragma once

// Independent rule checker for the span-visibility definition, used to verify
// build_attention_mask: a pair (i,j) may attend iff both tokens are in the
// base block, or they belong to the same 3-token span, or one of them is the
// other's span anchor. Kept deliberately per-pair (no block fills) so it does
// not share structure with the implementation.

#include "change/reconstruct.hpp"

namespace change::testing {

inline bool oracle_visible(const ReconstructedInput& r, int i, int j) {
    auto span_of = [&](int t) -> int {
        if (t < r.base_length) return -1;
        return (t - r.base_length) / 3;
    };
    int si = span_of(i);
    int sj = span_of(j);
    if (si < 0 && sj < 0) return true;
    if (si >= 0 && sj >= 0) return si == sj;
    if (si >= 0 && sj < 0) return r.anchor_map[static_cast<std::size_t>(si)] == j;
    return r.anchor_map[static_cast<std::size_t>(sj)] == i;
}

inline AttentionMask2D oracle_mask(const ReconstructedInput& r) {
    int n = static_cast<int>(r.tokens.size());
    AttentionMask2D mask(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) mask.set(i, j, oracle_visible(r, i, j));
    }
    return mask;
}

}  // namespace change::testing
