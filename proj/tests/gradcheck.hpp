#pragma once

// Central finite-difference gradient checking against the analytic backward
// pass, shared by the unit tests and the acceptance suite.

#include <cmath>
#include <string>
#include <vector>

#include "change/model.hpp"
#include "change/reconstruct.hpp"
#include "change/rng.hpp"

namespace change::testing {

struct GradCheckResult {
    double max_rel_err = 0;
    std::string worst_param;
    std::size_t checked = 0;
};

inline double batch_loss_only(EncoderModel& m, const std::vector<LossSpec>& batch) {
    m.zero_grads();
    double loss = loss_and_gradients(m, batch, nullptr).total;
    m.zero_grads();
    return loss;
}

// Checks every entry of every parameter against Richardson-extrapolated
// central differences (two step sizes, cancelling the h^2 truncation term).
// The rel err denominator max(|a|,|n|,1e-6) compares near-zero gradients
// absolutely.
inline GradCheckResult gradient_check(EncoderModel& m, const std::vector<LossSpec>& batch,
                                      double h = 1e-4) {
    m.zero_grads();
    loss_and_gradients(m, batch, nullptr);
    std::vector<Eigen::MatrixXd> analytic;
    for (const Param* p : std::as_const(m).parameters()) analytic.push_back(p->grad);
    m.zero_grads();

    GradCheckResult result;
    auto params = m.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                double saved = p.value(r, c);
                auto central = [&](double step) {
                    p.value(r, c) = saved + step;
                    double up = batch_loss_only(m, batch);
                    p.value(r, c) = saved - step;
                    double down = batch_loss_only(m, batch);
                    p.value(r, c) = saved;
                    return (up - down) / (2.0 * step);
                };
                double numeric = (4.0 * central(h / 2) - central(h)) / 3.0;
                double a = analytic[pi](r, c);
                double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
                double rel = std::abs(a - numeric) / denom;
                ++result.checked;
                if (rel > result.max_rel_err) {
                    result.max_rel_err = rel;
                    result.worst_param = p.name + "(" + std::to_string(r) + "," +
                                         std::to_string(c) + ")";
                }
            }
        }
    }
    return result;
}

// A deterministic random symmetric mask with a true diagonal.
inline AttentionMask2D random_mask(int n, Rng& rng, double density = 0.5) {
    AttentionMask2D mask(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        mask.set(i, i, true);
        for (int j = 0; j < i; ++j) {
            bool vis = u(rng) < density;
            mask.set(i, j, vis);
            mask.set(j, i, vis);
        }
    }
    return mask;
}

// A gradient-check batch covering every loss head, with one nontrivial 2D
// mask in the mix.
inline std::vector<LossSpec> gradcheck_batch(const EncoderConfig& cfg, Rng& rng) {
    std::uniform_int_distribution<int> tok(0, cfg.vocab_size - 1);
    std::vector<LossSpec> batch;

    LossSpec a;
    for (int i = 0; i < 7; ++i) a.ids.push_back(tok(rng));
    a.mask = random_mask(7, rng);
    a.w_atp = 1.0;
    a.w_amp = 0.7;
    a.w_acp = 1.3;
    a.atp_labels = {{1, 1}, {2, 0}, {3, 1}};
    a.amp_targets = {{4, tok(rng)}};
    a.acp_targets = {{5, tok(rng)}, {6, tok(rng)}};
    batch.push_back(std::move(a));

    LossSpec b;
    for (int i = 0; i < 5; ++i) b.ids.push_back(tok(rng));
    b.mask = AttentionMask2D::full(5);
    b.w_mlm = 1.0;
    b.w_cls = 0.9;
    b.mlm_targets = {{1, tok(rng)}, {3, tok(rng)}};
    b.cls_label = cfg.num_classes > 0 ? 1 : -1;
    b.w_cls = cfg.num_classes > 0 ? 0.9 : 0.0;
    batch.push_back(std::move(b));
    return batch;
}

}  // namespace change::testing
