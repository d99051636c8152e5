#include <cmath>

#include "change/model.hpp"

namespace change {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double mx = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits) {
    double mx = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - mx).exp();
    return e / e.sum();
}

static double softplus(double x) {
    // log(1 + e^x) without overflow
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double atp_loss(const std::vector<double>& logits, const std::vector<int>& labels) {
    if (logits.empty()) throw DataError("atp_loss: no labeled positions");
    if (logits.size() != labels.size()) throw DataError("atp_loss: logits/labels length mismatch");
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        // y*softplus(-z) + (1-y)*softplus(z) == softplus(z) - y*z
        sum += softplus(logits[i]) - static_cast<double>(labels[i]) * logits[i];
    }
    return sum / static_cast<double>(logits.size());
}

static double log_softmax_at(const Eigen::MatrixXd& logits, int row, int col) {
    double mx = logits.row(row).maxCoeff();
    double lse = std::log((logits.row(row).array() - mx).exp().sum()) + mx;
    return logits(row, col) - lse;
}

double masked_ce_sum(const Eigen::MatrixXd& logits,
                     const std::vector<std::pair<int, int>>& targets) {
    double sum = 0;
    for (const auto& [pos, target] : targets) {
        if (pos < 0 || pos >= logits.rows() || target < 0 || target >= logits.cols()) {
            throw DataError("masked_ce_sum: target out of range");
        }
        sum -= log_softmax_at(logits, pos, target);
    }
    return sum;
}

LossBreakdown loss_and_gradients(EncoderModel& m, const std::vector<LossSpec>& batch,
                                 Rng* dropout_rng) {
    if (batch.empty()) throw DataError("loss_and_gradients: empty batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossBreakdown sum;

    for (const LossSpec& spec : batch) {
        const bool use_mlm = (spec.w_amp > 0 && !spec.amp_targets.empty()) ||
                             (spec.w_acp > 0 && !spec.acp_targets.empty()) ||
                             (spec.w_mlm > 0 && !spec.mlm_targets.empty());
        const bool use_bin = spec.w_atp > 0 && !spec.atp_labels.empty();
        const bool use_cls = spec.w_cls > 0 && spec.cls_label >= 0;

        ForwardOptions opts;
        opts.mlm = use_mlm;
        opts.bin = use_bin;
        opts.cls = use_cls;
        opts.training = true;
        opts.dropout_rng = dropout_rng;

        Tape tape;
        ForwardOutput fwd = m.forward(spec.ids, spec.mask, opts, &tape);

        HeadGrads grads;
        double example_total = 0;

        if (use_bin) {
            grads.d_bin = Eigen::VectorXd::Zero(fwd.bin_logits.size());
            std::vector<double> zs;
            std::vector<int> ys;
            for (const auto& [pos, y] : spec.atp_labels) {
                zs.push_back(fwd.bin_logits(pos));
                ys.push_back(y);
            }
            double l = atp_loss(zs, ys);
            double inv_n = 1.0 / static_cast<double>(spec.atp_labels.size());
            for (const auto& [pos, y] : spec.atp_labels) {
                grads.d_bin(pos) +=
                    spec.w_atp * inv_n * (sigmoid(fwd.bin_logits(pos)) - static_cast<double>(y));
            }
            sum.atp += l * inv_b;
            example_total += spec.w_atp * l;
        }

        if (use_mlm) {
            grads.d_mlm = Eigen::MatrixXd::Zero(fwd.mlm_logits.rows(), fwd.mlm_logits.cols());
            auto add_ce_grads = [&](const std::vector<std::pair<int, int>>& targets, double weight,
                                    double per_target_scale) {
                for (const auto& [pos, target] : targets) {
                    Eigen::RowVectorXd p = softmax_rows(fwd.mlm_logits.row(pos)).row(0);
                    p(target) -= 1.0;
                    grads.d_mlm.row(pos) += weight * per_target_scale * p;
                }
            };
            if (spec.w_amp > 0 && !spec.amp_targets.empty()) {
                double l = masked_ce_sum(fwd.mlm_logits, spec.amp_targets);
                add_ce_grads(spec.amp_targets, spec.w_amp, 1.0);
                sum.amp += l * inv_b;
                example_total += spec.w_amp * l;
            }
            if (spec.w_acp > 0 && !spec.acp_targets.empty()) {
                double l = masked_ce_sum(fwd.mlm_logits, spec.acp_targets);
                add_ce_grads(spec.acp_targets, spec.w_acp, 1.0);
                sum.acp += l * inv_b;
                example_total += spec.w_acp * l;
            }
            if (spec.w_mlm > 0 && !spec.mlm_targets.empty()) {
                double l = masked_ce_sum(fwd.mlm_logits, spec.mlm_targets) /
                           static_cast<double>(spec.mlm_targets.size());
                add_ce_grads(spec.mlm_targets, spec.w_mlm,
                             1.0 / static_cast<double>(spec.mlm_targets.size()));
                sum.mlm += l * inv_b;
                example_total += spec.w_mlm * l;
            }
        }

        if (use_cls) {
            if (spec.cls_label >= fwd.cls_logits.size()) {
                throw DataError("loss_and_gradients: class label out of range");
            }
            Eigen::VectorXd p = softmax_vec(fwd.cls_logits);
            double l = -std::log(std::max(p(spec.cls_label), 1e-300));
            grads.d_cls = p;
            grads.d_cls(spec.cls_label) -= 1.0;
            grads.d_cls *= spec.w_cls;
            sum.cls += l * inv_b;
            example_total += spec.w_cls * l;
        }

        if (!std::isfinite(example_total)) {
            throw DataError("loss_and_gradients: non-finite loss in batch");
        }
        sum.total += example_total * inv_b;
        m.backward(tape, grads, inv_b);
    }
    return sum;
}

AdamState::AdamState(EncoderModel& m) {
    for (Param* p : m.parameters()) {
        m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamState::step(EncoderModel& m, const AdamConfig& cfg, double lr_scale) {
    auto params = m.parameters();
    if (params.size() != m_.size()) throw DataError("adam state does not match model");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    const double lr = cfg.lr * lr_scale;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * p.grad;
        v_[i] = (cfg.beta2 * v_[i].array() + (1.0 - cfg.beta2) * p.grad.array().square()).matrix();
        Eigen::ArrayXXd mhat = m_[i].array() / bc1;
        Eigen::ArrayXXd vhat = v_[i].array() / bc2;
        p.value.array() -= lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

double warmup_lr_scale(std::int64_t step, std::int64_t warmup_steps) {
    if (warmup_steps <= 0) return 1.0;
    if (step + 1 >= warmup_steps) return 1.0;
    return static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

}  // namespace change
