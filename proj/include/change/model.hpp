#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "change/common.hpp"
#include "change/reconstruct.hpp"
#include "change/rng.hpp"

namespace change {

struct EncoderConfig {
    int layers = 4;
    int heads = 4;
    int dim = 128;
    int ffn_dim = 512;
    int vocab_size = 0;
    int max_len = 192;
    int num_classes = 0;  // 0 = no classification head
    double dropout = 0.1;
    std::uint64_t seed = 42;

    void validate() const;  // throws DataError
};

struct Param {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Param(std::string n, int rows, int cols)
        : name(std::move(n)),
          value(Eigen::MatrixXd::Zero(rows, cols)),
          grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

struct LnCache {
    Eigen::VectorXd rstd;   // per row
    Eigen::MatrixXd xhat;
};

struct LayerCache {
    Eigen::MatrixXd x_in;
    Eigen::MatrixXd q, k, v;
    std::vector<Eigen::MatrixXd> attn;  // per-head softmax probabilities, n*n
    Eigen::MatrixXd ctx;
    Eigen::MatrixXd attn_proj;
    Eigen::ArrayXXd drop1;  // empty when dropout inactive
    LnCache ln1;
    Eigen::MatrixXd x1;
    Eigen::MatrixXd ffn_pre, ffn_act;
    Eigen::MatrixXd ffn_out;
    Eigen::ArrayXXd drop2;
    LnCache ln2;
};

// Everything backward() needs; produced by forward() on request.
struct Tape {
    std::vector<int> ids;
    AttentionMask2D mask;
    Eigen::MatrixXd emb_sum;
    LnCache emb_ln;
    Eigen::ArrayXXd emb_drop;
    Eigen::MatrixXd x0;
    std::vector<LayerCache> layers;
    Eigen::MatrixXd hidden;
};

struct ForwardOutput {
    Eigen::MatrixXd hidden;      // n x d
    Eigen::MatrixXd mlm_logits;  // n x V when requested
    Eigen::VectorXd bin_logits;  // n when requested
    Eigen::VectorXd cls_logits;  // C when requested
};

struct ForwardOptions {
    bool mlm = true;
    bool bin = false;
    bool cls = false;
    bool training = false;  // enables dropout when dropout_rng is set
    Rng* dropout_rng = nullptr;
};

// Upstream gradients on the head outputs; zero-sized pieces are skipped.
struct HeadGrads {
    Eigen::MatrixXd d_mlm;
    Eigen::VectorXd d_bin;
    Eigen::VectorXd d_cls;
};

// Small transformer encoder (post-LN, GELU feed-forward) over arbitrary 2D
// attention masks. Masked pairs contribute exactly zero attention weight.
// All math in doubles; forward is deterministic in eval mode.
class EncoderModel {
public:
    explicit EncoderModel(const EncoderConfig& cfg);

    const EncoderConfig& config() const { return cfg_; }

    ForwardOutput forward(const std::vector<int>& ids, const AttentionMask2D& mask,
                          const ForwardOptions& opts = {}, Tape* tape = nullptr) const;

    // Accumulates scale * dL/dparam into every param.grad.
    void backward(const Tape& tape, const HeadGrads& grads, double scale);

    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    std::size_t parameter_count() const;
    void zero_grads();

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static EncoderModel load(std::istream& in);
    static EncoderModel load_file(const std::string& path);

private:
    struct LayerParams {
        Param wq, bq, wk, bk, wv, bv, wo, bo;
        Param ln1_g, ln1_b;
        Param w1, b1, w2, b2;
        Param ln2_g, ln2_b;

        LayerParams(int index, int d, int f);
    };

    void init_parameters();

    EncoderConfig cfg_;
    Param emb_tok_, emb_pos_, emb_ln_g_, emb_ln_b_;
    std::vector<LayerParams> layers_;
    Param mlm_w_, mlm_b_;
    Param bin_w_, bin_b_;
    Param cls_w_, cls_b_;
};

// --- loss primitives --------------------------------------------------------

// Mean binary cross-entropy over (logit, label) pairs, p = sigmoid(logit).
// Throws DataError when empty or mismatched.
double atp_loss(const std::vector<double>& logits, const std::vector<int>& labels);

// Sum over (position, target id) of -log softmax(logits.row(position))[target].
// Empty targets give 0. Shared by the AMP and ACP objectives.
double masked_ce_sum(const Eigen::MatrixXd& logits,
                     const std::vector<std::pair<int, int>>& targets);

inline double amp_loss(const Eigen::MatrixXd& mlm_logits,
                       const std::vector<std::pair<int, int>>& targets) {
    return masked_ce_sum(mlm_logits, targets);
}
inline double acp_loss(const Eigen::MatrixXd& mlm_logits,
                       const std::vector<std::pair<int, int>>& targets) {
    return masked_ce_sum(mlm_logits, targets);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits);

// --- batched loss + gradients ------------------------------------------------

// One training example: token ids, visibility mask, loss weights and targets.
// AMP/ACP are per-sample sums, ATP and plain MLM per-sample means, CLS a
// single cross-entropy; the batch loss is the mean over examples.
struct LossSpec {
    std::vector<int> ids;
    AttentionMask2D mask;
    double w_atp = 0, w_amp = 0, w_acp = 0, w_mlm = 0, w_cls = 0;
    std::vector<std::pair<int, int>> atp_labels;   // (position, 0/1)
    std::vector<std::pair<int, int>> amp_targets;  // (position, original id)
    std::vector<std::pair<int, int>> acp_targets;
    std::vector<std::pair<int, int>> mlm_targets;
    int cls_label = -1;
};

struct LossBreakdown {
    double total = 0;  // weighted, batch mean
    double atp = 0, amp = 0, acp = 0, mlm = 0, cls = 0;  // unweighted batch means
};

// Runs forward+backward over the batch, accumulating gradients (batch-mean
// scaling) into the model. Throws DataError on an empty batch or non-finite
// loss.
LossBreakdown loss_and_gradients(EncoderModel& m, const std::vector<LossSpec>& batch,
                                 Rng* dropout_rng = nullptr);

// --- optimizer ----------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    explicit AdamState(EncoderModel& m);

    // Adam with bias correction; param -= lr_scale*lr * mhat/(sqrt(vhat)+eps).
    void step(EncoderModel& m, const AdamConfig& cfg, double lr_scale = 1.0);

    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<Eigen::MatrixXd> m_, v_;
    std::int64_t t_ = 0;
};

// (step+1)/warmup capped at 1; warmup <= 0 disables.
double warmup_lr_scale(std::int64_t step, std::int64_t warmup_steps);

}  // namespace change
