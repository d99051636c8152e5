#include "change/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

namespace change {

static constexpr double kLnEps = 1e-5;
static constexpr double kInf = std::numeric_limits<double>::infinity();

void EncoderConfig::validate() const {
    if (layers < 1) throw DataError("encoder config: layers must be >= 1");
    if (heads < 1 || dim < 1 || ffn_dim < 1) throw DataError("encoder config: bad dimensions");
    if (dim % heads != 0) throw DataError("encoder config: dim must be divisible by heads");
    if (vocab_size < kNumReserved) throw DataError("encoder config: vocab_size too small");
    if (max_len < 1) throw DataError("encoder config: max_len must be >= 1");
    if (num_classes < 0) throw DataError("encoder config: num_classes must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0) throw DataError("encoder config: dropout must be in [0,1)");
}

EncoderModel::LayerParams::LayerParams(int index, int d, int f)
    : wq("layer" + std::to_string(index) + ".wq", d, d),
      bq("layer" + std::to_string(index) + ".bq", 1, d),
      wk("layer" + std::to_string(index) + ".wk", d, d),
      bk("layer" + std::to_string(index) + ".bk", 1, d),
      wv("layer" + std::to_string(index) + ".wv", d, d),
      bv("layer" + std::to_string(index) + ".bv", 1, d),
      wo("layer" + std::to_string(index) + ".wo", d, d),
      bo("layer" + std::to_string(index) + ".bo", 1, d),
      ln1_g("layer" + std::to_string(index) + ".ln1.g", 1, d),
      ln1_b("layer" + std::to_string(index) + ".ln1.b", 1, d),
      w1("layer" + std::to_string(index) + ".w1", d, f),
      b1("layer" + std::to_string(index) + ".b1", 1, f),
      w2("layer" + std::to_string(index) + ".w2", f, d),
      b2("layer" + std::to_string(index) + ".b2", 1, d),
      ln2_g("layer" + std::to_string(index) + ".ln2.g", 1, d),
      ln2_b("layer" + std::to_string(index) + ".ln2.b", 1, d) {}

EncoderModel::EncoderModel(const EncoderConfig& cfg)
    : cfg_(cfg),
      emb_tok_("emb.tok", cfg.vocab_size, cfg.dim),
      emb_pos_("emb.pos", cfg.max_len, cfg.dim),
      emb_ln_g_("emb.ln.g", 1, cfg.dim),
      emb_ln_b_("emb.ln.b", 1, cfg.dim),
      mlm_w_("mlm.w", cfg.dim, cfg.vocab_size),
      mlm_b_("mlm.b", 1, cfg.vocab_size),
      bin_w_("bin.w", cfg.dim, 1),
      bin_b_("bin.b", 1, 1),
      cls_w_("cls.w", cfg.dim, cfg.num_classes),
      cls_b_("cls.b", 1, cfg.num_classes) {
    cfg_.validate();
    layers_.reserve(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) layers_.emplace_back(l, cfg.dim, cfg.ffn_dim);
    init_parameters();
}

void EncoderModel::init_parameters() {
    Rng rng = make_rng(cfg_.seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    auto fill = [&](Param& p) {
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = dist(rng);
        }
    };
    fill(emb_tok_);
    fill(emb_pos_);
    emb_ln_g_.value.setOnes();
    for (auto& l : layers_) {
        fill(l.wq);
        fill(l.wk);
        fill(l.wv);
        fill(l.wo);
        fill(l.w1);
        fill(l.w2);
        l.ln1_g.value.setOnes();
        l.ln2_g.value.setOnes();
    }
    fill(mlm_w_);
    fill(bin_w_);
    if (cfg_.num_classes > 0) fill(cls_w_);
}

std::vector<Param*> EncoderModel::parameters() {
    std::vector<Param*> out = {&emb_tok_, &emb_pos_, &emb_ln_g_, &emb_ln_b_};
    for (auto& l : layers_) {
        for (Param* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                         &l.ln1_g, &l.ln1_b, &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_g, &l.ln2_b}) {
            out.push_back(p);
        }
    }
    out.push_back(&mlm_w_);
    out.push_back(&mlm_b_);
    out.push_back(&bin_w_);
    out.push_back(&bin_b_);
    if (cfg_.num_classes > 0) {
        out.push_back(&cls_w_);
        out.push_back(&cls_b_);
    }
    return out;
}

std::vector<const Param*> EncoderModel::parameters() const {
    auto mut = const_cast<EncoderModel*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t n = 0;
    for (const Param* p : parameters()) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void EncoderModel::zero_grads() {
    for (Param* p : parameters()) p->grad.setZero();
}

// --- forward helpers ---------------------------------------------------------

static Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Param& g, const Param& b,
                                  LnCache* cache) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Eigen::MatrixXd xhat(n, d);
    Eigen::VectorXd rstd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = x.row(i).mean();
        Eigen::RowVectorXd xc = x.row(i).array() - mu;
        double var = xc.squaredNorm() / static_cast<double>(d);
        double rs = 1.0 / std::sqrt(var + kLnEps);
        xhat.row(i) = xc * rs;
        rstd(i) = rs;
    }
    Eigen::MatrixXd y =
        (xhat.array().rowwise() * g.value.row(0).array()).rowwise() + b.value.row(0).array();
    if (cache) {
        cache->rstd = std::move(rstd);
        cache->xhat = std::move(xhat);
    }
    return y;
}

// dx from dy through layer norm; also accumulates dgamma/dbeta.
static Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const LnCache& cache,
                                           Param& g, Param& b) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    g.grad.row(0).array() += (dy.array() * cache.xhat.array()).colwise().sum();
    b.grad.row(0).array() += dy.array().colwise().sum();
    Eigen::MatrixXd dxhat = dy.array().rowwise() * g.value.row(0).array();
    Eigen::MatrixXd dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        double m1 = dxhat.row(i).mean();
        double m2 = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
        dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2);
    }
    return dx;
}

static double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

static double gelu_grad(double x) {
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    static const double inv_sqrt2pi = 0.3989422804014326779;  // 1/sqrt(2*pi)
    return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

static Eigen::ArrayXXd make_dropout(Eigen::Index n, Eigen::Index d, double rate, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double keep_scale = 1.0 / (1.0 - rate);
    Eigen::ArrayXXd mask(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) mask(i, j) = u(rng) < rate ? 0.0 : keep_scale;
    }
    return mask;
}

static Eigen::MatrixXd apply_dropout(const Eigen::MatrixXd& x, const Eigen::ArrayXXd& mask) {
    if (mask.size() == 0) return x;
    return (x.array() * mask).matrix();
}

ForwardOutput EncoderModel::forward(const std::vector<int>& ids, const AttentionMask2D& mask,
                                    const ForwardOptions& opts, Tape* tape) const {
    const int n = static_cast<int>(ids.size());
    const int d = cfg_.dim;
    const int H = cfg_.heads;
    const int dh = d / H;
    if (n == 0) throw DataError("forward: empty input");
    if (n > cfg_.max_len) throw DataError("forward: sequence longer than max_len");
    if (mask.size() != n) throw DataError("forward: mask size does not match input length");
    for (int id : ids) {
        if (id < 0 || id >= cfg_.vocab_size) {
            throw DataError("forward: token id out of vocabulary: " + std::to_string(id));
        }
    }
    const bool drop_on = opts.training && opts.dropout_rng != nullptr && cfg_.dropout > 0.0;

    Eigen::MatrixXd emb_sum(n, d);
    for (int i = 0; i < n; ++i) {
        emb_sum.row(i) = emb_tok_.value.row(ids[i]) + emb_pos_.value.row(i);
    }
    LnCache emb_ln;
    Eigen::MatrixXd normed = layer_norm(emb_sum, emb_ln_g_, emb_ln_b_, tape ? &emb_ln : nullptr);
    Eigen::ArrayXXd emb_drop;
    if (drop_on) emb_drop = make_dropout(n, d, cfg_.dropout, *opts.dropout_rng);
    Eigen::MatrixXd x = apply_dropout(normed, emb_drop);

    if (tape) {
        tape->ids = ids;
        tape->mask = mask;
        tape->emb_sum = emb_sum;
        tape->emb_ln = std::move(emb_ln);
        tape->emb_drop = emb_drop;
        tape->x0 = x;
        tape->layers.clear();
        tape->layers.resize(static_cast<std::size_t>(cfg_.layers));
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg_.layers; ++l) {
        const auto& lp = layers_[static_cast<std::size_t>(l)];
        LayerCache* c = tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr;
        if (c) c->x_in = x;

        Eigen::MatrixXd q = (x * lp.wq.value).rowwise() + lp.bq.value.row(0);
        Eigen::MatrixXd k = (x * lp.wk.value).rowwise() + lp.bk.value.row(0);
        Eigen::MatrixXd v = (x * lp.wv.value).rowwise() + lp.bv.value.row(0);

        Eigen::MatrixXd ctx(n, d);
        std::vector<Eigen::MatrixXd> attn_cache;
        if (c) attn_cache.resize(static_cast<std::size_t>(H));
        for (int h = 0; h < H; ++h) {
            auto qh = q.middleCols(h * dh, dh);
            auto kh = k.middleCols(h * dh, dh);
            auto vh = v.middleCols(h * dh, dh);
            Eigen::MatrixXd scores = qh * kh.transpose() * inv_sqrt_dh;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    if (!mask.at(i, j)) scores(i, j) = -kInf;
                }
            }
            // row softmax; masked entries become exact zeros
            for (int i = 0; i < n; ++i) {
                double mx = scores.row(i).maxCoeff();
                if (mx == -kInf) {
                    // unreachable with a diagonal-true mask: fall back to self
                    scores.row(i).setZero();
                    scores(i, i) = 1.0;
                    continue;
                }
                Eigen::RowVectorXd e = (scores.row(i).array() - mx).exp();
                scores.row(i) = e / e.sum();
            }
            ctx.middleCols(h * dh, dh) = scores * vh;
            if (c) attn_cache[static_cast<std::size_t>(h)] = std::move(scores);
        }

        Eigen::MatrixXd attn_proj = (ctx * lp.wo.value).rowwise() + lp.bo.value.row(0);
        Eigen::ArrayXXd drop1;
        if (drop_on) drop1 = make_dropout(n, d, cfg_.dropout, *opts.dropout_rng);
        Eigen::MatrixXd res1 = x + apply_dropout(attn_proj, drop1);
        LnCache ln1;
        Eigen::MatrixXd x1 = layer_norm(res1, lp.ln1_g, lp.ln1_b, c ? &ln1 : nullptr);

        Eigen::MatrixXd ffn_pre = (x1 * lp.w1.value).rowwise() + lp.b1.value.row(0);
        Eigen::MatrixXd ffn_act = ffn_pre.unaryExpr([](double t) { return gelu(t); });
        Eigen::MatrixXd ffn_out = (ffn_act * lp.w2.value).rowwise() + lp.b2.value.row(0);
        Eigen::ArrayXXd drop2;
        if (drop_on) drop2 = make_dropout(n, d, cfg_.dropout, *opts.dropout_rng);
        Eigen::MatrixXd res2 = x1 + apply_dropout(ffn_out, drop2);
        LnCache ln2;
        Eigen::MatrixXd x2 = layer_norm(res2, lp.ln2_g, lp.ln2_b, c ? &ln2 : nullptr);

        if (c) {
            c->q = std::move(q);
            c->k = std::move(k);
            c->v = std::move(v);
            c->attn = std::move(attn_cache);
            c->ctx = std::move(ctx);
            c->attn_proj = std::move(attn_proj);
            c->drop1 = std::move(drop1);
            c->ln1 = std::move(ln1);
            c->x1 = x1;
            c->ffn_pre = std::move(ffn_pre);
            c->ffn_act = std::move(ffn_act);
            c->ffn_out = std::move(ffn_out);
            c->drop2 = std::move(drop2);
            c->ln2 = std::move(ln2);
        }
        x = std::move(x2);
    }

    ForwardOutput out;
    out.hidden = x;
    if (tape) tape->hidden = x;
    if (opts.mlm) out.mlm_logits = (x * mlm_w_.value).rowwise() + mlm_b_.value.row(0);
    if (opts.bin) {
        out.bin_logits = (x * bin_w_.value).col(0);
        out.bin_logits.array() += bin_b_.value(0, 0);
    }
    if (opts.cls) {
        if (cfg_.num_classes <= 0) throw DataError("forward: model has no classification head");
        out.cls_logits = (x.row(0) * cls_w_.value + cls_b_.value.row(0)).transpose();
    }
    return out;
}

void EncoderModel::backward(const Tape& tape, const HeadGrads& grads, double scale) {
    const int n = static_cast<int>(tape.ids.size());
    const int d = cfg_.dim;
    const int H = cfg_.heads;
    const int dh = d / H;
    const Eigen::MatrixXd& h_final = tape.hidden;

    Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(n, d);
    if (grads.d_mlm.size() > 0) {
        Eigen::MatrixXd dm = grads.d_mlm * scale;
        mlm_w_.grad += h_final.transpose() * dm;
        mlm_b_.grad.row(0) += dm.colwise().sum();
        dX += dm * mlm_w_.value.transpose();
    }
    if (grads.d_bin.size() > 0) {
        Eigen::VectorXd db = grads.d_bin * scale;
        bin_w_.grad += h_final.transpose() * db;
        bin_b_.grad(0, 0) += db.sum();
        dX += db * bin_w_.value.transpose();
    }
    if (grads.d_cls.size() > 0) {
        Eigen::VectorXd dc = grads.d_cls * scale;
        cls_w_.grad += h_final.row(0).transpose() * dc.transpose();
        cls_b_.grad.row(0) += dc.transpose();
        dX.row(0) += (cls_w_.value * dc).transpose();
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = cfg_.layers - 1; l >= 0; --l) {
        auto& lp = layers_[static_cast<std::size_t>(l)];
        const auto& c = tape.layers[static_cast<std::size_t>(l)];

        // x2 = LN2(x1 + drop(ffn_out))
        Eigen::MatrixXd dres2 = layer_norm_backward(dX, c.ln2, lp.ln2_g, lp.ln2_b);
        Eigen::MatrixXd dx1 = dres2;
        Eigen::MatrixXd dffn_out = apply_dropout(dres2, c.drop2);
        lp.w2.grad += c.ffn_act.transpose() * dffn_out;
        lp.b2.grad.row(0) += dffn_out.colwise().sum();
        Eigen::MatrixXd dffn_act = dffn_out * lp.w2.value.transpose();
        Eigen::MatrixXd dffn_pre =
            (dffn_act.array() * c.ffn_pre.unaryExpr([](double t) { return gelu_grad(t); }).array())
                .matrix();
        lp.w1.grad += c.x1.transpose() * dffn_pre;
        lp.b1.grad.row(0) += dffn_pre.colwise().sum();
        dx1 += dffn_pre * lp.w1.value.transpose();

        // x1 = LN1(x_in + drop(attn_proj))
        Eigen::MatrixXd dres1 = layer_norm_backward(dx1, c.ln1, lp.ln1_g, lp.ln1_b);
        Eigen::MatrixXd dx_in = dres1;
        Eigen::MatrixXd dattn_proj = apply_dropout(dres1, c.drop1);
        lp.wo.grad += c.ctx.transpose() * dattn_proj;
        lp.bo.grad.row(0) += dattn_proj.colwise().sum();
        Eigen::MatrixXd dctx = dattn_proj * lp.wo.value.transpose();

        Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, d);
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(n, d);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(n, d);
        for (int h = 0; h < H; ++h) {
            const Eigen::MatrixXd& A = c.attn[static_cast<std::size_t>(h)];
            auto kh = c.k.middleCols(h * dh, dh);
            auto qh = c.q.middleCols(h * dh, dh);
            auto vh = c.v.middleCols(h * dh, dh);
            Eigen::MatrixXd dCh = dctx.middleCols(h * dh, dh);
            Eigen::MatrixXd dA = dCh * vh.transpose();
            dv.middleCols(h * dh, dh) = A.transpose() * dCh;
            // softmax backward: dS = A .* (dA - rowsum(dA .* A))
            Eigen::VectorXd row_dot = (dA.array() * A.array()).rowwise().sum();
            Eigen::MatrixXd dS =
                (A.array() * (dA.array().colwise() - row_dot.array())).matrix();
            dq.middleCols(h * dh, dh) = dS * kh * inv_sqrt_dh;
            dk.middleCols(h * dh, dh) = dS.transpose() * qh * inv_sqrt_dh;
        }
        lp.wq.grad += c.x_in.transpose() * dq;
        lp.bq.grad.row(0) += dq.colwise().sum();
        lp.wk.grad += c.x_in.transpose() * dk;
        lp.bk.grad.row(0) += dk.colwise().sum();
        lp.wv.grad += c.x_in.transpose() * dv;
        lp.bv.grad.row(0) += dv.colwise().sum();
        dx_in += dq * lp.wq.value.transpose();
        dx_in += dk * lp.wk.value.transpose();
        dx_in += dv * lp.wv.value.transpose();
        dX = std::move(dx_in);
    }

    Eigen::MatrixXd dnormed = apply_dropout(dX, tape.emb_drop);
    Eigen::MatrixXd demb = layer_norm_backward(dnormed, tape.emb_ln, emb_ln_g_, emb_ln_b_);
    for (int i = 0; i < n; ++i) {
        emb_tok_.grad.row(tape.ids[static_cast<std::size_t>(i)]) += demb.row(i);
        emb_pos_.grad.row(i) += demb.row(i);
    }
}

// --- checkpoint io -------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

static constexpr char kMagic[8] = {'C', 'H', 'G', 'E', 'N', 'C', '0', '1'};

template <typename T>
static void wr(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static T rd(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint truncated (format CHGENC01)");
    return v;
}

void EncoderModel::save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    wr<std::int32_t>(out, cfg_.layers);
    wr<std::int32_t>(out, cfg_.heads);
    wr<std::int32_t>(out, cfg_.dim);
    wr<std::int32_t>(out, cfg_.ffn_dim);
    wr<std::int32_t>(out, cfg_.vocab_size);
    wr<std::int32_t>(out, cfg_.max_len);
    wr<std::int32_t>(out, cfg_.num_classes);
    wr<double>(out, cfg_.dropout);
    wr<std::uint64_t>(out, cfg_.seed);
    auto params = parameters();
    wr<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Param* p : params) {
        wr<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        wr<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
        wr<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
            for (Eigen::Index col = 0; col < p->value.cols(); ++col) {
                wr<double>(out, p->value(r, col));
            }
        }
    }
    if (!out) throw DataError("checkpoint write failed");
}

void EncoderModel::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    save(out);
}

EncoderModel EncoderModel::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a valid checkpoint: expected format version CHGENC01");
    }
    EncoderConfig cfg;
    cfg.layers = rd<std::int32_t>(in);
    cfg.heads = rd<std::int32_t>(in);
    cfg.dim = rd<std::int32_t>(in);
    cfg.ffn_dim = rd<std::int32_t>(in);
    cfg.vocab_size = rd<std::int32_t>(in);
    cfg.max_len = rd<std::int32_t>(in);
    cfg.num_classes = rd<std::int32_t>(in);
    cfg.dropout = rd<double>(in);
    cfg.seed = rd<std::uint64_t>(in);
    EncoderModel model(cfg);
    auto params = model.parameters();
    auto count = rd<std::uint32_t>(in);
    if (count != params.size()) {
        throw DataError("checkpoint CHGENC01: parameter count mismatch");
    }
    for (Param* p : params) {
        auto name_len = rd<std::uint32_t>(in);
        if (name_len > 256) throw DataError("checkpoint CHGENC01: bad parameter name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        auto rows = rd<std::uint32_t>(in);
        auto cols = rd<std::uint32_t>(in);
        if (!in || name != p->name || static_cast<Eigen::Index>(rows) != p->value.rows() ||
            static_cast<Eigen::Index>(cols) != p->value.cols()) {
            throw DataError("checkpoint CHGENC01: parameter layout mismatch at '" + p->name + "'");
        }
        for (std::uint32_t r = 0; r < rows; ++r) {
            for (std::uint32_t col = 0; col < cols; ++col) {
                p->value(r, col) = rd<double>(in);
            }
        }
    }
    return model;
}

EncoderModel EncoderModel::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    return load(in);
}

// --- RAT scoring ----------------------------------------------------------------

TokenProbabilities lm_token_probabilities(const EncoderModel& model, const TokenSequence& input,
                                          bool per_position_remask) {
    const int n = static_cast<int>(input.size());
    TokenProbabilities out;
    out.p.resize(static_cast<std::size_t>(n));
    AttentionMask2D full = AttentionMask2D::full(n);
    ForwardOptions opts;
    opts.mlm = true;
    if (!per_position_remask) {
        auto fwd = model.forward(input.ids, full, opts);
        Eigen::MatrixXd probs = softmax_rows(fwd.mlm_logits);
        for (int i = 0; i < n; ++i) {
            out.p[static_cast<std::size_t>(i)] = probs(i, input.ids[static_cast<std::size_t>(i)]);
        }
    } else {
        for (int i = 0; i < n; ++i) {
            std::vector<int> ids = input.ids;
            ids[static_cast<std::size_t>(i)] = kMaskId;
            auto fwd = model.forward(ids, full, opts);
            Eigen::VectorXd row = fwd.mlm_logits.row(i).transpose();
            Eigen::VectorXd probs = softmax_vec(row);
            out.p[static_cast<std::size_t>(i)] = probs(input.ids[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

}  // namespace change
