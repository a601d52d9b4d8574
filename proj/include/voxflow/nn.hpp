#pragma once

#include <string>
#include <vector>

#include "voxflow/autodiff.hpp"
#include "voxflow/optim.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

struct LinearParams {
    NdArray w;  // [in, out]
    NdArray b;  // [out]

    void init(Rng& rng, int in, int out) {
        w = rng.gaussian({in, out});
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::int64_t i = 0; i < w.numel(); ++i) w[i] *= s;
        b = NdArray({out});
    }

    // Residual branch outputs start at zero so a fresh block is the identity.
    void init_zero(int in, int out) {
        w = NdArray({in, out});
        b = NdArray({out});
    }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".w", &w});
        out.push_back({prefix + ".b", &b});
    }
};

inline Var linear(Tape& t, Var x, LinearParams& p, bool trainable) {
    return t.affine(x, t.param(&p.w, trainable), t.param(&p.b, trainable));
}

struct LayerNormParams {
    NdArray gain;
    NdArray bias;

    void init(int d) {
        gain = NdArray({d}, 1.0);
        bias = NdArray({d});
    }

    void collect(const std::string& prefix, ParamList& out) {
        out.push_back({prefix + ".gain", &gain});
        out.push_back({prefix + ".bias", &bias});
    }
};

inline Var layer_norm(Tape& t, Var x, LayerNormParams& p, bool trainable) {
    return t.layer_norm(x, t.param(&p.gain, trainable), t.param(&p.bias, trainable));
}

struct AttentionConfig {
    int d_model = 64;
    int n_heads = 4;
    bool causal = false;
    // Unordered kv: reductions run in canonical row order so permuting the kv
    // rows permutes/preserves outputs bitwise. Mutually exclusive with causal.
    bool set_kv = false;
};

struct AttentionParams {
    LinearParams q, k, v, o;

    void init(Rng& rng, int d) {
        q.init(rng, d, d);
        k.init(rng, d, d);
        v.init(rng, d, d);
        o.init_zero(d, d);
    }

    void collect(const std::string& prefix, ParamList& out) {
        q.collect(prefix + ".q", out);
        k.collect(prefix + ".k", out);
        v.collect(prefix + ".v", out);
        o.collect(prefix + ".o", out);
    }
};

// Full multi-head attention: projections, scaled dot-product core, output
// projection. q_seq and kv_seq must share the configured width; causal
// attention requires q_seq == kv_seq.
inline Var attention(Tape& t, Var q_seq, Var kv_seq, AttentionParams& p,
                     const AttentionConfig& cfg, bool trainable) {
    const NdArray& qv = t.val(q_seq);
    const NdArray& kv = t.val(kv_seq);
    if (qv.cols() != cfg.d_model || kv.cols() != cfg.d_model)
        throw NumericError("attention: width mismatch, q " + qv.shape_str() + " kv " +
                           kv.shape_str() + " vs d_model " + std::to_string(cfg.d_model));
    Var q = linear(t, q_seq, p.q, trainable);
    Var k = linear(t, kv_seq, p.k, trainable);
    Var v = linear(t, kv_seq, p.v, trainable);
    Var core = t.attention_core(q, k, v, cfg.n_heads, cfg.causal, cfg.set_kv);
    return linear(t, core, p.o, trainable);
}

struct FeedForwardParams {
    LinearParams in, out;

    void init(Rng& rng, int d, int hidden) {
        in.init(rng, d, hidden);
        out.init_zero(hidden, d);
    }

    void collect(const std::string& prefix, ParamList& out_list) {
        in.collect(prefix + ".in", out_list);
        out.collect(prefix + ".out", out_list);
    }
};

inline Var feed_forward(Tape& t, Var x, FeedForwardParams& p, bool trainable) {
    return linear(t, t.gelu(linear(t, x, p.in, trainable)), p.out, trainable);
}

// Pre-norm block: x + attn(LN(x)) followed by + ff(LN(.)). Cross variant
// attends from the running stream to an external kv sequence.
struct TransformerBlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FeedForwardParams ff;

    void init(Rng& rng, int d, int ff_hidden) {
        ln1.init(d);
        ln2.init(d);
        attn.init(rng, d);
        ff.init(rng, d, ff_hidden);
    }

    void collect(const std::string& prefix, ParamList& out) {
        ln1.collect(prefix + ".ln1", out);
        attn.collect(prefix + ".attn", out);
        ln2.collect(prefix + ".ln2", out);
        ff.collect(prefix + ".ff", out);
    }
};

inline Var transformer_block(Tape& t, Var x, TransformerBlockParams& p,
                             const AttentionConfig& cfg, bool trainable) {
    Var n = layer_norm(t, x, p.ln1, trainable);
    Var h = t.add(x, attention(t, n, n, p.attn, cfg, trainable));
    return t.add(h, feed_forward(t, layer_norm(t, h, p.ln2, trainable), p.ff, trainable));
}

inline Var cross_block(Tape& t, Var x, Var kv, TransformerBlockParams& p,
                       const AttentionConfig& cfg, bool trainable) {
    AttentionConfig c = cfg;
    c.causal = false;
    Var h = t.add(x, attention(t, layer_norm(t, x, p.ln1, trainable), kv, p.attn, c, trainable));
    return t.add(h, feed_forward(t, layer_norm(t, h, p.ln2, trainable), p.ff, trainable));
}

enum class MlpActivation { kRelu, kGelu, kLinear };

struct MlpStack {
    std::vector<LinearParams> layers;
    MlpActivation act = MlpActivation::kRelu;

    // widths = [in, hidden..., out]; at least one affine layer.
    void init(Rng& rng, const std::vector<int>& widths, MlpActivation a) {
        if (widths.size() < 2) throw NumericError("MlpStack: need at least [in, out] widths");
        act = a;
        layers.resize(widths.size() - 1);
        for (std::size_t i = 0; i + 1 < widths.size(); ++i)
            layers[i].init(rng, widths[i], widths[i + 1]);
    }

    int depth() const { return static_cast<int>(layers.size()); }
    int in_width() const { return layers.front().w.rows(); }
    int out_width() const { return layers.back().w.cols(); }

    void collect(const std::string& prefix, ParamList& out) {
        for (std::size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".fc" + std::to_string(i), out);
    }
};

// Affine chain with the activation between layers and none after the last.
inline Var mlp_forward(Tape& t, Var x, MlpStack& p, bool trainable) {
    if (p.layers.empty()) throw NumericError("mlp_forward: empty stack");
    if (t.val(x).cols() != p.in_width())
        throw NumericError("mlp_forward: input width " + t.val(x).shape_str() + " vs " +
                           std::to_string(p.in_width()));
    Var h = x;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        h = linear(t, h, p.layers[i], trainable);
        if (i + 1 == p.layers.size()) break;
        switch (p.act) {
            case MlpActivation::kRelu: h = t.relu(h); break;
            case MlpActivation::kGelu: h = t.gelu(h); break;
            case MlpActivation::kLinear: break;
        }
    }
    return h;
}

enum class PosScheme { kNone, kLearnedAbsolute };

// Positional rows to add to a sequence. kNone yields zeros, which is what
// keeps latent tokens order-free and lets sampling run past the trained
// length. kLearnedAbsolute slices the learned table and rejects over-length
// requests.
inline Var positional_embedding(Tape& t, PosScheme scheme, NdArray* table, int length, int d,
                                bool trainable) {
    if (scheme == PosScheme::kNone) return t.constant(NdArray({length, d}));
    if (table == nullptr) throw NumericError("positional_embedding: missing learned table");
    if (table->cols() != d)
        throw NumericError("positional_embedding: table width " + table->shape_str() + " vs " +
                           std::to_string(d));
    if (length > table->rows())
        throw NumericError("positional_embedding: length " + std::to_string(length) +
                           " exceeds trained maximum " + std::to_string(table->rows()));
    return t.slice_rows(t.param(table, trainable), 0, length);
}

inline int64_t param_count(const ParamList& params) {
    int64_t n = 0;
    for (const ParamRef& p : params) n += p.value->numel();
    return n;
}

}  // namespace voxflow
