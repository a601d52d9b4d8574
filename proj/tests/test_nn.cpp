#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "voxflow/gradcheck.hpp"
#include "voxflow/nn.hpp"

using namespace voxflow;

namespace {

LinearParams identity_linear(int d) {
    LinearParams p;
    p.w = NdArray({d, d});
    for (int i = 0; i < d; ++i) p.w.at(i, i) = 1.0;
    p.b = NdArray({d});
    return p;
}

AttentionParams identity_attention(int d) {
    AttentionParams p;
    p.q = identity_linear(d);
    p.k = identity_linear(d);
    p.v = identity_linear(d);
    p.o = identity_linear(d);
    return p;
}

}  // namespace

TEST_CASE("single-token causal attention returns the value projection") {
    const int d = 4;
    Rng rng(2);
    AttentionParams p;
    p.init(rng, d);
    p.o = identity_linear(d);  // observe the core output directly
    AttentionConfig cfg{d, 2, true, false};

    NdArray x = rng.gaussian({1, d});
    Tape t;
    Var vx = t.constant(x);
    NdArray out = t.val(attention(t, vx, vx, p, cfg, false));
    NdArray want = t.val(linear(t, vx, p.v, false));
    CHECK(out == want);
}

TEST_CASE("causal masking: later tokens never touch earlier outputs") {
    const int d = 8;
    Rng rng(3);
    AttentionParams p;
    p.init(rng, d);
    p.o.init(rng, d, d);
    AttentionConfig cfg{d, 4, true, false};

    NdArray x = rng.gaussian({5, d});
    NdArray y = x;
    y.at(4, 2) += 3.0;  // perturb the last token only

    Tape t;
    NdArray a = t.val(attention(t, t.constant(x), t.constant(x), p, cfg, false));
    NdArray b = t.val(attention(t, t.constant(y), t.constant(y), p, cfg, false));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < d; ++j) CHECK(a.at(i, j) == b.at(i, j));
    bool last_changed = false;
    for (int j = 0; j < d; ++j) last_changed = last_changed || a.at(4, j) != b.at(4, j);
    CHECK(last_changed);
}

TEST_CASE("two-token causal attention with identity projections matches the hand oracle") {
    const int d = 2;
    AttentionParams p = identity_attention(d);
    AttentionConfig cfg{d, 1, true, false};
    NdArray x = NdArray::from({2, d}, {0.5, -1.0, 1.5, 0.25});

    Tape t;
    NdArray out = t.val(attention(t, t.constant(x), t.constant(x), p, cfg, false));

    // Hand-computed: row 0 attends to itself; row 1 mixes with softmax of
    // scaled dot products.
    CHECK(out.at(0, 0) == x.at(0, 0));
    CHECK(out.at(0, 1) == x.at(0, 1));
    const double scl = 1.0 / std::sqrt(2.0);
    const double s10 = (x.at(1, 0) * x.at(0, 0) + x.at(1, 1) * x.at(0, 1)) * scl;
    const double s11 = (x.at(1, 0) * x.at(1, 0) + x.at(1, 1) * x.at(1, 1)) * scl;
    const double mx = std::max(s10, s11);
    const double w0 = std::exp(s10 - mx), w1 = std::exp(s11 - mx);
    const double z = w0 + w1;
    for (int j = 0; j < d; ++j) {
        const double want = (w0 * x.at(0, j) + w1 * x.at(1, j)) / z;
        CHECK(out.at(1, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("set attention is bitwise permutation-equivariant") {
    const int d = 8;
    Rng rng(7);
    AttentionParams p;
    p.init(rng, d);
    p.o.init(rng, d, d);
    AttentionConfig cfg{d, 4, false, true};

    const int n = 6;
    NdArray x = rng.gaussian({n, d});
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[0], perm[3]);
    std::swap(perm[2], perm[5]);
    NdArray px({n, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) px.at(i, j) = x.at(perm[static_cast<std::size_t>(i)], j);

    Tape t;
    NdArray a = t.val(attention(t, t.constant(x), t.constant(x), p, cfg, false));
    NdArray b = t.val(attention(t, t.constant(px), t.constant(px), p, cfg, false));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(b.at(i, j) == a.at(perm[static_cast<std::size_t>(i)], j));
}

TEST_CASE("fresh pre-norm block is exactly the identity map") {
    const int d = 16;
    Rng rng(11);
    TransformerBlockParams blk;
    blk.init(rng, d, 4 * d);  // attn.o and ff.out start zeroed
    AttentionConfig cfg{d, 4, true, false};

    for (int len : {1, 7, 64}) {
        NdArray x = rng.gaussian({len, d});
        Tape t;
        NdArray y = t.val(transformer_block(t, t.constant(x), blk, cfg, false));
        CHECK(y == x);
    }
}

TEST_CASE("transformer block gradient matches finite differences on a 2-token input") {
    const int d = 4;
    Rng rng(13);
    TransformerBlockParams blk;
    blk.init(rng, d, 2 * d);
    blk.attn.o.init(rng, d, d);
    blk.ff.out.init(rng, 2 * d, d);
    AttentionConfig cfg{d, 2, true, false};

    NdArray x = rng.gaussian({2, d});
    std::vector<NdArray*> inputs{&x,
                                 &blk.attn.q.w, &blk.attn.q.b,
                                 &blk.attn.k.w, &blk.attn.v.w,
                                 &blk.attn.o.w, &blk.attn.o.b,
                                 &blk.ff.in.w,  &blk.ff.in.b,
                                 &blk.ff.out.w, &blk.ln1.gain, &blk.ln1.bias,
                                 &blk.ln2.gain, &blk.ln2.bias};
    auto build = [&](Tape& t) {
        Var vx = t.param(&x, true);
        return t.mean_all(t.gelu(transformer_block(t, vx, blk, cfg, true)));
    };
    auto run_loss = [&] {
        Tape t(true);
        return t.val(build(t)).item();
    };

    Tape t(true);
    Var loss = build(t);
    t.backward(loss);
    std::vector<NdArray> grads;
    for (NdArray* in : inputs) grads.push_back(t.grad(t.param_var(in)));

    auto rep = check_gradients(run_loss, inputs, grads);
    INFO(rep.detail);
    CHECK(rep.ok);
}

TEST_CASE("mlp stack behaviors") {
    // Identity weights, zero bias, linear activation -> passthrough.
    MlpStack id;
    id.act = MlpActivation::kLinear;
    id.layers.push_back(identity_linear(3));
    id.layers.push_back(identity_linear(3));
    NdArray x = Rng(17).gaussian({4, 3});
    Tape t;
    CHECK(t.val(mlp_forward(t, t.constant(x), id, false)) == x);

    // 2-layer hand case with relu.
    MlpStack two;
    two.act = MlpActivation::kRelu;
    two.layers.resize(2);
    two.layers[0].w = NdArray::from({1, 2}, {2.0, -1.0});
    two.layers[0].b = NdArray::from({2}, {0.5, 0.25});
    two.layers[1].w = NdArray::from({2, 1}, {1.0, 3.0});
    two.layers[1].b = NdArray::from({1}, {-0.125});
    NdArray in = NdArray::from({1, 1}, {1.5});
    const double h0 = std::max(0.0, 2.0 * 1.5 + 0.5);
    const double h1 = std::max(0.0, -1.0 * 1.5 + 0.25);
    const double want = h0 * 1.0 + h1 * 3.0 - 0.125;
    Tape t2;
    CHECK(t2.val(mlp_forward(t2, t2.constant(in), two, false)).item() ==
          doctest::Approx(want).epsilon(1e-15));

    // Rows are processed independently: perturbing row 1 keeps row 0 bits.
    Rng rng(19);
    MlpStack stack;
    stack.init(rng, {3, 8, 3}, MlpActivation::kRelu);
    NdArray batch = rng.gaussian({2, 3});
    NdArray batch2 = batch;
    batch2.at(1, 0) += 1.0;
    Tape t3;
    NdArray y1 = t3.val(mlp_forward(t3, t3.constant(batch), stack, false));
    NdArray y2 = t3.val(mlp_forward(t3, t3.constant(batch2), stack, false));
    for (int j = 0; j < 3; ++j) CHECK(y1.at(0, j) == y2.at(0, j));

    // Width mismatch reported.
    NdArray wrong({2, 4});
    Tape t4;
    CHECK_THROWS_AS(mlp_forward(t4, t4.constant(wrong), stack, false), NumericError);
}

TEST_CASE("positional embeddings") {
    Tape t;
    NdArray zeros = t.val(positional_embedding(t, PosScheme::kNone, nullptr, 5, 8, false));
    CHECK(zeros.rows() == 5);
    for (std::int64_t i = 0; i < zeros.numel(); ++i) CHECK(zeros[i] == 0.0);

    Rng rng(23);
    NdArray table = rng.gaussian({10, 4});
    NdArray r1 = t.val(positional_embedding(t, PosScheme::kLearnedAbsolute, &table, 6, 4, false));
    NdArray r2 = t.val(positional_embedding(t, PosScheme::kLearnedAbsolute, &table, 6, 4, false));
    for (int j = 0; j < 4; ++j) CHECK(r1.at(2, j) == r2.at(2, j));

    CHECK_THROWS_AS(positional_embedding(t, PosScheme::kLearnedAbsolute, &table, 11, 4, false),
                    NumericError);

    // Gradient flows into the learned table.
    auto build = [&](Tape& tt) {
        return tt.mean_all(
            tt.gelu(positional_embedding(tt, PosScheme::kLearnedAbsolute, &table, 6, 4, true)));
    };
    Tape tg(true);
    Var loss = build(tg);
    tg.backward(loss);
    std::vector<NdArray> grads{tg.grad(tg.param_var(&table))};
    auto rep = check_gradients(
        [&] {
            Tape tt(true);
            return tt.val(build(tt)).item();
        },
        {&table}, grads);
    INFO(rep.detail);
    CHECK(rep.ok);
    bool nonzero = false;
    for (std::int64_t i = 0; i < grads[0].numel(); ++i) nonzero = nonzero || grads[0][i] != 0.0;
    CHECK(nonzero);
}
