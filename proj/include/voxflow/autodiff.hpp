#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "voxflow/array.hpp"
#include "voxflow/common.hpp"
#include "voxflow/kernels.hpp"

namespace voxflow {

// Total order on finite doubles used for canonical row ordering: -0.0 sorts
// before +0.0 so bitwise-distinct rows get a stable rank.
inline bool total_less(double a, double b) {
    if (a < b) return true;
    if (b < a) return false;
    return std::signbit(a) && !std::signbit(b);
}

inline int row_compare(const double* a, const double* b, int n) {
    for (int i = 0; i < n; ++i) {
        if (total_less(a[i], b[i])) return -1;
        if (total_less(b[i], a[i])) return 1;
    }
    return 0;
}

// A Var names one node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense arrays. One tape per training step; creation
// order is the topological order used by backward(). Leaves may reference
// external parameter storage so weights are not copied per step.
class Tape {
  public:
    explicit Tape(bool check_finite =
#ifdef NDEBUG
                      false
#else
                      true
#endif
                  )
        : check_finite_(check_finite) {
    }

    int size() const { return static_cast<int>(nodes_.size()); }

    const NdArray& val(Var v) const {
        const Node& n = node(v);
        return n.external ? *n.external : n.value;
    }

    // Gradient of the last backward() w.r.t. v; zeros if v never received one.
    NdArray grad(Var v) const {
        const Node& n = node(v);
        const NdArray& value = n.external ? *n.external : n.value;
        if (n.grad.numel() == value.numel() && n.grad.ndim() == value.ndim()) return n.grad;
        return NdArray(value.shape());
    }

    bool needs_grad(Var v) const { return node(v).needs_grad; }

    Var constant(NdArray value) { return push(std::move(value), false, {}, nullptr, "constant"); }

    // Leaf referencing external storage. Repeated registration of the same
    // array yields the same node so gradients accumulate in one place.
    Var param(const NdArray* p, bool requires_grad) {
        auto it = param_cache_.find(p);
        if (it != param_cache_.end()) return Var{it->second};
        Node n;
        n.external = p;
        n.needs_grad = requires_grad;
        n.op = "param";
        nodes_.push_back(std::move(n));
        const int id = size() - 1;
        param_cache_.emplace(p, id);
        return Var{id};
    }

    Var param_var(const NdArray* p) const {
        auto it = param_cache_.find(p);
        return it == param_cache_.end() ? Var{} : Var{it->second};
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        const NdArray &av = val(a), &bv = val(b);
        require_same_shape("add", av, bv);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
        return push(std::move(out), needs(a, b), {a, b},
                    [a, b](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        t.accum(a, g);
                        t.accum(b, g);
                    },
                    "add");
    }

    Var sub(Var a, Var b) {
        const NdArray &av = val(a), &bv = val(b);
        require_same_shape("sub", av, bv);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
        return push(std::move(out), needs(a, b), {a, b},
                    [a, b](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        t.accum(a, g);
                        if (t.node(b).needs_grad) {
                            NdArray gb = NdArray::uninit(g.shape());
                            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] = -g[i];
                            t.accum(b, gb);
                        }
                    },
                    "sub");
    }

    Var mul(Var a, Var b) {
        const NdArray &av = val(a), &bv = val(b);
        require_same_shape("mul", av, bv);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
        return push(std::move(out), needs(a, b), {a, b},
                    [a, b](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        if (t.node(a).needs_grad) {
                            const NdArray& bv2 = t.val(b);
                            NdArray ga = NdArray::uninit(g.shape());
                            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * bv2[i];
                            t.accum(a, ga);
                        }
                        if (t.node(b).needs_grad) {
                            const NdArray& av2 = t.val(a);
                            NdArray gb = NdArray::uninit(g.shape());
                            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] = g[i] * av2[i];
                            t.accum(b, gb);
                        }
                    },
                    "mul");
    }

    Var scale(Var a, double c) {
        const NdArray& av = val(a);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * c;
        return push(std::move(out), needs(a), {a},
                    [a, c](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray ga = NdArray::uninit(g.shape());
                        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * c;
                        t.accum(a, ga);
                    },
                    "scale");
    }

    Var exp_(Var a) {
        const NdArray& av = val(a);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(av[i]);
        return push(std::move(out), needs(a), {a},
                    [a](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& y = t.nodes_[self].value;
                        NdArray ga = NdArray::uninit(g.shape());
                        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] * y[i];
                        t.accum(a, ga);
                    },
                    "exp");
    }

    Var log_(Var a) {
        const NdArray& av = val(a);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(av[i]);
        return push(std::move(out), needs(a), {a},
                    [a](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& x = t.val(a);
                        NdArray ga = NdArray::uninit(g.shape());
                        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] = g[i] / x[i];
                        t.accum(a, ga);
                    },
                    "log");
    }

    Var relu(Var a) {
        const NdArray& av = val(a);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
        return push(std::move(out), needs(a), {a},
                    [a](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& x = t.val(a);
                        NdArray ga = NdArray::uninit(g.shape());
                        for (std::int64_t i = 0; i < g.numel(); ++i)
                            ga[i] = x[i] > 0.0 ? g[i] : 0.0;
                        t.accum(a, ga);
                    },
                    "relu");
    }

    Var gelu(Var a) {
        const NdArray& av = val(a);
        NdArray out = NdArray::uninit(av.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i)
            out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * kInvSqrt2));
        return push(std::move(out), needs(a), {a},
                    [a](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& x = t.val(a);
                        NdArray ga = NdArray::uninit(g.shape());
                        for (std::int64_t i = 0; i < g.numel(); ++i) {
                            const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
                            const double pdf = std::exp(-0.5 * x[i] * x[i]) * kInvSqrt2Pi;
                            ga[i] = g[i] * (cdf + x[i] * pdf);
                        }
                        t.accum(a, ga);
                    },
                    "gelu");
    }

    // ---- structure ----

    Var reshape(Var a, std::vector<int> shape) {
        const NdArray& av = val(a);
        if (NdArray::numel_of(shape) != av.numel())
            throw NumericError("reshape: cannot view " + av.shape_str() + " as " +
                               NdArray::shape_str(shape));
        NdArray out = NdArray::uninit(shape);
        std::copy(av.data(), av.data() + av.numel(), out.data());
        return push(std::move(out), needs(a), {a},
                    [a](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray ga(t.val(a).shape());
                        std::copy(g.data(), g.data() + g.numel(), ga.data());
                        t.accum(a, ga);
                    },
                    "reshape");
    }

    Var transpose(Var a) {
        const NdArray& av = val(a);
        require(av.ndim() == 2, "transpose", "expected rank 2, got " + av.shape_str());
        const int r = av.rows(), c = av.cols();
        NdArray out = NdArray::uninit({c, r});
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
        return push(std::move(out), needs(a), {a},
                    [a, r, c](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray ga = NdArray::uninit({r, c});
                        for (int i = 0; i < c; ++i)
                            for (int j = 0; j < r; ++j) ga.at(j, i) = g.at(i, j);
                        t.accum(a, ga);
                    },
                    "transpose");
    }

    Var concat_rows(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat", "no inputs");
        const int cols = val(parts[0]).cols();
        int rows = 0;
        for (Var p : parts) {
            const NdArray& pv = val(p);
            require(pv.ndim() == 2 && pv.cols() == cols, "concat",
                    "inconsistent row width: " + pv.shape_str());
            rows += pv.rows();
        }
        NdArray out = NdArray::uninit({rows, cols});
        int at = 0;
        bool ng = false;
        for (Var p : parts) {
            const NdArray& pv = val(p);
            std::copy(pv.data(), pv.data() + pv.numel(), out.data() + std::int64_t(at) * cols);
            at += pv.rows();
            ng = ng || node(p).needs_grad;
        }
        std::vector<Var> parents = parts;
        return push(std::move(out), ng, parents,
                    [parts, cols](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        int start = 0;
                        for (Var p : parts) {
                            const int r = t.val(p).rows();
                            if (t.node(p).needs_grad) {
                                NdArray gp = NdArray::uninit({r, cols});
                                std::copy(g.data() + std::int64_t(start) * cols,
                                          g.data() + std::int64_t(start + r) * cols, gp.data());
                                t.accum(p, gp);
                            }
                            start += r;
                        }
                    },
                    "concat");
    }

    Var slice_rows(Var a, int start, int len) {
        const NdArray& av = val(a);
        require(av.ndim() == 2, "slice", "expected rank 2, got " + av.shape_str());
        require(start >= 0 && len >= 0 && start + len <= av.rows(), "slice",
                "rows [" + std::to_string(start) + "," + std::to_string(start + len) +
                    ") out of " + av.shape_str());
        const int cols = av.cols();
        NdArray out = NdArray::uninit({len, cols});
        std::copy(av.data() + std::int64_t(start) * cols,
                  av.data() + std::int64_t(start + len) * cols, out.data());
        return push(std::move(out), needs(a), {a},
                    [a, start, len, cols](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray ga(t.val(a).shape());
                        std::copy(g.data(), g.data() + std::int64_t(len) * cols,
                                  ga.data() + std::int64_t(start) * cols);
                        t.accum(a, ga);
                    },
                    "slice");
    }

    // [d] or [1,d] -> [rows,d]
    Var broadcast_row(Var a, int rows) {
        const NdArray& av = val(a);
        const int d = av.ndim() == 1 ? av.dim(0) : av.cols();
        require(av.ndim() == 1 || (av.ndim() == 2 && av.rows() == 1), "broadcast",
                "expected [d] or [1,d], got " + av.shape_str());
        NdArray out = NdArray::uninit({rows, d});
        for (int i = 0; i < rows; ++i)
            std::copy(av.data(), av.data() + d, out.data() + std::int64_t(i) * d);
        return push(std::move(out), needs(a), {a},
                    [a, rows, d](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray ga(t.val(a).shape());
                        for (int i = 0; i < rows; ++i)
                            for (int j = 0; j < d; ++j) ga[j] += g[std::int64_t(i) * d + j];
                        t.accum(a, ga);
                    },
                    "broadcast");
    }

    Var gather_rows(Var table, std::vector<int> ids) {
        const NdArray& tv = val(table);
        require(tv.ndim() == 2, "gather", "expected rank-2 table, got " + tv.shape_str());
        const int d = tv.cols();
        for (int id : ids)
            require(id >= 0 && id < tv.rows(), "gather",
                    "row " + std::to_string(id) + " out of " + tv.shape_str());
        NdArray out = NdArray::uninit({static_cast<int>(ids.size()), d});
        for (std::size_t i = 0; i < ids.size(); ++i)
            std::copy(tv.data() + std::int64_t(ids[i]) * d, tv.data() + std::int64_t(ids[i] + 1) * d,
                      out.data() + std::int64_t(i) * d);
        return push(std::move(out), needs(table), {table},
                    [table, ids = std::move(ids), d](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        NdArray gt(t.val(table).shape());
                        for (std::size_t i = 0; i < ids.size(); ++i)
                            for (int j = 0; j < d; ++j)
                                gt[std::int64_t(ids[i]) * d + j] += g[std::int64_t(i) * d + j];
                        t.accum(table, gt);
                    },
                    "gather");
    }

    // ---- reductions ----

    Var sum_all(Var a) {
        const NdArray& av = val(a);
        double s = 0.0;
        for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i];
        return push(NdArray::scalar(s), needs(a), {a},
                    [a](Tape& t, int self) {
                        const double g = t.nodes_[self].grad[0];
                        NdArray ga(t.val(a).shape(), g);
                        t.accum(a, ga);
                    },
                    "sum");
    }

    Var mean_all(Var a) {
        const NdArray& av = val(a);
        require(av.numel() > 0, "mean", "empty input");
        const double inv = 1.0 / static_cast<double>(av.numel());
        double s = 0.0;
        for (std::int64_t i = 0; i < av.numel(); ++i) s += av[i];
        return push(NdArray::scalar(s * inv), needs(a), {a},
                    [a, inv](Tape& t, int self) {
                        const double g = t.nodes_[self].grad[0] * inv;
                        NdArray ga(t.val(a).shape(), g);
                        t.accum(a, ga);
                    },
                    "mean");
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        const NdArray &av = val(a), &bv = val(b);
        require(av.ndim() == 2 && bv.ndim() == 2 && av.cols() == bv.rows(), "matmul",
                av.shape_str() + " x " + bv.shape_str());
        const int m = av.rows(), k = av.cols(), n = bv.cols();
        NdArray out = NdArray::uninit({m, n});
        mm_nn(av.data(), bv.data(), out.data(), m, k, n);
        return push(std::move(out), needs(a, b), {a, b},
                    [a, b, m, k, n](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        if (t.node(a).needs_grad) {
                            NdArray ga = NdArray::uninit({m, k});
                            mm_nt(g.data(), t.val(b).data(), ga.data(), m, n, k);
                            t.accum(a, ga);
                        }
                        if (t.node(b).needs_grad) {
                            NdArray gb = NdArray::uninit({k, n});
                            mm_tn(t.val(a).data(), g.data(), gb.data(), k, m, n);
                            t.accum(b, gb);
                        }
                    },
                    "matmul");
    }

    // Fused y = x W + b. The workhorse behind every projection; keeps the
    // bias add out of its own node.
    Var affine(Var x, Var w, Var b) {
        const NdArray &xv = val(x), &wv = val(w), &bv = val(b);
        require(xv.ndim() == 2 && wv.ndim() == 2 && xv.cols() == wv.rows(), "affine",
                xv.shape_str() + " x " + wv.shape_str());
        const int m = xv.rows(), k = xv.cols(), n = wv.cols();
        require(bv.numel() == n, "affine",
                "bias " + bv.shape_str() + " vs out width " + std::to_string(n));
        NdArray out = NdArray::uninit({m, n});
        mm_nn(xv.data(), wv.data(), out.data(), m, k, n);
        for (int i = 0; i < m; ++i) {
            double* row = out.data() + std::int64_t(i) * n;
            for (int j = 0; j < n; ++j) row[j] += bv[j];
        }
        return push(std::move(out), needs(x, w) || needs(b), {x, w, b},
                    [x, w, b, m, k, n](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        if (t.node(x).needs_grad) {
                            NdArray gx = NdArray::uninit({m, k});
                            mm_nt(g.data(), t.val(w).data(), gx.data(), m, n, k);
                            t.accum(x, gx);
                        }
                        if (t.node(w).needs_grad) {
                            NdArray gw = NdArray::uninit({k, n});
                            mm_tn(t.val(x).data(), g.data(), gw.data(), k, m, n);
                            t.accum(w, gw);
                        }
                        if (t.node(b).needs_grad) {
                            NdArray gb({n});
                            for (int i = 0; i < m; ++i)
                                for (int j = 0; j < n; ++j) gb[j] += g[std::int64_t(i) * n + j];
                            t.accum(b, gb);
                        }
                    },
                    "affine");
    }

    // Softmax over the last axis of a vector or matrix, max-subtracted.
    Var softmax(Var a) {
        const NdArray& av = val(a);
        require(av.ndim() == 1 || av.ndim() == 2, "softmax", "rank must be 1 or 2");
        const int rows = av.ndim() == 2 ? av.rows() : 1;
        const int cols = av.ndim() == 2 ? av.cols() : av.dim(0);
        NdArray out = NdArray::uninit(av.shape());
        for (int i = 0; i < rows; ++i)
            softmax_row(av.data() + std::int64_t(i) * cols, out.data() + std::int64_t(i) * cols,
                        cols);
        return push(std::move(out), needs(a), {a},
                    [a, rows, cols](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& y = t.nodes_[self].value;
                        NdArray ga = NdArray::uninit(g.shape());
                        for (int i = 0; i < rows; ++i) {
                            const double* yr = y.data() + std::int64_t(i) * cols;
                            const double* gr = g.data() + std::int64_t(i) * cols;
                            double dot = 0.0;
                            for (int j = 0; j < cols; ++j) dot += yr[j] * gr[j];
                            double* gar = ga.data() + std::int64_t(i) * cols;
                            for (int j = 0; j < cols; ++j) gar[j] = yr[j] * (gr[j] - dot);
                        }
                        t.accum(a, ga);
                    },
                    "softmax");
    }

    // Per-row layer normalization with learned gain/bias.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const NdArray& xv = val(x);
        const NdArray& gv = val(gain);
        const NdArray& bv = val(bias);
        require(xv.ndim() == 2, "layer_norm", "expected rank-2 input, got " + xv.shape_str());
        const int rows = xv.rows(), d = xv.cols();
        require(gv.numel() == d && bv.numel() == d, "layer_norm",
                "gain/bias " + gv.shape_str() + "/" + bv.shape_str() + " vs width " +
                    std::to_string(d));
        NdArray out = NdArray::uninit({rows, d});
        auto xhat = std::make_shared<NdArray>(NdArray::uninit({rows, d}));
        auto inv_std = std::make_shared<NdArray>(NdArray::uninit({rows}));
        for (int i = 0; i < rows; ++i) {
            const double* xr = xv.data() + std::int64_t(i) * d;
            double mu = 0.0;
            for (int j = 0; j < d; ++j) mu += xr[j];
            mu /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= d;
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[i] = is;
            double* hr = xhat->data() + std::int64_t(i) * d;
            double* yr = out.data() + std::int64_t(i) * d;
            for (int j = 0; j < d; ++j) {
                hr[j] = (xr[j] - mu) * is;
                yr[j] = gv[j] * hr[j] + bv[j];
            }
        }
        return push(std::move(out), needs(x, gain) || needs(bias), {x, gain, bias},
                    [x, gain, bias, xhat, inv_std, rows, d](Tape& t, int self) {
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray& gv2 = t.val(gain);
                        NdArray gx = NdArray::uninit({rows, d});
                        NdArray gg({d});
                        NdArray gb({d});
                        for (int i = 0; i < rows; ++i) {
                            const double* gr = g.data() + std::int64_t(i) * d;
                            const double* hr = xhat->data() + std::int64_t(i) * d;
                            const double is = (*inv_std)[i];
                            double sum_dh = 0.0, sum_dh_h = 0.0;
                            for (int j = 0; j < d; ++j) {
                                const double dh = gr[j] * gv2[j];
                                sum_dh += dh;
                                sum_dh_h += dh * hr[j];
                                gg[j] += gr[j] * hr[j];
                                gb[j] += gr[j];
                            }
                            double* gxr = gx.data() + std::int64_t(i) * d;
                            for (int j = 0; j < d; ++j) {
                                const double dh = gr[j] * gv2[j];
                                gxr[j] = is * (dh - sum_dh / d - hr[j] * sum_dh_h / d);
                            }
                        }
                        if (t.node(x).needs_grad) t.accum(x, gx);
                        if (t.node(gain).needs_grad) t.accum(gain, gg);
                        if (t.node(bias).needs_grad) t.accum(bias, gb);
                    },
                    "layer_norm");
    }

    // Scaled dot-product attention over projected Q/K/V with column-block
    // heads. causal masks j>i (requires square attention). When canonical_kv
    // is set the kv rows are reduced in a content-sorted order, which makes
    // set attention bitwise permutation-stable; the permutation is undone in
    // backward.
    Var attention_core(Var q, Var k, Var v, int n_heads, bool causal, bool canonical_kv) {
        const NdArray &qv = val(q), &kv = val(k), &vv = val(v);
        require(qv.ndim() == 2 && kv.ndim() == 2 && vv.ndim() == 2, "attention", "rank-2 inputs");
        const int tq = qv.rows(), tk = kv.rows(), d = qv.cols();
        require(kv.cols() == d && vv.cols() == d && vv.rows() == tk, "attention",
                qv.shape_str() + " / " + kv.shape_str() + " / " + vv.shape_str());
        require(d % n_heads == 0, "attention",
                "width " + std::to_string(d) + " not divisible by " + std::to_string(n_heads));
        require(!causal || tq == tk, "attention", "causal attention requires square shape");
        require(!(causal && canonical_kv), "attention", "causal attention cannot reorder kv");
        const int dh = d / n_heads;
        const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

        auto perm = std::make_shared<std::vector<int>>(tk);
        std::iota(perm->begin(), perm->end(), 0);
        if (canonical_kv) {
            const double* kd = kv.data();
            const double* vd = vv.data();
            std::sort(perm->begin(), perm->end(), [&](int x, int y) {
                int c = row_compare(kd + std::int64_t(x) * d, kd + std::int64_t(y) * d, d);
                if (c != 0) return c < 0;
                c = row_compare(vd + std::int64_t(x) * d, vd + std::int64_t(y) * d, d);
                return c < 0;
            });
        }
        // With a causal mask the permutation is identity, so masking by the
        // permuted index j is masking by the original position.
        auto probs = std::make_shared<std::vector<NdArray>>();
        probs->reserve(static_cast<std::size_t>(n_heads));
        NdArray out = NdArray::uninit({tq, d});
        NdArray qh = NdArray::uninit({tq, dh}), kh = NdArray::uninit({tk, dh});
        NdArray vh = NdArray::uninit({tk, dh}), oh = NdArray::uninit({tq, dh});
        NdArray scores = NdArray::uninit({tq, tk});
        for (int h = 0; h < n_heads; ++h) {
            copy_head(qv.data(), qh.data(), tq, d, dh, h, nullptr);
            copy_head(kv.data(), kh.data(), tk, d, dh, h, perm->data());
            copy_head(vv.data(), vh.data(), tk, d, dh, h, perm->data());
            mm_nt(qh.data(), kh.data(), scores.data(), tq, dh, tk);
            NdArray p = NdArray::uninit({tq, tk});
            for (int i = 0; i < tq; ++i) {
                double* sr = scores.data() + std::int64_t(i) * tk;
                const int lim = causal ? i + 1 : tk;
                for (int j = 0; j < lim; ++j) sr[j] *= scl;
                softmax_row(sr, p.data() + std::int64_t(i) * tk, lim);
                for (int j = lim; j < tk; ++j) p.at(i, j) = 0.0;
            }
            mm_nn(p.data(), vh.data(), oh.data(), tq, tk, dh);
            paste_head(oh.data(), out.data(), tq, d, dh, h);
            probs->push_back(std::move(p));
        }
        return push(std::move(out), needs(q, k) || needs(v), {q, k, v},
                    [q, k, v, n_heads, dh, scl, perm, probs, tq, tk](Tape& t, int self) {
                        const int d = n_heads * dh;
                        const NdArray& g = t.nodes_[self].grad;
                        const NdArray &qv2 = t.val(q), &kv2 = t.val(k), &vv2 = t.val(v);
                        const bool nq = t.node(q).needs_grad;
                        const bool nk = t.node(k).needs_grad;
                        const bool nv = t.node(v).needs_grad;
                        NdArray gq = NdArray::uninit({tq, d});
                        NdArray gkp = NdArray::uninit({tk, d});
                        NdArray gvp = NdArray::uninit({tk, d});
                        NdArray qh = NdArray::uninit({tq, dh}), kh = NdArray::uninit({tk, dh});
                        NdArray vh = NdArray::uninit({tk, dh}), gh = NdArray::uninit({tq, dh});
                        NdArray tmp_q = NdArray::uninit({tq, dh});
                        NdArray tmp_k = NdArray::uninit({tk, dh});
                        NdArray dp = NdArray::uninit({tq, tk});
                        NdArray ds = NdArray::uninit({tq, tk});
                        for (int h = 0; h < n_heads; ++h) {
                            copy_head(g.data(), gh.data(), tq, d, dh, h, nullptr);
                            copy_head(qv2.data(), qh.data(), tq, d, dh, h, nullptr);
                            copy_head(kv2.data(), kh.data(), tk, d, dh, h, perm->data());
                            copy_head(vv2.data(), vh.data(), tk, d, dh, h, perm->data());
                            const NdArray& p = (*probs)[static_cast<std::size_t>(h)];
                            if (nv) {
                                mm_tn(p.data(), gh.data(), tmp_k.data(), tk, tq, dh);
                                paste_head(tmp_k.data(), gvp.data(), tk, d, dh, h);
                            }
                            if (nq || nk) {
                                mm_nt(gh.data(), vh.data(), dp.data(), tq, dh, tk);
                                for (int i = 0; i < tq; ++i) {
                                    const double* pr = p.data() + std::int64_t(i) * tk;
                                    const double* dpr = dp.data() + std::int64_t(i) * tk;
                                    double dot = 0.0;
                                    for (int j = 0; j < tk; ++j) dot += pr[j] * dpr[j];
                                    double* dsr = ds.data() + std::int64_t(i) * tk;
                                    for (int j = 0; j < tk; ++j)
                                        dsr[j] = pr[j] * (dpr[j] - dot) * scl;
                                }
                                if (nq) {
                                    mm_nn(ds.data(), kh.data(), tmp_q.data(), tq, tk, dh);
                                    paste_head(tmp_q.data(), gq.data(), tq, d, dh, h);
                                }
                                if (nk) {
                                    mm_tn(ds.data(), qh.data(), tmp_k.data(), tk, tq, dh);
                                    paste_head(tmp_k.data(), gkp.data(), tk, d, dh, h);
                                }
                            }
                        }
                        if (nq) t.accum(q, gq);
                        if (nk) {
                            NdArray gk = NdArray::uninit({tk, d});
                            for (int j = 0; j < tk; ++j)
                                std::copy(gkp.data() + std::int64_t(j) * d,
                                          gkp.data() + std::int64_t(j + 1) * d,
                                          gk.data() + std::int64_t((*perm)[j]) * d);
                            t.accum(k, gk);
                        }
                        if (nv) {
                            NdArray gv = NdArray::uninit({tk, d});
                            for (int j = 0; j < tk; ++j)
                                std::copy(gvp.data() + std::int64_t(j) * d,
                                          gvp.data() + std::int64_t(j + 1) * d,
                                          gv.data() + std::int64_t((*perm)[j]) * d);
                            t.accum(v, gv);
                        }
                    },
                    "attention");
    }

    // ---- losses ----

    // Mean negative log-likelihood over positions whose target is not
    // ignore_index. Throws when every position is ignored.
    Var cross_entropy(Var logits, std::vector<int> targets, int ignore_index = -1) {
        const NdArray& lv = val(logits);
        require(lv.ndim() == 2, "cross_entropy", "expected [T,V] logits, got " + lv.shape_str());
        const int rows = lv.rows(), v_size = lv.cols();
        require(static_cast<int>(targets.size()) == rows, "cross_entropy",
                "targets " + std::to_string(targets.size()) + " vs rows " + std::to_string(rows));
        int kept = 0;
        double total = 0.0;
        auto probs = std::make_shared<NdArray>(NdArray::uninit({rows, v_size}));
        for (int i = 0; i < rows; ++i) {
            const int tgt = targets[static_cast<std::size_t>(i)];
            if (tgt == ignore_index) continue;
            require(tgt >= 0 && tgt < v_size, "cross_entropy",
                    "target " + std::to_string(tgt) + " out of vocab " + std::to_string(v_size));
            const double* row = lv.data() + std::int64_t(i) * v_size;
            double* pr = probs->data() + std::int64_t(i) * v_size;
            softmax_row(row, pr, v_size);
            total += -std::log(pr[tgt]);
            ++kept;
        }
        if (kept == 0) throw NumericError("cross_entropy: every position carries ignore_index");
        return push(NdArray::scalar(total / kept), needs(logits), {logits},
                    [logits, targets = std::move(targets), ignore_index, probs, rows, v_size,
                     kept](Tape& t, int self) {
                        const double g = t.nodes_[self].grad[0] / kept;
                        NdArray gl({rows, v_size});
                        for (int i = 0; i < rows; ++i) {
                            const int tgt = targets[static_cast<std::size_t>(i)];
                            if (tgt == ignore_index) continue;
                            const double* pr = probs->data() + std::int64_t(i) * v_size;
                            double* gr = gl.data() + std::int64_t(i) * v_size;
                            for (int j = 0; j < v_size; ++j) gr[j] = g * pr[j];
                            gr[tgt] -= g;
                        }
                        t.accum(logits, gl);
                    },
                    "cross_entropy");
    }

    Var mse(Var pred, NdArray target) {
        const NdArray& pv = val(pred);
        require_same_shape("mse", pv, target);
        const std::int64_t n = pv.numel();
        require(n > 0, "mse", "empty input");
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = pv[i] - target[i];
            s += d * d;
        }
        auto tgt = std::make_shared<NdArray>(std::move(target));
        return push(NdArray::scalar(s / static_cast<double>(n)), needs(pred), {pred},
                    [pred, tgt, n](Tape& t, int self) {
                        const double g = 2.0 * t.nodes_[self].grad[0] / static_cast<double>(n);
                        const NdArray& pv2 = t.val(pred);
                        NdArray gp = NdArray::uninit(pv2.shape());
                        for (std::int64_t i = 0; i < n; ++i) gp[i] = g * (pv2[i] - (*tgt)[i]);
                        t.accum(pred, gp);
                    },
                    "mse");
    }

    // Mean binary cross-entropy with logits, numerically stable.
    Var bce_logits(Var logits, NdArray targets) {
        const NdArray& lv = val(logits);
        require_same_shape("bce_logits", lv, targets);
        const std::int64_t n = lv.numel();
        require(n > 0, "bce_logits", "empty input");
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double x = lv[i], y = targets[i];
            s += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        }
        auto tgt = std::make_shared<NdArray>(std::move(targets));
        return push(NdArray::scalar(s / static_cast<double>(n)), needs(logits), {logits},
                    [logits, tgt, n](Tape& t, int self) {
                        const double g = t.nodes_[self].grad[0] / static_cast<double>(n);
                        const NdArray& lv2 = t.val(logits);
                        NdArray gl = NdArray::uninit(lv2.shape());
                        for (std::int64_t i = 0; i < n; ++i) {
                            const double sig = 1.0 / (1.0 + std::exp(-lv2[i]));
                            gl[i] = g * (sig - (*tgt)[i]);
                        }
                        t.accum(logits, gl);
                    },
                    "bce_logits");
    }

    // ---- reverse pass ----

    void backward(Var loss) {
        Node& ln = node_mut(loss);
        const NdArray& lv = val(loss);
        if (lv.numel() != 1)
            throw NumericError("backward: loss must be scalar, got " + lv.shape_str());
        ln.grad = NdArray(lv.shape());
        ln.grad[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, i);
        }
    }

  private:
    struct Node {
        NdArray value;
        const NdArray* external = nullptr;
        NdArray grad;
        bool needs_grad = false;
        std::function<void(Tape&, int)> backward;
        const char* op = "";
    };

    const Node& node(Var v) const {
        if (!v.valid() || v.id >= size()) throw NumericError("Tape: invalid Var");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    Node& node_mut(Var v) {
        if (!v.valid() || v.id >= size()) throw NumericError("Tape: invalid Var");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    bool needs(Var a) const { return node(a).needs_grad; }
    bool needs(Var a, Var b) const { return node(a).needs_grad || node(b).needs_grad; }

    void accum(Var v, const NdArray& g) {
        Node& n = node_mut(v);
        if (!n.needs_grad) return;
        const NdArray& value = n.external ? *n.external : n.value;
        if (n.grad.numel() != value.numel() || n.grad.ndim() != value.ndim())
            n.grad = NdArray(value.shape());
        for (std::int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
    }

    Var push(NdArray value, bool needs_grad, std::vector<Var> /*parents*/,
             std::function<void(Tape&, int)> backward, const char* op) {
        if (check_finite_ && !value.all_finite())
            throw NumericError(std::string("non-finite value produced by op '") + op + "'");
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad) n.backward = std::move(backward);
        n.op = op;
        nodes_.push_back(std::move(n));
        return Var{size() - 1};
    }

    // Gather head column block h into a contiguous [t,dh] buffer, optionally
    // routing row r through perm[r].
    static void copy_head(const double* src, double* dst, int t, int d, int dh, int h,
                          const int* perm) {
        for (int r = 0; r < t; ++r) {
            const double* s = src + std::int64_t(perm ? perm[r] : r) * d + h * dh;
            std::copy(s, s + dh, dst + std::int64_t(r) * dh);
        }
    }

    static void paste_head(const double* src, double* dst, int t, int d, int dh, int h) {
        for (int r = 0; r < t; ++r)
            std::copy(src + std::int64_t(r) * dh, src + std::int64_t(r + 1) * dh,
                      dst + std::int64_t(r) * d + h * dh);
    }

    static void require(bool cond, const char* op, const std::string& what) {
        if (!cond) throw NumericError(std::string(op) + ": " + what);
    }

    static void require_same_shape(const char* op, const NdArray& a, const NdArray& b) {
        if (!a.same_shape(b))
            throw NumericError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                               b.shape_str());
    }

    static void softmax_row(const double* in, double* out, int n) {
        double mx = in[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j) out[j] *= inv;
    }

    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;

    std::vector<Node> nodes_;
    std::unordered_map<const NdArray*, int> param_cache_;
    bool check_finite_;

    friend struct TapeTestAccess;
};

}  // namespace voxflow
