#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualcam/errors.hpp"
#include "dualcam/tensor.hpp"

namespace dcam::nn {

// Named trainable tensors plus their gradient and optimizer-moment buffers.
// Entry order is creation order and fixes every accumulation order.
template <typename T>
struct ParamStoreT {
    struct Entry {
        std::string name;
        std::vector<long> shape;
        std::vector<T> value, grad, m, v;
    };

    std::vector<Entry> entries;
    std::unordered_map<std::string, int> index;

    int add(const std::string& name, std::vector<long> shape, std::vector<T> value) {
        if (index.count(name)) throw ConfigError("duplicate parameter: " + name);
        Entry e;
        e.name = name;
        e.shape = std::move(shape);
        if (static_cast<long>(value.size()) != TensorT<T>::count(e.shape))
            throw ShapeError("parameter size mismatch: " + name);
        e.value = std::move(value);
        e.grad.assign(e.value.size(), T(0));
        e.m.assign(e.value.size(), T(0));
        e.v.assign(e.value.size(), T(0));
        entries.push_back(std::move(e));
        index[name] = static_cast<int>(entries.size()) - 1;
        return index[name];
    }

    bool has(const std::string& name) const { return index.count(name) != 0; }
    Entry& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter: " + name);
        return entries[static_cast<size_t>(it->second)];
    }
    const Entry& at(const std::string& name) const {
        return const_cast<ParamStoreT*>(this)->at(name);
    }

    void zero_grad() {
        for (auto& e : entries) std::fill(e.grad.begin(), e.grad.end(), T(0));
    }
};

// Reverse-mode tape. Building an op records a closure that propagates
// gradients from the node to its inputs; backward() replays them newest
// to oldest.
template <typename T>
class TapeT {
  public:
    using Vec = std::vector<T>;
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;
    using Stride = Eigen::OuterStride<>;

    struct Node {
        std::vector<long> shape;
        Vec val;
        Vec grad;
        std::function<void(TapeT&)> back;
    };

    std::vector<Node> nodes;

    Vec& val(int i) { return nodes[static_cast<size_t>(i)].val; }
    Vec& grad(int i) { return nodes[static_cast<size_t>(i)].grad; }
    const std::vector<long>& shape(int i) const { return nodes[static_cast<size_t>(i)].shape; }
    long size(int i) const { return static_cast<long>(nodes[static_cast<size_t>(i)].val.size()); }
    long last_dim(int i) const { return shape(i).back(); }
    long rows(int i) const { return size(i) / last_dim(i); }

    int leaf(std::vector<long> shape, Vec data) {
        if (TensorT<T>::count(shape) != static_cast<long>(data.size()))
            throw ShapeError("leaf shape mismatch");
        nodes.push_back(Node{std::move(shape), std::move(data), {}, nullptr});
        return static_cast<int>(nodes.size()) - 1;
    }
    int leaf(const TensorT<T>& t) { return leaf(t.shape, t.data); }
    int zeros(std::vector<long> shape) {
        Vec z(static_cast<size_t>(TensorT<T>::count(shape)), T(0));
        return leaf(std::move(shape), std::move(z));
    }

    // Leaf backed by a parameter store entry; backward accumulates there.
    int param(ParamStoreT<T>& store, int entry) {
        auto& e = store.entries[static_cast<size_t>(entry)];
        int id = leaf(e.shape, e.value);
        nodes[static_cast<size_t>(id)].back = [&store, entry, id](TapeT& tp) {
            auto& ent = store.entries[static_cast<size_t>(entry)];
            const Vec& g = tp.grad(id);
            for (size_t i = 0; i < g.size(); ++i) ent.grad[i] += g[i];
        };
        return id;
    }
    int param(ParamStoreT<T>& store, const std::string& name) {
        auto it = store.index.find(name);
        if (it == store.index.end()) throw ConfigError("unknown parameter: " + name);
        return param(store, it->second);
    }

    int add(int a, int b) {
        if (shape(a) != shape(b)) throw ShapeError("add: shape mismatch");
        Vec out(val(a).size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] + val(b)[i];
        int id = leaf(shape(a), std::move(out));
        nodes[static_cast<size_t>(id)].back = [a, b, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& ga = tp.grad(a);
            Vec& gb = tp.grad(b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
        };
        return id;
    }

    int scale(int a, T s) {
        Vec out(val(a).size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] * s;
        int id = leaf(shape(a), std::move(out));
        nodes[static_cast<size_t>(id)].back = [a, s, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& ga = tp.grad(a);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        };
        return id;
    }

    // y = x W^T (+ bias), applied over the last dimension.
    int linear(int x, int w, int bias = -1) {
        const long cin = last_dim(x);
        if (shape(w).size() != 2 || shape(w)[1] != cin) throw ShapeError("linear: weight mismatch");
        const long cout = shape(w)[0];
        const long r = rows(x);
        std::vector<long> oshape(shape(x));
        oshape.back() = cout;
        Vec out(static_cast<size_t>(r * cout));
        {
            CMapM X(val(x).data(), r, cin);
            CMapM W(val(w).data(), cout, cin);
            MapM Y(out.data(), r, cout);
            Y.noalias() = X * W.transpose();
            if (bias >= 0) {
                if (size(bias) != cout) throw ShapeError("linear: bias mismatch");
                CMapM B(val(bias).data(), 1, cout);
                Y.rowwise() += B.row(0);
            }
        }
        int id = leaf(std::move(oshape), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, w, bias, id, r, cin, cout](TapeT& tp) {
            CMapM dY(tp.grad(id).data(), r, cout);
            CMapM X(tp.val(x).data(), r, cin);
            CMapM W(tp.val(w).data(), cout, cin);
            MapM dX(tp.grad(x).data(), r, cin);
            MapM dW(tp.grad(w).data(), cout, cin);
            dX.noalias() += dY * W;
            dW.noalias() += dY.transpose() * X;
            if (bias >= 0) {
                MapM dB(tp.grad(bias).data(), 1, cout);
                dB.row(0) += dY.colwise().sum();
            }
        };
        return id;
    }

    // Layer normalization over the last dimension, no affine part.
    int layernorm(int x, T eps = T(1e-5)) {
        const long c = last_dim(x);
        const long r = rows(x);
        Vec out(val(x).size());
        auto mean = std::make_shared<Vec>(static_cast<size_t>(r));
        auto rstd = std::make_shared<Vec>(static_cast<size_t>(r));
        for (long i = 0; i < r; ++i) {
            const T* xp = val(x).data() + i * c;
            double mu = 0;
            for (long j = 0; j < c; ++j) mu += xp[j];
            mu /= c;
            double var = 0;
            for (long j = 0; j < c; ++j) {
                double d = xp[j] - mu;
                var += d * d;
            }
            var /= c;
            T rs = T(1) / std::sqrt(static_cast<T>(var) + eps);
            (*mean)[static_cast<size_t>(i)] = static_cast<T>(mu);
            (*rstd)[static_cast<size_t>(i)] = rs;
            T* yp = out.data() + i * c;
            for (long j = 0; j < c; ++j) yp[j] = (xp[j] - static_cast<T>(mu)) * rs;
        }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id, r, c, mean, rstd](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            const Vec& xv = tp.val(x);
            for (long i = 0; i < r; ++i) {
                const T mu = (*mean)[static_cast<size_t>(i)];
                const T rs = (*rstd)[static_cast<size_t>(i)];
                const T* xp = xv.data() + i * c;
                const T* gp = g.data() + i * c;
                double gmean = 0, gxhat = 0;
                for (long j = 0; j < c; ++j) {
                    T xh = (xp[j] - mu) * rs;
                    gmean += gp[j];
                    gxhat += gp[j] * xh;
                }
                gmean /= c;
                gxhat /= c;
                T* gxp = gx.data() + i * c;
                for (long j = 0; j < c; ++j) {
                    T xh = (xp[j] - mu) * rs;
                    gxp[j] += rs * (gp[j] - static_cast<T>(gmean) - xh * static_cast<T>(gxhat));
                }
            }
        };
        return id;
    }

    int gelu(int x) {
        Vec out(val(x).size());
        for (size_t i = 0; i < out.size(); ++i) {
            double v = static_cast<double>(val(x)[i]);
            out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
        }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            const Vec& xv = tp.val(x);
            for (size_t i = 0; i < g.size(); ++i) {
                double v = static_cast<double>(xv[i]);
                double d = 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
                           v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
                gx[i] += g[i] * static_cast<T>(d);
            }
        };
        return id;
    }

    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;

    static T sigmoid_scalar(T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
    }

    int silu(int x) {
        Vec out(val(x).size());
        for (size_t i = 0; i < out.size(); ++i) {
            T s = sigmoid_scalar(val(x)[i]);
            out[i] = val(x)[i] * s;
        }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            const Vec& xv = tp.val(x);
            for (size_t i = 0; i < g.size(); ++i) {
                T s = sigmoid_scalar(xv[i]);
                gx[i] += g[i] * (s * (T(1) + xv[i] * (T(1) - s)));
            }
        };
        return id;
    }

    int sigmoid(int x) {
        Vec out(val(x).size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(val(x)[i]);
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            const Vec& y = tp.val(id);
            Vec& gx = tp.grad(x);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
        };
        return id;
    }

    // Multi-head self attention over qkv [B, L, 3C]; Q/K/V occupy channel
    // thirds, heads split each third. Softmax weights are recomputed in
    // backward instead of being cached.
    int attention(int qkv, int heads) {
        const auto& s = shape(qkv);
        if (s.size() != 3 || s[2] % 3 != 0) throw ShapeError("attention: qkv must be [B,L,3C]");
        const long B = s[0], L = s[1], C = s[2] / 3;
        if (C % heads != 0) throw ShapeError("attention: C not divisible by heads");
        const long dh = C / heads;
        const T alpha = T(1) / std::sqrt(static_cast<T>(dh));

        Vec out(static_cast<size_t>(B * L * C));
        Mat scores(L, L);
        for (long b = 0; b < B; ++b)
            for (long h = 0; h < heads; ++h) {
                const T* base = val(qkv).data() + b * L * 3 * C;
                CMapM Q(base + 0 * C + h * dh, L, dh, Stride(3 * C));
                CMapM K(base + 1 * C + h * dh, L, dh, Stride(3 * C));
                CMapM V(base + 2 * C + h * dh, L, dh, Stride(3 * C));
                scores.noalias() = Q * K.transpose() * alpha;
                softmax_rows(scores);
                Eigen::Map<Mat, 0, Stride> O(out.data() + b * L * C + h * dh, L, dh,
                                             Stride(C));
                O.noalias() = scores * V;
            }
        int id = leaf({B, L, C}, std::move(out));
        nodes[static_cast<size_t>(id)].back = [qkv, id, B, L, C, heads, dh, alpha](TapeT& tp) {
            Mat P(L, L), dP(L, L), dS(L, L);
            for (long b = 0; b < B; ++b)
                for (long h = 0; h < heads; ++h) {
                    const T* base = tp.val(qkv).data() + b * L * 3 * C;
                    CMapM Q(base + 0 * C + h * dh, L, dh, Stride(3 * C));
                    CMapM K(base + 1 * C + h * dh, L, dh, Stride(3 * C));
                    CMapM V(base + 2 * C + h * dh, L, dh, Stride(3 * C));
                    P.noalias() = Q * K.transpose() * alpha;
                    softmax_rows(P);
                    CMapM dO(tp.grad(id).data() + b * L * C + h * dh, L, dh, Stride(C));
                    T* gbase = tp.grad(qkv).data() + b * L * 3 * C;
                    Eigen::Map<Mat, 0, Stride> dQ(gbase + 0 * C + h * dh, L, dh, Stride(3 * C));
                    Eigen::Map<Mat, 0, Stride> dK(gbase + 1 * C + h * dh, L, dh, Stride(3 * C));
                    Eigen::Map<Mat, 0, Stride> dV(gbase + 2 * C + h * dh, L, dh, Stride(3 * C));
                    dV.noalias() += P.transpose() * dO;
                    dP.noalias() = dO * V.transpose();
                    for (long i = 0; i < L; ++i) {
                        T dot = 0;
                        for (long j = 0; j < L; ++j) dot += dP(i, j) * P(i, j);
                        for (long j = 0; j < L; ++j) dS(i, j) = P(i, j) * (dP(i, j) - dot);
                    }
                    dQ.noalias() += dS * K * alpha;
                    dK.noalias() += dS.transpose() * Q * alpha;
                }
        };
        return id;
    }

    // x [B,L,C] modulated by mod [B,2C]: y = x*(1+scale) + shift, shift in
    // the first C columns, scale in the second.
    int ada_modulate(int x, int mod) {
        const auto& s = shape(x);
        if (s.size() != 3) throw ShapeError("ada_modulate: x must be [B,L,C]");
        const long B = s[0], L = s[1], C = s[2];
        if (shape(mod) != std::vector<long>{B, 2 * C})
            throw ShapeError("ada_modulate: mod must be [B,2C]");
        Vec out(val(x).size());
        for (long b = 0; b < B; ++b) {
            const T* shift = val(mod).data() + b * 2 * C;
            const T* sc = shift + C;
            for (long l = 0; l < L; ++l) {
                const T* xp = val(x).data() + (b * L + l) * C;
                T* yp = out.data() + (b * L + l) * C;
                for (long c = 0; c < C; ++c) yp[c] = xp[c] * (T(1) + sc[c]) + shift[c];
            }
        }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, mod, id, B, L, C](TapeT& tp) {
            for (long b = 0; b < B; ++b) {
                const T* sc = tp.val(mod).data() + b * 2 * C + C;
                T* gshift = tp.grad(mod).data() + b * 2 * C;
                T* gsc = gshift + C;
                for (long l = 0; l < L; ++l) {
                    const T* gp = tp.grad(id).data() + (b * L + l) * C;
                    const T* xp = tp.val(x).data() + (b * L + l) * C;
                    T* gx = tp.grad(x).data() + (b * L + l) * C;
                    for (long c = 0; c < C; ++c) {
                        gx[c] += gp[c] * (T(1) + sc[c]);
                        gshift[c] += gp[c];
                        gsc[c] += gp[c] * xp[c];
                    }
                }
            }
        };
        return id;
    }

    // Adds a per-batch row vector e [B,C] to every token of x [B,L,C].
    int add_rowvec(int x, int e) {
        const auto& s = shape(x);
        if (s.size() != 3) throw ShapeError("add_rowvec: x must be [B,L,C]");
        const long B = s[0], L = s[1], C = s[2];
        if (shape(e) != std::vector<long>{B, C}) throw ShapeError("add_rowvec: e must be [B,C]");
        Vec out(val(x).size());
        for (long b = 0; b < B; ++b)
            for (long l = 0; l < L; ++l)
                for (long c = 0; c < C; ++c)
                    out[static_cast<size_t>((b * L + l) * C + c)] =
                        val(x)[static_cast<size_t>((b * L + l) * C + c)] +
                        val(e)[static_cast<size_t>(b * C + c)];
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, e, id, B, L, C](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            Vec& ge = tp.grad(e);
            for (long b = 0; b < B; ++b)
                for (long l = 0; l < L; ++l)
                    for (long c = 0; c < C; ++c) {
                        T gv = g[static_cast<size_t>((b * L + l) * C + c)];
                        gx[static_cast<size_t>((b * L + l) * C + c)] += gv;
                        ge[static_cast<size_t>(b * C + c)] += gv;
                    }
        };
        return id;
    }

    // Row gather from an embedding table [V,C].
    int embed(int table, std::vector<int> ids) {
        const auto& s = shape(table);
        if (s.size() != 2) throw ShapeError("embed: table must be [V,C]");
        const long V = s[0], C = s[1];
        const long B = static_cast<long>(ids.size());
        Vec out(static_cast<size_t>(B * C));
        for (long b = 0; b < B; ++b) {
            long row = ids[static_cast<size_t>(b)];
            if (row < 0 || row >= V) throw ShapeError("embed: id out of range");
            for (long c = 0; c < C; ++c)
                out[static_cast<size_t>(b * C + c)] = val(table)[static_cast<size_t>(row * C + c)];
        }
        int id = leaf({B, C}, std::move(out));
        nodes[static_cast<size_t>(id)].back = [table, id, C, ids = std::move(ids)](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gt = tp.grad(table);
            for (size_t b = 0; b < ids.size(); ++b)
                for (long c = 0; c < C; ++c)
                    gt[static_cast<size_t>(ids[b] * C + c)] +=
                        g[b * static_cast<size_t>(C) + static_cast<size_t>(c)];
        };
        return id;
    }

    int concat_cols(int a, int b) {
        const long ca = last_dim(a), cb = last_dim(b);
        const long r = rows(a);
        if (rows(b) != r) throw ShapeError("concat_cols: row mismatch");
        std::vector<long> oshape(shape(a));
        oshape.back() = ca + cb;
        Vec out(static_cast<size_t>(r * (ca + cb)));
        for (long i = 0; i < r; ++i) {
            std::copy_n(val(a).data() + i * ca, ca, out.data() + i * (ca + cb));
            std::copy_n(val(b).data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
        }
        int id = leaf(std::move(oshape), std::move(out));
        nodes[static_cast<size_t>(id)].back = [a, b, id, r, ca, cb](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& ga = tp.grad(a);
            Vec& gb = tp.grad(b);
            for (long i = 0; i < r; ++i) {
                for (long c = 0; c < ca; ++c) ga[static_cast<size_t>(i * ca + c)] +=
                    g[static_cast<size_t>(i * (ca + cb) + c)];
                for (long c = 0; c < cb; ++c) gb[static_cast<size_t>(i * cb + c)] +=
                    g[static_cast<size_t>(i * (ca + cb) + ca + c)];
            }
        };
        return id;
    }

    int slice_cols(int x, long c0, long c1) {
        const long c = last_dim(x);
        if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad range");
        const long r = rows(x);
        const long w = c1 - c0;
        std::vector<long> oshape(shape(x));
        oshape.back() = w;
        Vec out(static_cast<size_t>(r * w));
        for (long i = 0; i < r; ++i)
            std::copy_n(val(x).data() + i * c + c0, w, out.data() + i * w);
        int id = leaf(std::move(oshape), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id, r, c, c0, w](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            for (long i = 0; i < r; ++i)
                for (long j = 0; j < w; ++j)
                    gx[static_cast<size_t>(i * c + c0 + j)] += g[static_cast<size_t>(i * w + j)];
        };
        return id;
    }

    // Reinterprets the value under a new shape (data is copied).
    int view(int x, std::vector<long> newshape) {
        if (TensorT<T>::count(newshape) != size(x)) throw ShapeError("view: size mismatch");
        int id = leaf(std::move(newshape), Vec(val(x)));
        nodes[static_cast<size_t>(id)].back = [x, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
        return id;
    }

    // Depthwise 3x3x3 convolution (zero padded) on tokens [B,L,C] laid out
    // over a (Tg, Hg, Wg) grid in row-major order. Weights are [C,27].
    int conv_dw3(int x, long Tg, long Hg, long Wg, int w, int bias) {
        const auto& s = shape(x);
        if (s.size() != 3 || s[1] != Tg * Hg * Wg) throw ShapeError("conv_dw3: grid mismatch");
        const long B = s[0], C = s[2];
        if (shape(w) != std::vector<long>{C, 27}) throw ShapeError("conv_dw3: weight mismatch");
        if (size(bias) != C) throw ShapeError("conv_dw3: bias mismatch");
        const long L = Tg * Hg * Wg;
        Vec out(val(x).size());
        for (long b = 0; b < B; ++b)
            for (long t = 0; t < Tg; ++t)
                for (long y = 0; y < Hg; ++y)
                    for (long xx = 0; xx < Wg; ++xx) {
                        T* yp = out.data() + ((b * L) + (t * Hg + y) * Wg + xx) * C;
                        for (long c = 0; c < C; ++c) yp[c] = val(bias)[static_cast<size_t>(c)];
                        for (int dt = -1; dt <= 1; ++dt)
                            for (int dy = -1; dy <= 1; ++dy)
                                for (int dx = -1; dx <= 1; ++dx) {
                                    long tt = t + dt, ty = y + dy, tx = xx + dx;
                                    if (tt < 0 || tt >= Tg || ty < 0 || ty >= Hg || tx < 0 ||
                                        tx >= Wg)
                                        continue;
                                    long k = static_cast<long>((dt + 1) * 9 + (dy + 1) * 3 +
                                                               (dx + 1));
                                    const T* xp = val(x).data() +
                                                  ((b * L) + (tt * Hg + ty) * Wg + tx) * C;
                                    const T* wp = val(w).data();
                                    for (long c = 0; c < C; ++c) yp[c] += wp[c * 27 + k] * xp[c];
                                }
                    }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, w, bias, id, B, Tg, Hg, Wg](TapeT& tp) {
            const long C = tp.shape(x)[2];
            const long L = Tg * Hg * Wg;
            const Vec& g = tp.grad(id);
            for (long b = 0; b < B; ++b)
                for (long t = 0; t < Tg; ++t)
                    for (long y = 0; y < Hg; ++y)
                        for (long xx = 0; xx < Wg; ++xx) {
                            const T* gp = g.data() + ((b * L) + (t * Hg + y) * Wg + xx) * C;
                            T* gb = tp.grad(bias).data();
                            for (long c = 0; c < C; ++c) gb[c] += gp[c];
                            for (int dt = -1; dt <= 1; ++dt)
                                for (int dy = -1; dy <= 1; ++dy)
                                    for (int dx = -1; dx <= 1; ++dx) {
                                        long tt = t + dt, ty = y + dy, tx = xx + dx;
                                        if (tt < 0 || tt >= Tg || ty < 0 || ty >= Hg || tx < 0 ||
                                            tx >= Wg)
                                            continue;
                                        long k = static_cast<long>((dt + 1) * 9 + (dy + 1) * 3 +
                                                                   (dx + 1));
                                        long off = ((b * L) + (tt * Hg + ty) * Wg + tx) * C;
                                        const T* xp = tp.val(x).data() + off;
                                        T* gx = tp.grad(x).data() + off;
                                        const T* wp = tp.val(w).data();
                                        T* gw = tp.grad(w).data();
                                        for (long c = 0; c < C; ++c) {
                                            gx[c] += wp[c * 27 + k] * gp[c];
                                            gw[c * 27 + k] += xp[c] * gp[c];
                                        }
                                    }
                        }
        };
        return id;
    }

    // Spatial mean per frame: [B, Tg*Hg*Wg, C] -> [B, Tg, C].
    int frame_mean(int x, long Tg, long Hg, long Wg) {
        const auto& s = shape(x);
        if (s.size() != 3 || s[1] != Tg * Hg * Wg) throw ShapeError("frame_mean: grid mismatch");
        const long B = s[0], C = s[2];
        const long hw = Hg * Wg;
        Vec out(static_cast<size_t>(B * Tg * C), T(0));
        for (long b = 0; b < B; ++b)
            for (long t = 0; t < Tg; ++t) {
                T* op = out.data() + (b * Tg + t) * C;
                for (long p = 0; p < hw; ++p) {
                    const T* xp = val(x).data() + ((b * Tg + t) * hw + p) * C;
                    for (long c = 0; c < C; ++c) op[c] += xp[c];
                }
                for (long c = 0; c < C; ++c) op[c] /= static_cast<T>(hw);
            }
        int id = leaf({B, Tg, C}, std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, id, B, Tg, hw](TapeT& tp) {
            const long C = tp.shape(x)[2];
            const Vec& g = tp.grad(id);
            Vec& gx = tp.grad(x);
            for (long b = 0; b < B; ++b)
                for (long t = 0; t < Tg; ++t) {
                    const T* gp = g.data() + (b * Tg + t) * C;
                    for (long p = 0; p < hw; ++p) {
                        T* gxp = gx.data() + ((b * Tg + t) * hw + p) * C;
                        for (long c = 0; c < C; ++c) gxp[c] += gp[c] / static_cast<T>(hw);
                    }
                }
        };
        return id;
    }

    // Multiplies every token of frame t by the scalar gate g[b,t].
    int frame_scale(int x, int gate, long Tg, long Hg, long Wg) {
        const auto& s = shape(x);
        if (s.size() != 3 || s[1] != Tg * Hg * Wg) throw ShapeError("frame_scale: grid mismatch");
        const long B = s[0], C = s[2];
        if (size(gate) != B * Tg) throw ShapeError("frame_scale: gate must have B*T entries");
        const long hw = Hg * Wg;
        Vec out(val(x).size());
        for (long b = 0; b < B; ++b)
            for (long t = 0; t < Tg; ++t) {
                T gv = val(gate)[static_cast<size_t>(b * Tg + t)];
                const T* xp = val(x).data() + (b * Tg + t) * hw * C;
                T* yp = out.data() + (b * Tg + t) * hw * C;
                for (long i = 0; i < hw * C; ++i) yp[i] = xp[i] * gv;
            }
        int id = leaf(shape(x), std::move(out));
        nodes[static_cast<size_t>(id)].back = [x, gate, id, B, Tg, hw](TapeT& tp) {
            const long C = tp.shape(x)[2];
            const Vec& g = tp.grad(id);
            for (long b = 0; b < B; ++b)
                for (long t = 0; t < Tg; ++t) {
                    T gv = tp.val(gate)[static_cast<size_t>(b * Tg + t)];
                    const T* gp = g.data() + (b * Tg + t) * hw * C;
                    const T* xp = tp.val(x).data() + (b * Tg + t) * hw * C;
                    T* gx = tp.grad(x).data() + (b * Tg + t) * hw * C;
                    double acc = 0;
                    for (long i = 0; i < hw * C; ++i) {
                        gx[i] += gp[i] * gv;
                        acc += static_cast<double>(gp[i]) * static_cast<double>(xp[i]);
                    }
                    tp.grad(gate)[static_cast<size_t>(b * Tg + t)] += static_cast<T>(acc);
                }
        };
        return id;
    }

    // Mean squared error against a target node; returns a scalar node.
    int mse(int pred, int target) {
        if (shape(pred) != shape(target)) throw ShapeError("mse: shape mismatch");
        const long n = size(pred);
        double acc = 0;
        for (long i = 0; i < n; ++i) {
            double d = static_cast<double>(val(pred)[static_cast<size_t>(i)]) -
                       static_cast<double>(val(target)[static_cast<size_t>(i)]);
            acc += d * d;
        }
        int id = leaf({1}, Vec{static_cast<T>(acc / n)});
        nodes[static_cast<size_t>(id)].back = [pred, target, id, n](TapeT& tp) {
            T g = tp.grad(id)[0];
            Vec& gp = tp.grad(pred);
            Vec& gt = tp.grad(target);
            const Vec& p = tp.val(pred);
            const Vec& t = tp.val(target);
            const T k = g * T(2) / static_cast<T>(n);
            for (long i = 0; i < n; ++i) {
                T d = p[static_cast<size_t>(i)] - t[static_cast<size_t>(i)];
                gp[static_cast<size_t>(i)] += k * d;
                gt[static_cast<size_t>(i)] -= k * d;
            }
        };
        return id;
    }

    // y = a + lam * b, elementwise (used to combine scalar losses).
    int add_scaled(int a, int b, T lam) {
        if (shape(a) != shape(b)) throw ShapeError("add_scaled: shape mismatch");
        Vec out(val(a).size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] + lam * val(b)[i];
        int id = leaf(shape(a), std::move(out));
        nodes[static_cast<size_t>(id)].back = [a, b, lam, id](TapeT& tp) {
            const Vec& g = tp.grad(id);
            Vec& ga = tp.grad(a);
            Vec& gb = tp.grad(b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i] * lam;
            }
        };
        return id;
    }

    void backward(int loss) {
        if (size(loss) != 1) throw ShapeError("backward: loss must be scalar");
        for (size_t i = 0; i <= static_cast<size_t>(loss); ++i)
            nodes[i].grad.assign(nodes[i].val.size(), T(0));
        nodes[static_cast<size_t>(loss)].grad[0] = T(1);
        for (int i = loss; i >= 0; --i)
            if (nodes[static_cast<size_t>(i)].back) nodes[static_cast<size_t>(i)].back(*this);
    }

  private:
    static void softmax_rows(Mat& m) {
        for (long i = 0; i < m.rows(); ++i) {
            T mx = m.row(i).maxCoeff();
            m.row(i) = (m.row(i).array() - mx).exp();
            m.row(i) /= m.row(i).sum();
        }
    }
};

using Tape = TapeT<float>;
using ParamStore = ParamStoreT<float>;

}  // namespace dcam::nn
