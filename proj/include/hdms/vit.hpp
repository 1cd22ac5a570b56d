#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hdms/core.hpp"
#include "hdms/mat.hpp"
#include "hdms/rng.hpp"

namespace hdms {

inline constexpr double kLayerNormEps = 1e-6;

template <class T>
struct VitLayerParams {
    Mat<T> ln1_scale, ln1_offset; // 1 x D
    Mat<T> wq, wk, wv, wo;        // D x D
    Mat<T> bq, bk, bv, bo;        // 1 x D
    Mat<T> ln2_scale, ln2_offset; // 1 x D
    Mat<T> w_fc1, b_fc1;          // D x 4D, 1 x 4D
    Mat<T> w_fc2, b_fc2;          // 4D x D, 1 x D
};

// All ViT tensors in one named table. Pre-norm encoder, GELU MLP (ratio 4),
// learned positional embeddings, no class token; the head maps each token to
// patch^2 * 2 per-pixel logits.
template <class T>
struct VitParamsT {
    PipelineConfig config;
    Mat<T> patch_proj; // (patch^2*3) x D
    Mat<T> patch_bias; // 1 x D
    Mat<T> pos_embed;  // n_tokens x D
    std::vector<VitLayerParams<T>> layers;
    Mat<T> final_norm_scale, final_norm_offset; // 1 x D
    Mat<T> head;      // D x (patch^2*2)
    Mat<T> head_bias; // 1 x (patch^2*2)

    static VitParamsT shaped(const PipelineConfig& cfg) {
        cfg.validate();
        const int d = cfg.embed_dim;
        const int d_in = cfg.patch_size * cfg.patch_size * 3;
        const int d_out = cfg.patch_size * cfg.patch_size * 2;
        VitParamsT p;
        p.config = cfg;
        p.patch_proj = Mat<T>(d_in, d);
        p.patch_bias = Mat<T>(1, d);
        p.pos_embed = Mat<T>(cfg.n_tokens(), d);
        p.layers.resize(cfg.depth);
        for (auto& l : p.layers) {
            l.ln1_scale = Mat<T>(1, d);
            l.ln1_offset = Mat<T>(1, d);
            l.wq = Mat<T>(d, d);
            l.wk = Mat<T>(d, d);
            l.wv = Mat<T>(d, d);
            l.wo = Mat<T>(d, d);
            l.bq = Mat<T>(1, d);
            l.bk = Mat<T>(1, d);
            l.bv = Mat<T>(1, d);
            l.bo = Mat<T>(1, d);
            l.ln2_scale = Mat<T>(1, d);
            l.ln2_offset = Mat<T>(1, d);
            l.w_fc1 = Mat<T>(d, 4 * d);
            l.b_fc1 = Mat<T>(1, 4 * d);
            l.w_fc2 = Mat<T>(4 * d, d);
            l.b_fc2 = Mat<T>(1, d);
        }
        p.final_norm_scale = Mat<T>(1, d);
        p.final_norm_offset = Mat<T>(1, d);
        p.head = Mat<T>(d, d_out);
        p.head_bias = Mat<T>(1, d_out);
        return p;
    }

    template <class Self, class F>
    static void visit(Self& self, F& f) {
        f("patch_proj", self.patch_proj);
        f("patch_bias", self.patch_bias);
        f("pos_embed", self.pos_embed);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string base = "layers." + std::to_string(i) + ".";
            f(base + "ln1_scale", l.ln1_scale);
            f(base + "ln1_offset", l.ln1_offset);
            f(base + "wq", l.wq);
            f(base + "q_bias", l.bq);
            f(base + "wk", l.wk);
            f(base + "k_bias", l.bk);
            f(base + "wv", l.wv);
            f(base + "v_bias", l.bv);
            f(base + "wo", l.wo);
            f(base + "o_bias", l.bo);
            f(base + "ln2_scale", l.ln2_scale);
            f(base + "ln2_offset", l.ln2_offset);
            f(base + "w_fc1", l.w_fc1);
            f(base + "fc1_bias", l.b_fc1);
            f(base + "w_fc2", l.w_fc2);
            f(base + "fc2_bias", l.b_fc2);
        }
        f("final_norm_scale", self.final_norm_scale);
        f("final_norm_offset", self.final_norm_offset);
        f("head", self.head);
        f("head_bias", self.head_bias);
    }

    template <class F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }

    std::vector<std::pair<std::string, Mat<T>*>> tensor_list() {
        std::vector<std::pair<std::string, Mat<T>*>> out;
        for_each_tensor([&](const std::string& name, Mat<T>& m) { out.emplace_back(name, &m); });
        return out;
    }
    std::vector<std::pair<std::string, const Mat<T>*>> tensor_list() const {
        std::vector<std::pair<std::string, const Mat<T>*>> out;
        for_each_tensor(
            [&](const std::string& name, const Mat<T>& m) { out.emplace_back(name, &m); });
        return out;
    }
};

using VitParams = VitParamsT<float>;

template <class To, class From>
VitParamsT<To> cast_params(const VitParamsT<From>& src) {
    VitParamsT<To> dst = VitParamsT<To>::shaped(src.config);
    auto d = dst.tensor_list();
    auto s = src.tensor_list();
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < s[i].second->a.size(); ++j)
            d[i].second->a[j] = static_cast<To>(s[i].second->a[j]);
    }
    return dst;
}

// Per-pixel class logits for one tile. Class 1 = muscularis.
template <class T>
struct LogitMapT {
    int width = 0;
    int height = 0;
    std::vector<T> logits; // row-major pixels, 2 values each

    LogitMapT() = default;
    LogitMapT(int w, int h) : width(w), height(h), logits(static_cast<std::size_t>(w) * h * 2) {}
};

using LogitMap = LogitMapT<float>;

// ---------------------------------------------------------------------------
// internals

template <class T>
struct LnCache {
    Mat<T> xhat;
    std::vector<T> inv_std;
};

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& scale, const Mat<T>& offset,
                  LnCache<T>* cache) {
    const int d = x.cols;
    Mat<T> out(x.rows, d);
    if (cache) {
        cache->xhat = Mat<T>(x.rows, d);
        cache->inv_std.assign(x.rows, T(0));
    }
    for (int i = 0; i < x.rows; ++i) {
        const T* xi = x.row(i);
        T mean = T(0);
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= T(d);
        T var = T(0);
        for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
        T* oi = out.row(i);
        for (int j = 0; j < d; ++j) {
            const T xhat = (xi[j] - mean) * inv;
            if (cache) cache->xhat(i, j) = xhat;
            oi[j] = scale.a[j] * xhat + offset.a[j];
        }
        if (cache) cache->inv_std[i] = inv;
    }
    return out;
}

template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LnCache<T>& cache, const Mat<T>& scale,
                           Mat<T>& dscale, Mat<T>& doffset) {
    const int d = dy.cols;
    Mat<T> dx(dy.rows, d);
    for (int i = 0; i < dy.rows; ++i) {
        const T* dyi = dy.row(i);
        const T* xh = cache.xhat.row(i);
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (int j = 0; j < d; ++j) {
            const T dxhat = dyi[j] * scale.a[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xh[j];
            dscale.a[j] += dyi[j] * xh[j];
            doffset.a[j] += dyi[j];
        }
        const T inv = cache.inv_std[i];
        const T mean_dxhat = sum_dxhat / T(d);
        const T mean_dxhat_xhat = sum_dxhat_xhat / T(d);
        T* dxi = dx.row(i);
        for (int j = 0; j < d; ++j) {
            const T dxhat = dyi[j] * scale.a[j];
            dxi[j] = inv * (dxhat - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    return dx;
}

template <class T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x / T(M_SQRT2)));
}

template <class T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / T(M_SQRT2)));
    const T pdf = std::exp(T(-0.5) * x * x) / T(std::sqrt(2.0 * M_PI));
    return cdf + x * pdf;
}

template <class T>
Mat<T> head_slice(const Mat<T>& m, int h, int dh) {
    Mat<T> out(m.rows, dh);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < dh; ++j) out(i, j) = m(i, h * dh + j);
    return out;
}

template <class T>
void head_slice_store(Mat<T>& full, const Mat<T>& part, int h, int dh) {
    for (int i = 0; i < part.rows; ++i)
        for (int j = 0; j < dh; ++j) full(i, h * dh + j) = part(i, j);
}

// In-place numerically stable row softmax.
template <class T>
void softmax_rows(Mat<T>& m) {
    for (int i = 0; i < m.rows; ++i) {
        T* r = m.row(i);
        T mx = r[0];
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
        T sum = T(0);
        for (int j = 0; j < m.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (int j = 0; j < m.cols; ++j) r[j] /= sum;
    }
}

template <class T>
struct VitLayerCache {
    Mat<T> x_in;
    LnCache<T> ln1;
    Mat<T> ln1_out;
    Mat<T> q, k, v;
    std::vector<Mat<T>> probs; // per head, n x n
    Mat<T> attn_concat;        // n x D, before wo
    Mat<T> x_mid;
    LnCache<T> ln2;
    Mat<T> ln2_out;
    Mat<T> fc1_pre; // n x 4D
    Mat<T> fc1_act;
};

template <class T>
struct VitCache {
    Mat<T> patches; // n x (patch^2*3)
    std::vector<VitLayerCache<T>> layers;
    Mat<T> x_final; // before final norm
    LnCache<T> lnf;
    Mat<T> tokens_final; // after final norm
    Mat<T> token_logits; // n x (patch^2*2)
};

// ---------------------------------------------------------------------------

// Row-major patch order; within a patch pixel-major then channel; /255.
template <class T>
Mat<T> patchify(const RasterImage& tile, int patch_size) {
    if (tile.channels != 3) throw ShapeMismatch("patchify expects a 3-channel tile");
    if (tile.width != tile.height) throw ShapeMismatch("patchify expects a square tile");
    if (patch_size < 1 || tile.width % patch_size != 0)
        throw IndivisibleTile("tile size " + std::to_string(tile.width) +
                              " not divisible by patch size " + std::to_string(patch_size));
    const int side = tile.width / patch_size;
    Mat<T> out(side * side, patch_size * patch_size * 3);
    for (int pr = 0; pr < side; ++pr) {
        for (int pc = 0; pc < side; ++pc) {
            T* row = out.row(pr * side + pc);
            int idx = 0;
            for (int dr = 0; dr < patch_size; ++dr)
                for (int dc = 0; dc < patch_size; ++dc)
                    for (int ch = 0; ch < 3; ++ch)
                        row[idx++] =
                            T(tile.at(pr * patch_size + dr, pc * patch_size + dc, ch)) / T(255);
        }
    }
    return out;
}

template <class T>
Mat<T> vit_forward_tokens(const VitParamsT<T>& params, const Mat<T>& patches,
                          VitCache<T>* cache) {
    const PipelineConfig& cfg = params.config;
    const int d = cfg.embed_dim;
    const int heads = cfg.heads;
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));

    if (patches.rows != cfg.n_tokens() || patches.cols != params.patch_proj.rows)
        throw ShapeMismatch("patch matrix shape inconsistent with config");

    Mat<T> x;
    matmul(patches, params.patch_proj, x);
    add_row_bias(x, params.patch_bias);
    add_inplace(x, params.pos_embed);

    if (cache) {
        cache->patches = patches;
        cache->layers.resize(params.layers.size());
    }

    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& l = params.layers[li];
        VitLayerCache<T>* lc = cache ? &cache->layers[li] : nullptr;
        if (lc) lc->x_in = x;

        Mat<T> h = layer_norm(x, l.ln1_scale, l.ln1_offset, lc ? &lc->ln1 : nullptr);
        if (lc) lc->ln1_out = h;

        Mat<T> q, k, v;
        matmul(h, l.wq, q);
        add_row_bias(q, l.bq);
        matmul(h, l.wk, k);
        add_row_bias(k, l.bk);
        matmul(h, l.wv, v);
        add_row_bias(v, l.bv);
        if (lc) {
            lc->q = q;
            lc->k = k;
            lc->v = v;
            lc->probs.resize(heads);
        }

        Mat<T> concat(x.rows, d);
        for (int hd = 0; hd < heads; ++hd) {
            const Mat<T> qi = head_slice(q, hd, dh);
            const Mat<T> ki = head_slice(k, hd, dh);
            const Mat<T> vi = head_slice(v, hd, dh);
            Mat<T> s;
            matmul_tB(qi, ki, s);
            for (auto& e : s.a) e *= scale;
            softmax_rows(s);
            if (lc) lc->probs[hd] = s;
            Mat<T> oi;
            matmul(s, vi, oi);
            head_slice_store(concat, oi, hd, dh);
        }
        if (lc) lc->attn_concat = concat;

        Mat<T> attn_out;
        matmul(concat, l.wo, attn_out);
        add_row_bias(attn_out, l.bo);
        add_inplace(x, attn_out);
        if (lc) lc->x_mid = x;

        Mat<T> h2 = layer_norm(x, l.ln2_scale, l.ln2_offset, lc ? &lc->ln2 : nullptr);
        if (lc) lc->ln2_out = h2;

        Mat<T> u;
        matmul(h2, l.w_fc1, u);
        add_row_bias(u, l.b_fc1);
        if (lc) lc->fc1_pre = u;
        Mat<T> g(u.rows, u.cols);
        for (std::size_t i = 0; i < u.a.size(); ++i) g.a[i] = gelu(u.a[i]);
        if (lc) lc->fc1_act = g;
        Mat<T> m;
        matmul(g, l.w_fc2, m);
        add_row_bias(m, l.b_fc2);
        add_inplace(x, m);
    }

    if (cache) cache->x_final = x;
    Mat<T> tokens = layer_norm(x, params.final_norm_scale, params.final_norm_offset,
                               cache ? &cache->lnf : nullptr);
    if (cache) cache->tokens_final = tokens;

    Mat<T> logits;
    matmul(tokens, params.head, logits);
    add_row_bias(logits, params.head_bias);
    if (cache) cache->token_logits = logits;
    return logits;
}

// Reshape token-major head output to a per-pixel logit map.
template <class T>
LogitMapT<T> token_logits_to_map(const Mat<T>& logits, int tile_size, int patch_size) {
    const int side = tile_size / patch_size;
    LogitMapT<T> map(tile_size, tile_size);
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc) {
            const T* row = logits.row(pr * side + pc);
            for (int dr = 0; dr < patch_size; ++dr)
                for (int dc = 0; dc < patch_size; ++dc) {
                    const std::size_t px =
                        static_cast<std::size_t>(pr * patch_size + dr) * tile_size +
                        (pc * patch_size + dc);
                    const int local = (dr * patch_size + dc) * 2;
                    map.logits[px * 2] = row[local];
                    map.logits[px * 2 + 1] = row[local + 1];
                }
        }
    return map;
}

template <class T>
LogitMapT<T> vit_forward(const VitParamsT<T>& params, const RasterImage& tile) {
    if (tile.width != params.config.tile_size || tile.height != params.config.tile_size)
        throw ShapeMismatch("tile dimensions != configured tile_size");
    const Mat<T> patches = patchify<T>(tile, params.config.patch_size);
    const Mat<T> logits = vit_forward_tokens(params, patches, static_cast<VitCache<T>*>(nullptr));
    return token_logits_to_map(logits, params.config.tile_size, params.config.patch_size);
}

// Mean per-pixel 2-class cross-entropy and its gradients, accumulated into
// `grads` (shaped like params). Returns the loss.
template <class T>
T vit_backward(const VitParamsT<T>& params, const RasterImage& tile, const BinaryMask& label,
               VitParamsT<T>& grads) {
    const PipelineConfig& cfg = params.config;
    if (tile.width != cfg.tile_size || tile.height != cfg.tile_size)
        throw ShapeMismatch("tile dimensions != configured tile_size");
    if (label.width != tile.width || label.height != tile.height)
        throw ShapeMismatch("label dimensions != tile dimensions");

    const int p = cfg.patch_size;
    const int side = cfg.tile_size / p;
    const int d = cfg.embed_dim;
    const int heads = cfg.heads;
    const int dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));

    VitCache<T> cache;
    const Mat<T> patches = patchify<T>(tile, p);
    const Mat<T> logits = vit_forward_tokens(params, patches, &cache);

    // Loss and head-output gradient, token-major.
    const T inv_npx = T(1) / (T(cfg.tile_size) * T(cfg.tile_size));
    T loss = T(0);
    Mat<T> dlogits(logits.rows, logits.cols);
    for (int pr = 0; pr < side; ++pr)
        for (int pc = 0; pc < side; ++pc) {
            const int tok = pr * side + pc;
            const T* lrow = logits.row(tok);
            T* drow = dlogits.row(tok);
            for (int dr = 0; dr < p; ++dr)
                for (int dc = 0; dc < p; ++dc) {
                    const int local = (dr * p + dc) * 2;
                    const T l0 = lrow[local], l1 = lrow[local + 1];
                    const int y = label.get(pr * p + dr, pc * p + dc) ? 1 : 0;
                    const T mx = std::max(l0, l1);
                    const T lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
                    loss += (lse - (y ? l1 : l0)) * inv_npx;
                    const T p1 = std::exp(l1 - lse);
                    const T p0 = std::exp(l0 - lse);
                    drow[local] = (p0 - (y ? T(0) : T(1))) * inv_npx;
                    drow[local + 1] = (p1 - (y ? T(1) : T(0))) * inv_npx;
                }
        }

    // Head.
    Mat<T> dx;
    matmul_tB(dlogits, params.head, dx);
    matmul_tA_add(cache.tokens_final, dlogits, grads.head);
    add_col_sums(dlogits, grads.head_bias);

    // Final norm.
    dx = layer_norm_backward(dx, cache.lnf, params.final_norm_scale, grads.final_norm_scale,
                             grads.final_norm_offset);

    for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
        const auto& l = params.layers[li];
        auto& gl = grads.layers[li];
        const auto& lc = cache.layers[li];

        // MLP branch: x_out = x_mid + W2(gelu(W1 ln2(x_mid)+b1))+b2
        Mat<T> dg;
        matmul_tB(dx, l.w_fc2, dg);
        matmul_tA_add(lc.fc1_act, dx, gl.w_fc2);
        add_col_sums(dx, gl.b_fc2);
        for (std::size_t i = 0; i < dg.a.size(); ++i) dg.a[i] *= gelu_grad(lc.fc1_pre.a[i]);
        Mat<T> dln2;
        matmul_tB(dg, l.w_fc1, dln2);
        matmul_tA_add(lc.ln2_out, dg, gl.w_fc1);
        add_col_sums(dg, gl.b_fc1);
        const Mat<T> dx_mid_ln =
            layer_norm_backward(dln2, lc.ln2, l.ln2_scale, gl.ln2_scale, gl.ln2_offset);
        add_inplace(dx, dx_mid_ln); // dx now holds d(x_mid)

        // Attention branch: x_mid = x_in + Wo(concat heads) + bo
        Mat<T> dconcat;
        matmul_tB(dx, l.wo, dconcat);
        matmul_tA_add(lc.attn_concat, dx, gl.wo);
        add_col_sums(dx, gl.bo);

        Mat<T> dq(dx.rows, d), dk(dx.rows, d), dv(dx.rows, d);
        for (int hd = 0; hd < heads; ++hd) {
            const Mat<T> qi = head_slice(lc.q, hd, dh);
            const Mat<T> ki = head_slice(lc.k, hd, dh);
            const Mat<T> vi = head_slice(lc.v, hd, dh);
            const Mat<T> doi = head_slice(dconcat, hd, dh);
            const Mat<T>& probs = lc.probs[hd];

            Mat<T> dprobs;
            matmul_tB(doi, vi, dprobs);
            Mat<T> dvi(vi.rows, vi.cols);
            matmul_tA_add(probs, doi, dvi);

            // softmax backward per row
            Mat<T> ds(dprobs.rows, dprobs.cols);
            for (int i = 0; i < dprobs.rows; ++i) {
                const T* dp = dprobs.row(i);
                const T* pr_ = probs.row(i);
                T dot = T(0);
                for (int j = 0; j < dprobs.cols; ++j) dot += dp[j] * pr_[j];
                T* dsr = ds.row(i);
                for (int j = 0; j < dprobs.cols; ++j) dsr[j] = pr_[j] * (dp[j] - dot);
            }
            for (auto& e : ds.a) e *= scale;

            Mat<T> dqi, dki;
            matmul(ds, ki, dqi);
            Mat<T> dki_tmp(ki.rows, ki.cols);
            matmul_tA_add(ds, qi, dki_tmp);
            dki = std::move(dki_tmp);

            head_slice_store(dq, dqi, hd, dh);
            head_slice_store(dk, dki, hd, dh);
            head_slice_store(dv, dvi, hd, dh);
        }

        Mat<T> dln1, tmp;
        matmul_tB(dq, l.wq, dln1);
        matmul_tB(dk, l.wk, tmp);
        add_inplace(dln1, tmp);
        matmul_tB(dv, l.wv, tmp);
        add_inplace(dln1, tmp);
        matmul_tA_add(lc.ln1_out, dq, gl.wq);
        matmul_tA_add(lc.ln1_out, dk, gl.wk);
        matmul_tA_add(lc.ln1_out, dv, gl.wv);
        add_col_sums(dq, gl.bq);
        add_col_sums(dk, gl.bk);
        add_col_sums(dv, gl.bv);

        const Mat<T> dx_in_ln =
            layer_norm_backward(dln1, lc.ln1, l.ln1_scale, gl.ln1_scale, gl.ln1_offset);
        add_inplace(dx, dx_in_ln); // dx now holds d(x_in)
    }

    // Patch embedding.
    add_inplace(grads.pos_embed, dx);
    add_col_sums(dx, grads.patch_bias);
    matmul_tA_add(cache.patches, dx, grads.patch_proj);

    return loss;
}

// Softmax probability of the muscularis class per pixel.
template <class T>
std::vector<float> prob_map_from_logits(const LogitMapT<T>& map) {
    std::vector<float> out(static_cast<std::size_t>(map.width) * map.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double diff = static_cast<double>(map.logits[i * 2]) - map.logits[i * 2 + 1];
        out[i] = static_cast<float>(1.0 / (1.0 + std::exp(diff)));
    }
    return out;
}

// Pixel set iff softmax probability of muscularis >= threshold.
template <class T>
BinaryMask predict_mask(const LogitMapT<T>& map, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw InvalidConfig("confidence threshold must be in [0,1]");
    BinaryMask out(map.width, map.height);
    for (std::size_t i = 0; i < out.bits.size(); ++i) {
        const double diff = static_cast<double>(map.logits[i * 2]) - map.logits[i * 2 + 1];
        const double p1 = 1.0 / (1.0 + std::exp(diff));
        out.bits[i] = p1 >= threshold ? 1 : 0;
    }
    return out;
}

// Truncated-normal (std 0.02) projections and embeddings, zero biases and
// offsets, unit layernorm scales. Deterministic per seed.
inline VitParams init_params(const PipelineConfig& cfg, std::uint64_t seed) {
    VitParams p = VitParams::shaped(cfg);
    Rng rng(seed);
    p.for_each_tensor([&](const std::string& name, Mat<float>& m) {
        const bool is_scale = name.size() >= 5 && name.rfind("scale") == name.size() - 5;
        const bool is_zero = name.find("bias") != std::string::npos ||
                             name.find("offset") != std::string::npos;
        if (is_scale) {
            for (auto& v : m.a) v = 1.0f;
        } else if (is_zero) {
            // already zero
        } else {
            for (auto& v : m.a) v = static_cast<float>(rng.truncated_normal(0.02));
        }
    });
    return p;
}

} // namespace hdms
