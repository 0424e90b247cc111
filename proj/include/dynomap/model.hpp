#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dynomap/classifier.hpp"
#include "dynomap/common.hpp"
#include "dynomap/gating.hpp"
#include "dynomap/layout.hpp"
#include "dynomap/params.hpp"
#include "dynomap/renderer.hpp"
#include "dynomap/rng.hpp"

namespace dynomap {

struct ModelConfig {
    int g = 0;
    int p = 64;
    int classes = 2;
    double padding = 1.0;
    double label_smoothing = 0.1;
    BackboneConfig backbone{};
    int head_hidden = 64;
    double dropout = 0.5;
    bool diagonal_gate = false;
    double repel_eps = kDefaultRepelEps;
    int repel_pair_budget = 2048;
    double render_cutoff_sigmas = 0.0; // <= 0: no truncation
};

// Per-sample activations and gradient scratch. One workspace serves one
// sample at a time; batches reuse it sequentially.
template <class R>
struct SampleWorkspace {
    GateWorkspace<R> gate;
    RenderWorkspace<R> render;
    std::vector<R> image_std;
    ImageStats image_stats;
    std::vector<std::vector<R>> act;    // per block, post-relu, h*w*c
    std::vector<std::vector<R>> pooled; // per block (empty when no pool)
    std::vector<std::vector<int>> argmax;
    std::vector<R> embedding;
    std::vector<R> concat, mask; // mask holds inverted-dropout scales
    std::vector<R> hidden;       // post-relu
    std::vector<R> logits;
    bool dropout_active = false;

    // backward scratch
    std::vector<R> d_gated, d_concat, d_hidden, d_embedding;
    std::vector<R> d_image_std, d_image_raw;
    std::vector<std::vector<R>> d_act, d_pooled;
    std::vector<std::vector<R>> conv_w_t; // per block, [ky][kx][co][ci]
    std::vector<R> gate_dz;
};

// The assembled pipeline: gate -> render -> standardize -> conv backbone ->
// head over [embedding ; gated]. Owns the ParamSet and the shape plan.
template <class R>
class Model {
public:
    Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
        if (cfg.g < 1) throw InputError("model: G must be positive");
        if (cfg.backbone.blocks.empty()) throw InputError("model: backbone needs >= 1 block");
        if (cfg.classes < 2) throw InputError("model: need >= 2 classes");

        const int g = cfg.g;
        if (cfg.diagonal_gate)
            params_.add("gate_w", {g});
        else
            params_.add("gate_w", {g, g});
        params_.add("gate_b", {g});
        auto& coords = params_.add("coords", {g, 2});
        coords.value = init_coords<R>(g, seed);

        plan_shapes();
        int c_in = 1;
        for (size_t l = 0; l < cfg.backbone.blocks.size(); ++l) {
            const int c_out = cfg.backbone.blocks[l].filters;
            auto& w = params_.add("conv" + std::to_string(l) + "_w", {3, 3, c_in, c_out});
            he_uniform_init(w.value, 9 * c_in, substream(seed, stream_tag::init, 100 + l));
            params_.add("conv" + std::to_string(l) + "_b", {c_out});
            c_in = c_out;
        }
        const int e = cfg.backbone.embedding_dim();
        auto& w1 = params_.add("head_w1", {cfg.head_hidden, e + g});
        he_uniform_init(w1.value, e + g, substream(seed, stream_tag::init, 200));
        params_.add("head_b1", {cfg.head_hidden});
        params_.add("head_w2", {cfg.classes, cfg.head_hidden}); // zeros: uniform initial logits
        params_.add("head_b2", {cfg.classes});
    }

    const ModelConfig& config() const { return cfg_; }
    ParamSet<R>& params() { return params_; }
    const ParamSet<R>& params() const { return params_; }

    R* coords() { return params_.find("coords")->value.data(); }
    const R* coords() const { return params_.find("coords")->value.data(); }

    GridSpec current_grid() const {
        return make_grid(coords(), cfg_.g, cfg_.padding, cfg_.p);
    }

    void prepare(SampleWorkspace<R>& ws) const {
        const int g = cfg_.g, p = cfg_.p;
        const int e = cfg_.backbone.embedding_dim();
        ws.image_std.resize((size_t)p * p);
        ws.embedding.resize(e);
        ws.concat.resize(e + g);
        ws.mask.resize(e + g);
        ws.hidden.resize(cfg_.head_hidden);
        ws.logits.resize(cfg_.classes);
        const size_t blocks = cfg_.backbone.blocks.size();
        ws.act.resize(blocks);
        ws.pooled.resize(blocks);
        ws.argmax.resize(blocks);
        ws.d_act.resize(blocks);
        ws.d_pooled.resize(blocks);
        ws.conv_w_t.resize(blocks);
        int block_c_in = 1;
        for (size_t l = 0; l < blocks; ++l) {
            ws.act[l].resize((size_t)in_h_[l] * in_w_[l] * cfg_.backbone.blocks[l].filters);
            ws.d_act[l].resize(ws.act[l].size());
            ws.conv_w_t[l].resize(conv_weight_count(block_c_in, cfg_.backbone.blocks[l].filters));
            block_c_in = cfg_.backbone.blocks[l].filters;
            if (cfg_.backbone.blocks[l].pool) {
                const size_t n =
                    (size_t)(in_h_[l] / 2) * (in_w_[l] / 2) * cfg_.backbone.blocks[l].filters;
                ws.pooled[l].resize(n);
                ws.argmax[l].resize(n);
                ws.d_pooled[l].resize(n);
            }
        }
        ws.d_gated.resize(g);
        ws.d_concat.resize(e + g);
        ws.d_hidden.resize(cfg_.head_hidden);
        ws.d_embedding.resize(e);
        ws.d_image_std.resize((size_t)p * p);
        ws.d_image_raw.resize((size_t)p * p);
        ws.gate_dz.resize(g);
    }

    // Forward one sample. `dropout_rng` supplies the per-sample mask stream
    // and is only consulted when training is true.
    const R* forward_sample(const R* x, const GridSpec& grid, bool training, Rng* dropout_rng,
                            SampleWorkspace<R>& ws) const {
        const int g = cfg_.g, p = cfg_.p;
        const R* gate_w = params_.find("gate_w")->value.data();
        const R* gate_b = params_.find("gate_b")->value.data();

        gate_forward(x, gate_w, gate_b, g, cfg_.diagonal_gate, ws.gate);
        render(ws.gate.gated.data(), coords(), g, grid, ws.render, cfg_.render_cutoff_sigmas);
        ws.image_std.assign(ws.render.image.begin(), ws.render.image.end());
        ws.image_stats = standardize_image(ws.image_std.data(), p);

        const R* in = ws.image_std.data();
        int h = p, w = p, c_in = 1;
        for (size_t l = 0; l < cfg_.backbone.blocks.size(); ++l) {
            const auto& blk = cfg_.backbone.blocks[l];
            conv3x3_relu_forward(in, h, w, c_in, conv_w(l), conv_b(l), blk.filters,
                                 ws.act[l].data());
            if (blk.pool) {
                maxpool2x2_forward(ws.act[l].data(), h, w, blk.filters, ws.pooled[l].data(),
                                   ws.argmax[l].data());
                h /= 2;
                w /= 2;
                in = ws.pooled[l].data();
            } else {
                in = ws.act[l].data();
            }
            c_in = blk.filters;
        }
        // global mean pool
        const int e = cfg_.backbone.embedding_dim();
        const int npix = h * w;
        for (int ch = 0; ch < e; ++ch) {
            R acc = R(0);
            for (int k = 0; k < npix; ++k) acc += in[(size_t)k * e + ch];
            ws.embedding[ch] = acc / (R)npix;
        }

        for (int ch = 0; ch < e; ++ch) ws.concat[ch] = ws.embedding[ch];
        for (int i = 0; i < g; ++i) ws.concat[e + i] = ws.gate.gated[i];

        ws.dropout_active = training && cfg_.dropout > 0.0;
        if (ws.dropout_active) {
            const R scale = (R)(1.0 / (1.0 - cfg_.dropout));
            for (size_t k = 0; k < ws.mask.size(); ++k)
                ws.mask[k] = dropout_rng->uniform() < cfg_.dropout ? R(0) : scale;
            for (size_t k = 0; k < ws.concat.size(); ++k) ws.concat[k] *= ws.mask[k];
        }

        const R* w1 = params_.find("head_w1")->value.data();
        const R* b1 = params_.find("head_b1")->value.data();
        const int width = e + g;
#pragma omp parallel for schedule(static)
        for (int kh = 0; kh < cfg_.head_hidden; ++kh) {
            const R* row = w1 + (size_t)kh * width;
            R acc = b1[kh];
            for (int j = 0; j < width; ++j) acc += row[j] * ws.concat[j];
            ws.hidden[kh] = acc > R(0) ? acc : R(0);
        }
        const R* w2 = params_.find("head_w2")->value.data();
        const R* b2 = params_.find("head_b2")->value.data();
        for (int c = 0; c < cfg_.classes; ++c) {
            const R* row = w2 + (size_t)c * cfg_.head_hidden;
            R acc = b2[c];
            for (int kh = 0; kh < cfg_.head_hidden; ++kh) acc += row[kh] * ws.hidden[kh];
            ws.logits[c] = acc;
        }
        return ws.logits.data();
    }

    // Backward one sample from d_logits. Accumulates into parameter gradient
    // buffers; optionally accumulates the input gradient into d_x (length G).
    void backward_sample(const R* d_logits, const R* x, const GridSpec& grid,
                         SampleWorkspace<R>& ws, bool want_coord_grads = true,
                         R* d_x = nullptr) {
        const int g = cfg_.g, p = cfg_.p;
        const int e = cfg_.backbone.embedding_dim();
        const int width = e + g;

        auto& w1p = *params_.find("head_w1");
        auto& b1p = *params_.find("head_b1");
        auto& w2p = *params_.find("head_w2");
        auto& b2p = *params_.find("head_b2");

        // head
        std::fill(ws.d_hidden.begin(), ws.d_hidden.end(), R(0));
        for (int c = 0; c < cfg_.classes; ++c) {
            const R dl = d_logits[c];
            R* dw_row = w2p.grad.data() + (size_t)c * cfg_.head_hidden;
            const R* w_row = w2p.value.data() + (size_t)c * cfg_.head_hidden;
            for (int kh = 0; kh < cfg_.head_hidden; ++kh) {
                dw_row[kh] += dl * ws.hidden[kh];
                ws.d_hidden[kh] += dl * w_row[kh];
            }
            b2p.grad[c] += dl;
        }
        for (int kh = 0; kh < cfg_.head_hidden; ++kh)
            if (ws.hidden[kh] <= R(0)) ws.d_hidden[kh] = R(0);

        std::fill(ws.d_concat.begin(), ws.d_concat.end(), R(0));
#pragma omp parallel for schedule(static)
        for (int j = 0; j < width; ++j) {
            R acc = R(0);
            for (int kh = 0; kh < cfg_.head_hidden; ++kh)
                acc += w1p.value[(size_t)kh * width + j] * ws.d_hidden[kh];
            ws.d_concat[j] = acc;
        }
#pragma omp parallel for schedule(static)
        for (int kh = 0; kh < cfg_.head_hidden; ++kh) {
            const R dz = ws.d_hidden[kh];
            if (dz == R(0)) continue;
            R* dw_row = w1p.grad.data() + (size_t)kh * width;
            for (int j = 0; j < width; ++j) dw_row[j] += dz * ws.concat[j];
            b1p.grad[kh] += dz;
        }
        if (ws.dropout_active)
            for (int j = 0; j < width; ++j) ws.d_concat[j] *= ws.mask[j];

        for (int ch = 0; ch < e; ++ch) ws.d_embedding[ch] = ws.d_concat[ch];
        std::copy(ws.d_concat.begin() + e, ws.d_concat.end(), ws.d_gated.begin());

        // backbone, reversed
        int h = p, w = p;
        std::vector<int> hs(cfg_.backbone.blocks.size()), wss(cfg_.backbone.blocks.size());
        for (size_t l = 0; l < cfg_.backbone.blocks.size(); ++l) {
            hs[l] = h;
            wss[l] = w;
            if (cfg_.backbone.blocks[l].pool) {
                h /= 2;
                w /= 2;
            }
        }
        const int last = (int)cfg_.backbone.blocks.size() - 1;
        const int npix = h * w;
        {
            auto& dst = cfg_.backbone.blocks[last].pool ? ws.d_pooled[last] : ws.d_act[last];
            const R inv = (R)(1.0 / npix);
            for (int k = 0; k < npix; ++k)
                for (int ch = 0; ch < e; ++ch)
                    dst[(size_t)k * e + ch] = ws.d_embedding[ch] * inv;
        }
        for (int l = last; l >= 0; --l) {
            const auto& blk = cfg_.backbone.blocks[l];
            if (blk.pool) {
                std::fill(ws.d_act[l].begin(), ws.d_act[l].end(), R(0));
                maxpool2x2_backward(ws.d_pooled[l].data(), hs[l] / 2, wss[l] / 2, blk.filters,
                                    ws.argmax[l].data(), ws.d_act[l].data());
            }
            // relu mask in place
            for (size_t k = 0; k < ws.act[l].size(); ++k)
                if (ws.act[l][k] <= R(0)) ws.d_act[l][k] = R(0);

            const R* in = (l == 0) ? ws.image_std.data()
                                   : (cfg_.backbone.blocks[l - 1].pool ? ws.pooled[l - 1].data()
                                                                       : ws.act[l - 1].data());
            const int c_in = (l == 0) ? 1 : cfg_.backbone.blocks[l - 1].filters;
            auto& wp = *params_.find("conv" + std::to_string(l) + "_w");
            auto& bp = *params_.find("conv" + std::to_string(l) + "_b");
            conv3x3_weight_grad(in, ws.d_act[l].data(), hs[l], wss[l], c_in, blk.filters,
                                wp.grad.data(), bp.grad.data());
            auto& d_in = (l == 0) ? ws.d_image_std
                                  : (cfg_.backbone.blocks[l - 1].pool ? ws.d_pooled[l - 1]
                                                                      : ws.d_act[l - 1]);
            std::fill(d_in.begin(), d_in.end(), R(0));
            conv3x3_transpose_weights(wp.value.data(), c_in, blk.filters,
                                      ws.conv_w_t[l].data());
            conv3x3_input_grad(ws.d_act[l].data(), hs[l], wss[l], blk.filters,
                               ws.conv_w_t[l].data(), c_in, d_in.data());
        }

        std::fill(ws.d_image_raw.begin(), ws.d_image_raw.end(), R(0));
        standardize_image_backward(ws.d_image_std.data(), ws.image_std.data(), ws.image_stats, p,
                                   ws.d_image_raw.data());

        auto& coords_p = *params_.find("coords");
        render_vjp(ws.d_image_raw.data(), ws.gate.gated.data(), coords_p.value.data(), grid,
                   ws.render, ws.d_gated.data(), coords_p.grad.data(), want_coord_grads);

        auto& gw = *params_.find("gate_w");
        auto& gb = *params_.find("gate_b");
        gate_backward(x, gw.value.data(), g, cfg_.diagonal_gate, ws.gate, ws.d_gated.data(),
                      gw.grad.data(), gb.grad.data(), d_x, ws.gate_dz.data());
    }

private:
    void plan_shapes() {
        int h = cfg_.p, w = cfg_.p;
        for (const auto& blk : cfg_.backbone.blocks) {
            if (h < 1 || w < 1) throw InputError("model: backbone pools below 1 pixel");
            in_h_.push_back(h);
            in_w_.push_back(w);
            if (blk.pool) {
                h /= 2;
                w /= 2;
            }
        }
        if (h < 1 || w < 1) throw InputError("model: backbone pools below 1 pixel");
    }

    void he_uniform_init(std::vector<R>& v, int fan_in, uint64_t seed) {
        Rng rng(seed);
        const double limit = std::sqrt(6.0 / fan_in);
        for (auto& x : v) x = (R)rng.uniform(-limit, limit);
    }

    const R* conv_w(size_t l) const {
        return params_.find("conv" + std::to_string(l) + "_w")->value.data();
    }
    const R* conv_b(size_t l) const {
        return params_.find("conv" + std::to_string(l) + "_b")->value.data();
    }

    ModelConfig cfg_;
    ParamSet<R> params_;
    std::vector<int> in_h_, in_w_; // conv input sizes per block
};

} // namespace dynomap
