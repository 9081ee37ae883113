#pragma once

// Model assembly: the Energy Conversion Module (4-stage U-Net) plus, in
// unified mode, four Prior Conditioning Modules whose PCVs channel-scale the
// decoder block outputs. Everything is templated on the value type so the
// gradient tests can run the whole stack in double.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vmct/errors.hpp"
#include "vmct/ops.hpp"
#include "vmct/phase.hpp"
#include "vmct/rng.hpp"
#include "vmct/tensor.hpp"

namespace vmct {

struct ArchConfig {
    int base_channels = 32;
    int depth = 4;  // fixed; validated
    int bottleneck_channels = 512;
    int pcm_hidden = 200;
    int prior_dim = 128;
    int embed_dim = 128;
    int in_channels = 1;
    int out_channels = 1;
    bool residual = false;

    int level_channels(int level) const { return base_channels << level; }  // level 0..3

    void validate() const {
        if (depth != 4) throw ConfigError("arch: only depth 4 is supported");
        if (base_channels < 1 || bottleneck_channels < 1 || pcm_hidden < 1 || prior_dim < 1 ||
            embed_dim < 1 || in_channels < 1 || out_channels < 1)
            throw ConfigError("arch: all sizes must be positive");
    }

    bool operator==(const ArchConfig&) const = default;
};

enum class ModelMode { Standalone, Unified };

inline std::string mode_name(ModelMode m) { return m == ModelMode::Unified ? "unified" : "standalone"; }
inline ModelMode mode_from_name(const std::string& s) {
    if (s == "unified") return ModelMode::Unified;
    if (s == "standalone") return ModelMode::Standalone;
    throw ConfigError("unknown model mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct ConvLayerT {
    ParamArrayT<T> w, b;
    int stride = 1, pad = 1;

    ConvLayerT() = default;
    ConvLayerT(const std::string& name, int c_out, int c_in, int k, int stride_, int pad_)
        : w(name + ".weight", {c_out, c_in, k, k}), b(name + ".bias", {c_out}), stride(stride_), pad(pad_) {}
};

template <typename T>
struct TransposeLayerT {
    ParamArrayT<T> w, b;  // w dims [c_in, c_out, 2, 2]

    TransposeLayerT() = default;
    TransposeLayerT(const std::string& name, int c_in, int c_out)
        : w(name + ".weight", {c_in, c_out, 2, 2}), b(name + ".bias", {c_out}) {}
};

template <typename T>
struct BnLayerT {
    ParamArrayT<T> gamma, beta;
    BnStateT<T> state;
    std::string name;

    BnLayerT() = default;
    BnLayerT(const std::string& name_, int c) : gamma(name_ + ".gamma", {c}), beta(name_ + ".beta", {c}), state(c), name(name_) {
        std::fill(gamma.values.begin(), gamma.values.end(), T(1));
    }
};

template <typename T>
struct LinearLayerT {
    ParamArrayT<T> w, b;  // w dims [d_out, d_in]

    LinearLayerT() = default;
    LinearLayerT(const std::string& name, int d_out, int d_in)
        : w(name + ".weight", {d_out, d_in}), b(name + ".bias", {d_out}) {}
};

// conv-BN-ReLU twice.
template <typename T>
struct DoubleConvT {
    ConvLayerT<T> conv1;
    BnLayerT<T> bn1;
    ConvLayerT<T> conv2;
    BnLayerT<T> bn2;

    DoubleConvT() = default;
    DoubleConvT(const std::string& name, int c_in, int c_out)
        : conv1(name + ".conv1", c_out, c_in, 3, 1, 1),
          bn1(name + ".bn1", c_out),
          conv2(name + ".conv2", c_out, c_out, 3, 1, 1),
          bn2(name + ".bn2", c_out) {}
};

template <typename T>
struct DoubleConvCacheT {
    Tensor4T<T> x;   // block input
    Tensor4T<T> r1;  // first conv-BN-ReLU output
    Tensor4T<T> y;   // block output
    BnCacheT<T> bn1c, bn2c;
};

template <typename T>
Tensor4T<T> double_conv_forward(DoubleConvT<T>& blk, const Tensor4T<T>& x, BnMode mode,
                                DoubleConvCacheT<T>* cache) {
    Tensor4T<T> a1 = conv2d(x, blk.conv1.w, blk.conv1.b, 1, 1);
    Tensor4T<T> n1 = batchnorm2d(a1, blk.bn1.gamma, blk.bn1.beta, blk.bn1.state, mode,
                                 cache != nullptr ? &cache->bn1c : nullptr);
    Tensor4T<T> r1 = relu(n1);
    Tensor4T<T> a2 = conv2d(r1, blk.conv2.w, blk.conv2.b, 1, 1);
    Tensor4T<T> n2 = batchnorm2d(a2, blk.bn2.gamma, blk.bn2.beta, blk.bn2.state, mode,
                                 cache != nullptr ? &cache->bn2c : nullptr);
    Tensor4T<T> y = relu(n2);
    if (cache != nullptr) {
        cache->x = x;
        cache->r1 = std::move(r1);
        cache->y = y;
    }
    return y;
}

template <typename T>
Tensor4T<T> double_conv_backward(DoubleConvT<T>& blk, const Tensor4T<T>& grad_out,
                                 DoubleConvCacheT<T>& cache) {
    Tensor4T<T> dn2 = relu_backward(grad_out, cache.y);
    Tensor4T<T> da2 = batchnorm2d_backward(dn2, cache.bn2c, blk.bn2.gamma, blk.bn2.beta);
    Tensor4T<T> dr1 = conv2d_backward(da2, cache.r1, blk.conv2.w, blk.conv2.b, 1, 1);
    Tensor4T<T> dn1 = relu_backward(dr1, cache.r1);
    Tensor4T<T> da1 = batchnorm2d_backward(dn1, cache.bn1c, blk.bn1.gamma, blk.bn1.beta);
    return conv2d_backward(da1, cache.x, blk.conv1.w, blk.conv1.b, 1, 1);
}

// linear-ReLU-linear (no final activation).
template <typename T>
struct Mlp2T {
    LinearLayerT<T> fc1, fc2;

    Mlp2T() = default;
    Mlp2T(const std::string& name, int d_in, int hidden, int d_out)
        : fc1(name + ".fc1", hidden, d_in), fc2(name + ".fc2", d_out, hidden) {}
};

template <typename T>
struct Mlp2CacheT {
    BatchVecT<T> x, r;
};

template <typename T>
BatchVecT<T> mlp2_forward(Mlp2T<T>& mlp, const BatchVecT<T>& x, Mlp2CacheT<T>* cache) {
    BatchVecT<T> h = linear(x, mlp.fc1.w, mlp.fc1.b);
    BatchVecT<T> r = vec_relu(h);
    BatchVecT<T> y = linear(r, mlp.fc2.w, mlp.fc2.b);
    if (cache != nullptr) {
        cache->x = x;
        cache->r = std::move(r);
    }
    return y;
}

template <typename T>
BatchVecT<T> mlp2_backward(Mlp2T<T>& mlp, const BatchVecT<T>& grad_out, Mlp2CacheT<T>& cache) {
    BatchVecT<T> dr = linear_backward(grad_out, cache.r, mlp.fc2.w, mlp.fc2.b);
    BatchVecT<T> dh = vec_relu_backward(dr, cache.r);
    return linear_backward(dh, cache.x, mlp.fc1.w, mlp.fc1.b);
}

// One Prior Conditioning Module level: PEB(prior) || FeatureMlp(GAP(f)) -> FusionMlp -> PCV.
template <typename T>
struct PcmLevelT {
    Mlp2T<T> peb, feat, fuse;

    PcmLevelT() = default;
    PcmLevelT(const std::string& name, const ArchConfig& cfg, int level)
        : peb(name + ".peb", cfg.prior_dim, cfg.pcm_hidden, cfg.embed_dim),
          feat(name + ".feat", cfg.level_channels(level), cfg.pcm_hidden, cfg.embed_dim),
          fuse(name + ".fuse", 2 * cfg.embed_dim, cfg.pcm_hidden, cfg.level_channels(level)) {}
};

template <typename T>
struct PcmLevelCacheT {
    Mlp2CacheT<T> pebc, featc, fusec;
    int feat_h = 0, feat_w = 0;
    int embed_dim = 0;
};

template <typename T>
BatchVecT<T> pcm_level_forward(PcmLevelT<T>& pcm, const BatchVecT<T>& prior, const Tensor4T<T>& f,
                               int embed_dim, PcmLevelCacheT<T>* cache) {
    BatchVecT<T> gap = global_avg_pool(f);
    BatchVecT<T> e = mlp2_forward(pcm.peb, prior, cache != nullptr ? &cache->pebc : nullptr);
    BatchVecT<T> fv = mlp2_forward(pcm.feat, gap, cache != nullptr ? &cache->featc : nullptr);
    BatchVecT<T> cat = concat_vecs(e, fv);
    BatchVecT<T> v = mlp2_forward(pcm.fuse, cat, cache != nullptr ? &cache->fusec : nullptr);
    if (cache != nullptr) {
        cache->feat_h = f.h;
        cache->feat_w = f.w;
        cache->embed_dim = embed_dim;
    }
    return v;
}

// Returns the gradient w.r.t. the encoder feature map f (the GAP path).
template <typename T>
Tensor4T<T> pcm_level_backward(PcmLevelT<T>& pcm, const BatchVecT<T>& grad_v, PcmLevelCacheT<T>& cache) {
    BatchVecT<T> dcat = mlp2_backward(pcm.fuse, grad_v, cache.fusec);
    auto [de, dfv] = concat_vecs_backward(dcat, cache.embed_dim);
    mlp2_backward(pcm.peb, de, cache.pebc);  // prior is a constant input; grad discarded
    BatchVecT<T> dgap = mlp2_backward(pcm.feat, dfv, cache.featc);
    return global_avg_pool_backward(dgap, cache.feat_h, cache.feat_w);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <typename T>
struct DecoderBlockT {
    TransposeLayerT<T> up;
    DoubleConvT<T> dc;

    DecoderBlockT() = default;
    DecoderBlockT(const std::string& name, int c_in_below, int c_level)
        : up(name + ".up", c_in_below, c_level), dc(name, 2 * c_level, c_level) {}
};

template <typename T>
struct UnifiedModelT {
    ArchConfig cfg;
    ModelMode mode = ModelMode::Standalone;

    std::array<DoubleConvT<T>, 4> enc;   // enc[0] = E1 ... enc[3] = E4
    DoubleConvT<T> bottleneck;
    std::array<DecoderBlockT<T>, 4> dec; // dec[0] = D1 ... dec[3] = D4 (runs 3..0)
    ConvLayerT<T> out;
    std::vector<PcmLevelT<T>> pcm;       // pcm[level], empty in standalone mode

    bool unified() const { return mode == ModelMode::Unified; }

    // Trainable parameters in canonical (serialization) order.
    std::vector<ParamArrayT<T>*> params() {
        std::vector<ParamArrayT<T>*> out_list;
        auto add_conv = [&](ConvLayerT<T>& c) {
            out_list.push_back(&c.w);
            out_list.push_back(&c.b);
        };
        auto add_bn = [&](BnLayerT<T>& bn) {
            out_list.push_back(&bn.gamma);
            out_list.push_back(&bn.beta);
        };
        auto add_dc = [&](DoubleConvT<T>& d) {
            add_conv(d.conv1);
            add_bn(d.bn1);
            add_conv(d.conv2);
            add_bn(d.bn2);
        };
        for (auto& e : enc) add_dc(e);
        add_dc(bottleneck);
        for (int lvl = 3; lvl >= 0; --lvl) {
            out_list.push_back(&dec[lvl].up.w);
            out_list.push_back(&dec[lvl].up.b);
            add_dc(dec[lvl].dc);
        }
        add_conv(out);
        for (auto& p : pcm) {
            for (Mlp2T<T>* m : {&p.peb, &p.feat, &p.fuse}) {
                out_list.push_back(&m->fc1.w);
                out_list.push_back(&m->fc1.b);
                out_list.push_back(&m->fc2.w);
                out_list.push_back(&m->fc2.b);
            }
        }
        return out_list;
    }

    std::vector<BnLayerT<T>*> bn_layers() {
        std::vector<BnLayerT<T>*> out_list;
        auto add_dc = [&](DoubleConvT<T>& d) {
            out_list.push_back(&d.bn1);
            out_list.push_back(&d.bn2);
        };
        for (auto& e : enc) add_dc(e);
        add_dc(bottleneck);
        for (int lvl = 3; lvl >= 0; --lvl) add_dc(dec[lvl].dc);
        return out_list;
    }

    std::size_t param_count() {
        std::size_t total = 0;
        for (const auto* p : params()) total += p->values.size();
        return total;
    }

    void zero_grads() {
        for (auto* p : params()) p->zero_grad();
    }
};

// ---------------------------------------------------------------------------
// Construction / initialization
// ---------------------------------------------------------------------------

template <typename T>
void kaiming_uniform_init(ParamArrayT<T>& p, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));  // gain sqrt(2) for ReLU
    for (auto& v : p.values) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
UnifiedModelT<T> build_model(const ArchConfig& cfg, ModelMode mode, std::uint64_t seed) {
    cfg.validate();
    UnifiedModelT<T> m;
    m.cfg = cfg;
    m.mode = mode;

    for (int lvl = 0; lvl < 4; ++lvl) {
        const int c_in = lvl == 0 ? cfg.in_channels : cfg.level_channels(lvl - 1);
        m.enc[lvl] = DoubleConvT<T>("ecm.enc" + std::to_string(lvl + 1), c_in, cfg.level_channels(lvl));
    }
    m.bottleneck = DoubleConvT<T>("ecm.bottleneck", cfg.level_channels(3), cfg.bottleneck_channels);
    for (int lvl = 3; lvl >= 0; --lvl) {
        const int c_below = lvl == 3 ? cfg.bottleneck_channels : cfg.level_channels(lvl + 1);
        m.dec[lvl] = DecoderBlockT<T>("ecm.dec" + std::to_string(lvl + 1), c_below, cfg.level_channels(lvl));
    }
    m.out = ConvLayerT<T>("ecm.out", cfg.out_channels, cfg.base_channels, 1, 1, 0);
    if (mode == ModelMode::Unified) {
        m.pcm.reserve(4);
        for (int lvl = 0; lvl < 4; ++lvl)
            m.pcm.emplace_back("pcm" + std::to_string(lvl + 1), cfg, lvl);
    }

    // Weight init. The ECM is initialized first from the seed's stream, so a
    // standalone and a unified model built from the same seed share ECM
    // weights exactly.
    Rng rng(seed);
    auto init_conv = [&](ConvLayerT<T>& c) {
        kaiming_uniform_init(c.w, c.w.dim(1) * c.w.dim(2) * c.w.dim(3), rng);
    };
    auto init_dc = [&](DoubleConvT<T>& d) {
        init_conv(d.conv1);
        init_conv(d.conv2);
    };
    for (auto& e : m.enc) init_dc(e);
    init_dc(m.bottleneck);
    for (int lvl = 3; lvl >= 0; --lvl) {
        kaiming_uniform_init(m.dec[lvl].up.w, m.dec[lvl].up.w.dim(0) * 4, rng);
        init_dc(m.dec[lvl].dc);
    }
    init_conv(m.out);
    for (auto& p : m.pcm) {
        kaiming_uniform_init(p.peb.fc1.w, p.peb.fc1.w.dim(1), rng);
        kaiming_uniform_init(p.peb.fc2.w, p.peb.fc2.w.dim(1), rng);
        kaiming_uniform_init(p.feat.fc1.w, p.feat.fc1.w.dim(1), rng);
        kaiming_uniform_init(p.feat.fc2.w, p.feat.fc2.w.dim(1), rng);
        kaiming_uniform_init(p.fuse.fc1.w, p.fuse.fc1.w.dim(1), rng);
        // Final fusion layer: zero weights, bias 1, so every PCV is exactly
        // all-ones at init and the unified model starts as the standalone one.
        std::fill(p.fuse.fc2.w.values.begin(), p.fuse.fc2.w.values.end(), T(0));
        std::fill(p.fuse.fc2.b.values.begin(), p.fuse.fc2.b.values.end(), T(1));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename T>
struct EncFeatsT {
    std::array<Tensor4T<T>, 4> f;  // post-ReLU encoder outputs, f[0] largest
    Tensor4T<T> bottleneck;
};

template <typename T>
struct ForwardCacheT {
    BnMode mode = BnMode::Train;
    bool modulated = false;
    std::array<DoubleConvCacheT<T>, 4> enc;
    std::array<PoolCache, 4> pool;
    DoubleConvCacheT<T> bott;
    std::array<PcmLevelCacheT<T>, 4> pcm;
    std::array<BatchVecT<T>, 4> pcv;
    std::array<Tensor4T<T>, 4> up_in;  // transpose-conv inputs, per level
    std::array<DoubleConvCacheT<T>, 4> dec;
    Tensor4T<T> out_in;  // input of the final 1x1 conv
};

template <typename T>
void check_ecm_input(const UnifiedModelT<T>& m, const Tensor4T<T>& x) {
    if (x.c != m.cfg.in_channels) throw ShapeError("forward: input channels != arch in_channels");
    if (x.n < 1) throw ShapeError("forward: empty batch");
    if (x.h % 16 != 0 || x.w % 16 != 0 || x.h < 16 || x.w < 16)
        throw ShapeError("forward: h and w must be positive multiples of 16");
}

namespace detail {

template <typename T>
Tensor4T<T> encode_impl(UnifiedModelT<T>& m, const Tensor4T<T>& x, BnMode mode,
                        ForwardCacheT<T>* cache, std::array<Tensor4T<T>, 4>& feats) {
    Tensor4T<T> cur = x;
    for (int lvl = 0; lvl < 4; ++lvl) {
        feats[lvl] = double_conv_forward(m.enc[lvl], cur, mode,
                                         cache != nullptr ? &cache->enc[lvl] : nullptr);
        cur = maxpool2d(feats[lvl], cache != nullptr ? &cache->pool[lvl] : nullptr);
    }
    return double_conv_forward(m.bottleneck, cur, mode, cache != nullptr ? &cache->bott : nullptr);
}

}  // namespace detail

template <typename T>
EncFeatsT<T> ecm_encode(UnifiedModelT<T>& m, const Tensor4T<T>& x, BnMode mode = BnMode::Eval) {
    check_ecm_input(m, x);
    EncFeatsT<T> out;
    out.bottleneck = detail::encode_impl(m, x, mode, static_cast<ForwardCacheT<T>*>(nullptr), out.f);
    return out;
}

// PCVs for a batch of priors given encoder features (unified models only).
template <typename T>
std::array<BatchVecT<T>, 4> pcm_forward(UnifiedModelT<T>& m, const BatchVecT<T>& prior,
                                        const EncFeatsT<T>& feats) {
    if (!m.unified()) throw ArgumentError("pcm_forward: standalone model has no PCM");
    if (prior.d != m.cfg.prior_dim) throw ShapeError("pcm_forward: prior length != prior_dim");
    std::array<BatchVecT<T>, 4> v;
    for (int lvl = 0; lvl < 4; ++lvl) {
        if (feats.f[lvl].n != prior.n) throw ContractError("pcm_forward: feature level batch mismatch");
        v[lvl] = pcm_level_forward(m.pcm[lvl], prior, feats.f[lvl], m.cfg.embed_dim,
                                   static_cast<PcmLevelCacheT<T>*>(nullptr));
    }
    return v;
}

// Full forward. `prior` is required in unified mode and must be absent in
// standalone mode. `pcv_override`, when set, substitutes the given PCVs and
// skips PCM evaluation (used by identity and ablation tests).
template <typename T>
Tensor4T<T> model_forward(UnifiedModelT<T>& m, const Tensor4T<T>& x, const BatchVecT<T>* prior,
                          BnMode mode, ForwardCacheT<T>* cache = nullptr,
                          const std::array<BatchVecT<T>, 4>* pcv_override = nullptr) {
    check_ecm_input(m, x);
    const bool modulate = m.unified() || pcv_override != nullptr;
    if (m.unified() && pcv_override == nullptr && prior == nullptr)
        throw ArgumentError("forward: unified model requires a prior");
    if (!m.unified() && prior != nullptr)
        throw ArgumentError("forward: standalone model takes no prior");
    if (prior != nullptr && (prior->n != x.n || prior->d != m.cfg.prior_dim))
        throw ShapeError("forward: prior batch/length mismatch");

    std::array<Tensor4T<T>, 4> feats;
    Tensor4T<T> bott = detail::encode_impl(m, x, mode, cache, feats);
    const std::array<Tensor4T<T>, 4>* fsrc = &feats;
    if (cache != nullptr) {
        cache->mode = mode;
        cache->modulated = modulate;
    }

    std::array<BatchVecT<T>, 4> pcv;
    if (modulate) {
        if (pcv_override != nullptr) {
            pcv = *pcv_override;
            for (int lvl = 0; lvl < 4; ++lvl)
                if (pcv[lvl].n != x.n || pcv[lvl].d != m.cfg.level_channels(lvl))
                    throw ShapeError("forward: pcv override dims mismatch");
        } else {
            for (int lvl = 0; lvl < 4; ++lvl)
                pcv[lvl] = pcm_level_forward(m.pcm[lvl], *prior, (*fsrc)[lvl], m.cfg.embed_dim,
                                             cache != nullptr ? &cache->pcm[lvl] : nullptr);
        }
        if (cache != nullptr) cache->pcv = pcv;
    }

    Tensor4T<T> cur = std::move(bott);
    for (int lvl = 3; lvl >= 0; --lvl) {
        if (cache != nullptr) cache->up_in[lvl] = cur;
        Tensor4T<T> u = conv_transpose2d(cur, m.dec[lvl].up.w, m.dec[lvl].up.b);
        Tensor4T<T> s = concat_channels(u, (*fsrc)[lvl]);
        Tensor4T<T> h = double_conv_forward(m.dec[lvl].dc, s, mode,
                                            cache != nullptr ? &cache->dec[lvl] : nullptr);
        cur = modulate ? channel_scale(h, pcv[lvl]) : std::move(h);
    }
    if (cache != nullptr) cache->out_in = cur;
    Tensor4T<T> y = conv2d(cur, m.out.w, m.out.b, 1, 0);
    if (m.cfg.residual) {
        if (!y.same_shape(x)) throw ShapeError("forward: residual needs matching in/out dims");
        for (std::size_t i = 0; i < y.size(); ++i) y.values[i] += x.values[i];
    }
    return y;
}

// Backward through the cached forward. Accumulates parameter gradients and
// returns dL/dinput. When `pcv_override` was used in forward, PCV gradients
// are not propagated into the PCM (matching "PCM grads masked" semantics).
template <typename T>
Tensor4T<T> model_backward(UnifiedModelT<T>& m, const Tensor4T<T>& grad_out, ForwardCacheT<T>& cache,
                           bool pcv_was_override = false) {
    Tensor4T<T> dcur = conv2d_backward(grad_out, cache.out_in, m.out.w, m.out.b, 1, 0);
    std::array<Tensor4T<T>, 4> denc;  // extra gradients flowing into encoder features

    for (int lvl = 0; lvl < 4; ++lvl) {
        Tensor4T<T> dh;
        if (cache.modulated) {
            auto [dh_, dv] = channel_scale_backward(dcur, cache.dec[lvl].y, cache.pcv[lvl]);
            dh = std::move(dh_);
            if (!pcv_was_override) {
                Tensor4T<T> dfeat = pcm_level_backward(m.pcm[lvl], dv, cache.pcm[lvl]);
                if (denc[lvl].size() == 0)
                    denc[lvl] = std::move(dfeat);
                else
                    for (std::size_t i = 0; i < dfeat.size(); ++i) denc[lvl].values[i] += dfeat.values[i];
            }
        } else {
            dh = std::move(dcur);
        }
        Tensor4T<T> ds = double_conv_backward(m.dec[lvl].dc, dh, cache.dec[lvl]);
        auto [du, dskip] = concat_channels_backward(ds, m.cfg.level_channels(lvl));
        if (denc[lvl].size() == 0)
            denc[lvl] = std::move(dskip);
        else
            for (std::size_t i = 0; i < dskip.size(); ++i) denc[lvl].values[i] += dskip.values[i];
        dcur = conv_transpose2d_backward(du, cache.up_in[lvl], m.dec[lvl].up.w, m.dec[lvl].up.b);
    }

    // dcur is now the bottleneck gradient.
    Tensor4T<T> dp = double_conv_backward(m.bottleneck, dcur, cache.bott);
    for (int lvl = 3; lvl >= 0; --lvl) {
        Tensor4T<T> dfeat =
            maxpool2d_backward(dp, cache.pool[lvl], cache.enc[lvl].y.h, cache.enc[lvl].y.w);
        for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat.values[i] += denc[lvl].values[i];
        dp = double_conv_backward(m.enc[lvl], dfeat, cache.enc[lvl]);
    }
    if (m.cfg.residual)
        for (std::size_t i = 0; i < dp.size(); ++i) dp.values[i] += grad_out.values[i];
    return dp;
}

using ConvLayer = ConvLayerT<float>;
using TransposeLayer = TransposeLayerT<float>;
using BnLayer = BnLayerT<float>;
using LinearLayer = LinearLayerT<float>;
using DoubleConv = DoubleConvT<float>;
using Mlp2 = Mlp2T<float>;
using PcmLevel = PcmLevelT<float>;
using UnifiedModel = UnifiedModelT<float>;
using ForwardCache = ForwardCacheT<float>;
using EncFeats = EncFeatsT<float>;

}  // namespace vmct
