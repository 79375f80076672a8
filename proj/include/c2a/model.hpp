#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "c2a/nn.hpp"
#include "c2a/rng.hpp"
#include "c2a/sgd.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

struct ModelConfig {
    std::size_t stride = 4;          // encoder patch stride
    std::size_t encoder_hidden = 64;
    std::size_t f_d = 32;            // encoder map feature dim
    std::size_t f_e = 16;            // embedding dim
    std::size_t n_source_classes = 4;
    std::size_t n_target_classes = 3;
    std::size_t num_clusters = 10;
    std::size_t disc_base = 8;       // first discriminator channel count, doubled per layer
    double leaky_slope = 0.2;
    double assign_temperature = 1.0;
};

namespace detail {

// (H, W, C) -> (H/s * W/s, s*s*C), cells row-major, patch entries (dy, dx, c).
inline Tensor patchify(const Tensor& map, std::size_t s) {
    const std::size_t h = map.dims[0], w = map.dims[1], c = map.dims[2];
    if (h % s != 0 || w % s != 0)
        throw shape_error("patchify: " + dims_to_string(map.dims) + " not divisible by stride " +
                          std::to_string(s));
    const std::size_t hp = h / s, wp = w / s;
    Tensor out({hp * wp, s * s * c});
    for (std::size_t py = 0; py < hp; ++py)
        for (std::size_t px = 0; px < wp; ++px) {
            double* cell = &out.data[(py * wp + px) * s * s * c];
            for (std::size_t dy = 0; dy < s; ++dy)
                for (std::size_t dx = 0; dx < s; ++dx)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        cell[(dy * s + dx) * c + ch] = map.at(py * s + dy, px * s + dx, ch);
        }
    return out;
}

inline Tensor unpatchify(const Tensor& cells, std::size_t hp, std::size_t wp, std::size_t s,
                         std::size_t c) {
    Tensor out({hp * s, wp * s, c});
    for (std::size_t py = 0; py < hp; ++py)
        for (std::size_t px = 0; px < wp; ++px) {
            const double* cell = &cells.data[(py * wp + px) * s * s * c];
            for (std::size_t dy = 0; dy < s; ++dy)
                for (std::size_t dx = 0; dx < s; ++dx)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        out.at(py * s + dy, px * s + dx, ch) = cell[(dy * s + dx) * c + ch];
        }
    return out;
}

inline Tensor reshape(const Tensor& t, std::vector<std::size_t> dims) {
    if (Tensor::count(dims) != t.size())
        throw shape_error("reshape: " + dims_to_string(t.dims) + " -> " + dims_to_string(dims));
    Tensor out;
    out.dims = std::move(dims);
    out.data = t.data;
    return out;
}

}  // namespace detail

// Shared encoder: non-overlapping s x s patches, two linear layers with a
// leaky ReLU between. (H, W, 3) -> (H/s, W/s, f_d).
struct Encoder {
    LinearLayer l1, l2;
    std::size_t stride = 4;
    double slope = 0.2;

    Encoder() = default;
    Encoder(const ModelConfig& cfg)
        : l1(cfg.stride * cfg.stride * 3, cfg.encoder_hidden),
          l2(cfg.encoder_hidden, cfg.f_d),
          stride(cfg.stride),
          slope(cfg.leaky_slope) {}

    struct Cache {
        Tensor patches;  // cells x (s*s*3)
        Tensor z1;       // cells x hidden
        Tensor a1;       // cells x hidden
        std::size_t hp = 0, wp = 0;
    };

    // Returns the encoder map (H', W', f_d) and fills the cache.
    Tensor forward(const Tensor& image, Cache& cache) const {
        if (image.rank() != 3 || image.dims[2] != 3)
            throw shape_error("encoder_forward: want (H, W, 3), got " + dims_to_string(image.dims));
        cache.hp = image.dims[0] / stride;
        cache.wp = image.dims[1] / stride;
        cache.patches = detail::patchify(image, stride);
        cache.z1 = l1.forward(cache.patches);
        cache.a1 = leaky_relu_forward(cache.z1, slope);
        Tensor out = l2.forward(cache.a1);
        require_finite(out, "encoder_forward");
        return detail::reshape(out, {cache.hp, cache.wp, l2.out_dim});
    }

    // Accumulates parameter grads; returns the input-image gradient.
    Tensor backward(const Cache& cache, const Tensor& d_map) {
        const Tensor d_out = detail::reshape(d_map, {cache.hp * cache.wp, l2.out_dim});
        const Tensor d_a1 = l2.backward(cache.a1, d_out);
        const Tensor d_z1 = leaky_relu_backward(cache.z1, d_a1, slope);
        const Tensor d_patches = l1.backward(cache.patches, d_z1);
        return detail::unpatchify(d_patches, cache.hp, cache.wp, stride, 3);
    }
};

// Task decoder: per-cell linear f_d -> |Y|, per-cell softmax, nearest-neighbor
// upsample by the encoder stride. Output (H, W, |Y|), rows on the simplex.
struct Decoder {
    LinearLayer head;
    std::size_t stride = 4;

    Decoder() = default;
    Decoder(std::size_t f_d, std::size_t n_classes, std::size_t s) : head(f_d, n_classes), stride(s) {}

    struct Cache {
        Tensor cells;   // cells x f_d (flattened encoder map)
        Tensor probs;   // cells x |Y|
        std::size_t hp = 0, wp = 0;
    };

    Tensor forward(const Tensor& encoder_map, Cache& cache) const {
        if (encoder_map.rank() != 3 || encoder_map.dims[2] != head.in_dim)
            throw shape_error("decoder_forward: map " + dims_to_string(encoder_map.dims) +
                              " vs f_d " + std::to_string(head.in_dim));
        cache.hp = encoder_map.dims[0];
        cache.wp = encoder_map.dims[1];
        cache.cells = detail::reshape(encoder_map, {cache.hp * cache.wp, head.in_dim});
        Tensor logits = head.forward(cache.cells);
        cache.probs = softmax(logits);
        const std::size_t c = head.out_dim;
        Tensor prob_map({cache.hp * stride, cache.wp * stride, c});
        for (std::size_t y = 0; y < prob_map.dims[0]; ++y)
            for (std::size_t x = 0; x < prob_map.dims[1]; ++x) {
                const double* p = &cache.probs.data[((y / stride) * cache.wp + x / stride) * c];
                for (std::size_t j = 0; j < c; ++j) prob_map.at(y, x, j) = p[j];
            }
        require_finite(prob_map, "decoder_forward");
        return prob_map;
    }

    // Gradient arriving at the per-pixel logits (upsample replicas sum into
    // their cell). Returns the encoder-map gradient.
    Tensor backward_logits(const Cache& cache, const Tensor& d_logits_pixel) {
        const std::size_t c = head.out_dim;
        if (d_logits_pixel.rank() != 3 || d_logits_pixel.dims[2] != c)
            throw shape_error("decoder backward: grad " + dims_to_string(d_logits_pixel.dims));
        Tensor d_logits_cell({cache.hp * cache.wp, c});
        for (std::size_t y = 0; y < d_logits_pixel.dims[0]; ++y)
            for (std::size_t x = 0; x < d_logits_pixel.dims[1]; ++x) {
                double* cell = &d_logits_cell.data[((y / stride) * cache.wp + x / stride) * c];
                for (std::size_t j = 0; j < c; ++j) cell[j] += d_logits_pixel.at(y, x, j);
            }
        Tensor d_cells = head.backward(cache.cells, d_logits_cell);
        return detail::reshape(d_cells, {cache.hp, cache.wp, head.in_dim});
    }

    // Gradient arriving at the per-pixel probabilities.
    Tensor backward_probs(const Cache& cache, const Tensor& d_probs_pixel) {
        const std::size_t c = head.out_dim;
        Tensor d_logits_pixel({d_probs_pixel.dims[0], d_probs_pixel.dims[1], c});
        for (std::size_t y = 0; y < d_probs_pixel.dims[0]; ++y)
            for (std::size_t x = 0; x < d_probs_pixel.dims[1]; ++x) {
                const double* p = &cache.probs.data[((y / stride) * cache.wp + x / stride) * c];
                const double* g = &d_probs_pixel.data[(y * d_probs_pixel.dims[1] + x) * c];
                double gp = 0.0;
                for (std::size_t j = 0; j < c; ++j) gp += g[j] * p[j];
                for (std::size_t j = 0; j < c; ++j)
                    d_logits_pixel.at(y, x, j) = p[j] * (g[j] - gp);
            }
        return backward_logits(cache, d_logits_pixel);
    }
};

// Per-cell linear map into the clustering space: (H', W', f_d) -> (H', W', f_e).
struct FeatureTransform {
    LinearLayer proj;

    FeatureTransform() = default;
    FeatureTransform(std::size_t f_d, std::size_t f_e) : proj(f_d, f_e) {}

    struct Cache {
        Tensor cells;  // cells x f_d
        std::size_t hp = 0, wp = 0;
    };

    Tensor forward(const Tensor& encoder_map, Cache& cache) const {
        if (encoder_map.rank() != 3 || encoder_map.dims[2] != proj.in_dim)
            throw shape_error("ftn_forward: map " + dims_to_string(encoder_map.dims) + " vs f_d " +
                              std::to_string(proj.in_dim));
        cache.hp = encoder_map.dims[0];
        cache.wp = encoder_map.dims[1];
        cache.cells = detail::reshape(encoder_map, {cache.hp * cache.wp, proj.in_dim});
        Tensor out = proj.forward(cache.cells);
        require_finite(out, "ftn_forward");
        return detail::reshape(out, {cache.hp, cache.wp, proj.out_dim});
    }

    Tensor backward(const Cache& cache, const Tensor& d_emb_map) {
        const Tensor d_out = detail::reshape(d_emb_map, {cache.hp * cache.wp, proj.out_dim});
        Tensor d_cells = proj.backward(cache.cells, d_out);
        return detail::reshape(d_cells, {cache.hp, cache.wp, proj.in_dim});
    }
};

// LS-GAN critic on source-decoder probability maps: four stride-2 patch-linear
// layers with leaky ReLU, mean pool, scalar head. Raw score, no squashing.
struct Discriminator {
    std::vector<LinearLayer> layers;  // 4 strided layers
    LinearLayer head;
    double slope = 0.2;

    Discriminator() = default;
    Discriminator(std::size_t n_classes, std::size_t base, double leaky) : slope(leaky) {
        std::size_t in_ch = n_classes;
        std::size_t out_ch = base;
        for (int i = 0; i < 4; ++i) {
            layers.emplace_back(4 * in_ch, out_ch);
            in_ch = out_ch;
            out_ch *= 2;
        }
        head = LinearLayer(in_ch, 1);
    }

    struct Cache {
        struct Layer {
            Tensor patches;  // cells x 4*in_ch
            Tensor z;        // cells x out_ch
            std::size_t hp = 0, wp = 0;
        };
        std::vector<Layer> per_layer;
        Tensor pooled;        // 1 x ch
        std::size_t n_cells = 0;
    };

    double forward(const Tensor& prob_map, Cache& cache) const {
        if (prob_map.rank() != 3 || prob_map.dims[2] != layers[0].in_dim / 4)
            throw shape_error("discriminator_forward: map " + dims_to_string(prob_map.dims));
        if (prob_map.dims[0] % 16 != 0 || prob_map.dims[1] % 16 != 0)
            throw shape_error("discriminator_forward: H, W must be divisible by 16, got " +
                              dims_to_string(prob_map.dims));
        cache.per_layer.clear();
        Tensor cur = prob_map;
        for (const auto& layer : layers) {
            Cache::Layer lc;
            lc.hp = cur.dims[0] / 2;
            lc.wp = cur.dims[1] / 2;
            lc.patches = detail::patchify(cur, 2);
            lc.z = layer.forward(lc.patches);
            Tensor a = leaky_relu_forward(lc.z, slope);
            cur = detail::reshape(a, {lc.hp, lc.wp, layer.out_dim});
            cache.per_layer.push_back(std::move(lc));
        }
        cache.n_cells = cur.dims[0] * cur.dims[1];
        const std::size_t ch = layers.back().out_dim;
        cache.pooled = Tensor({1, ch});
        for (std::size_t i = 0; i < cache.n_cells; ++i)
            for (std::size_t j = 0; j < ch; ++j) cache.pooled.at(0, j) += cur.data[i * ch + j];
        for (std::size_t j = 0; j < ch; ++j)
            cache.pooled.at(0, j) /= static_cast<double>(cache.n_cells);
        const double score = head.forward(cache.pooled).at(0, 0);
        if (!std::isfinite(score)) throw numeric_error("discriminator_forward: non-finite score");
        return score;
    }

    // d_score flows back to the input probability map. With
    // accumulate_params=false only the input gradient is produced (the
    // generator-side pass must leave discriminator grads untouched).
    Tensor backward(const Cache& cache, double d_score, bool accumulate_params) {
        const std::size_t ch = layers.back().out_dim;
        Tensor d_out({1, 1});
        d_out.at(0, 0) = d_score;
        Tensor d_pooled = accumulate_params ? head.backward(cache.pooled, d_out)
                                            : head.input_grad(d_out);
        Tensor d_cur({cache.per_layer.back().hp, cache.per_layer.back().wp, ch});
        for (std::size_t i = 0; i < cache.n_cells; ++i)
            for (std::size_t j = 0; j < ch; ++j)
                d_cur.data[i * ch + j] = d_pooled.at(0, j) / static_cast<double>(cache.n_cells);
        for (std::size_t li = layers.size(); li-- > 0;) {
            const auto& lc = cache.per_layer[li];
            auto& layer = layers[li];
            Tensor d_a = detail::reshape(d_cur, {lc.hp * lc.wp, layer.out_dim});
            Tensor d_z = leaky_relu_backward(lc.z, d_a, slope);
            Tensor d_patches = accumulate_params ? layer.backward(lc.patches, d_z)
                                                 : layer.input_grad(d_z);
            d_cur = detail::unpatchify(d_patches, lc.hp, lc.wp, 2, layer.in_dim / 4);
        }
        return d_cur;
    }
};

// K trainable center vectors in the embedding space.
struct ClusterBank {
    Tensor centers;       // K x f_e
    Tensor grad_centers;  // K x f_e

    ClusterBank() = default;
    ClusterBank(std::size_t k, std::size_t f_e)
        : centers({k, f_e}), grad_centers({k, f_e}) {}

    std::size_t num_clusters() const { return centers.dims.empty() ? 0 : centers.dims[0]; }
    std::size_t dim() const { return centers.dims.size() < 2 ? 0 : centers.dims[1]; }

    void init(SplitMix64& rng) {
        for (double& v : centers.data) v = rng.uniform(-1.0, 1.0);
        grad_centers.fill(0.0);
        check_norms();
    }

    void check_norms() const {
        const std::size_t k = num_clusters(), d = dim();
        for (std::size_t i = 0; i < k; ++i) {
            double n2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) n2 += centers.at(i, j) * centers.at(i, j);
            if (std::sqrt(n2) <= 1e-8)
                throw numeric_error("cluster center " + std::to_string(i) + " has near-zero norm");
        }
    }
};

// Soft assignment p_k = softmax_k( cos(v, mu_k) / temperature ).
inline Tensor cluster_assign(const ClusterBank& bank, const Tensor& v, double temperature = 1.0) {
    const std::size_t k = bank.num_clusters(), d = bank.dim();
    if (v.size() != d)
        throw shape_error("cluster_assign: v " + dims_to_string(v.dims) + " vs centers " +
                          dims_to_string(bank.centers.dims));
    const double vn = l2_norm(v);
    if (vn <= 1e-8) throw numeric_error("cluster_assign: zero-norm embedding");
    Tensor scores({k});
    for (std::size_t i = 0; i < k; ++i) {
        double cn2 = 0.0, dp = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            cn2 += bank.centers.at(i, j) * bank.centers.at(i, j);
            dp += bank.centers.at(i, j) * v[j];
        }
        scores[i] = dp / (vn * std::sqrt(cn2)) / temperature;
    }
    return softmax(scores);
}

// Batched assignment used by the clustering losses; keeps everything needed
// for the backward pass.
struct ClusterAssignment {
    Tensor cos;  // M x K
    Tensor p;    // M x K
    std::vector<double> v_norms;
    std::vector<double> c_norms;
};

inline ClusterAssignment cluster_assign_batch(const ClusterBank& bank, const Tensor& rows,
                                              double temperature = 1.0) {
    const std::size_t m = rows.dims[0], d = rows.dims[1], k = bank.num_clusters();
    if (d != bank.dim()) throw shape_error("cluster_assign_batch: dim mismatch");
    ClusterAssignment out;
    out.cos = Tensor({m, k});
    out.v_norms.resize(m);
    out.c_norms.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) n2 += bank.centers.at(i, j) * bank.centers.at(i, j);
        out.c_norms[i] = std::sqrt(n2);
        if (out.c_norms[i] <= 1e-8)
            throw numeric_error("cluster_assign_batch: center " + std::to_string(i) +
                                " has near-zero norm");
    }
    Tensor scaled({m, k});
    for (std::size_t r = 0; r < m; ++r) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) n2 += rows.at(r, j) * rows.at(r, j);
        out.v_norms[r] = std::sqrt(n2);
        if (out.v_norms[r] <= 1e-8)
            throw numeric_error("cluster_assign_batch: zero-norm embedding at row " +
                                std::to_string(r));
        for (std::size_t i = 0; i < k; ++i) {
            double dp = 0.0;
            for (std::size_t j = 0; j < d; ++j) dp += rows.at(r, j) * bank.centers.at(i, j);
            out.cos.at(r, i) = dp / (out.v_norms[r] * out.c_norms[i]);
            scaled.at(r, i) = out.cos.at(r, i) / temperature;
        }
    }
    out.p = softmax(scaled);
    return out;
}

// Backward through p = softmax(cos/T): given dL/dp, accumulates center grads
// and adds the embedding-row gradient into d_rows.
inline void cluster_assign_backward(ClusterBank& bank, const Tensor& rows,
                                    const ClusterAssignment& assign, const Tensor& d_p,
                                    Tensor& d_rows, double temperature = 1.0,
                                    bool accumulate_centers = true) {
    const std::size_t m = rows.dims[0], d = rows.dims[1], k = bank.num_clusters();
    Tensor d_cos = softmax_backward(assign.p, d_p);
    for (double& v : d_cos.data) v /= temperature;
    for (std::size_t r = 0; r < m; ++r) {
        const double vn = assign.v_norms[r];
        for (std::size_t i = 0; i < k; ++i) {
            const double g = d_cos.at(r, i);
            if (g == 0.0) continue;
            const double cn = assign.c_norms[i];
            const double cosv = assign.cos.at(r, i);
            for (std::size_t j = 0; j < d; ++j) {
                const double vj = rows.at(r, j);
                const double cj = bank.centers.at(i, j);
                d_rows.at(r, j) += g * (cj / (vn * cn) - cosv * vj / (vn * vn));
                if (accumulate_centers)
                    bank.grad_centers.at(i, j) += g * (vj / (vn * cn) - cosv * cj / (cn * cn));
            }
        }
    }
}

// Full parameter bundle.
struct Model {
    ModelConfig cfg;
    Encoder encoder;
    Decoder decoder_s, decoder_t;
    FeatureTransform ftn;
    Discriminator disc;
    ClusterBank bank;

    Model() = default;

    explicit Model(const ModelConfig& config) : cfg(config) {
        encoder = Encoder(cfg);
        decoder_s = Decoder(cfg.f_d, cfg.n_source_classes, cfg.stride);
        decoder_t = Decoder(cfg.f_d, cfg.n_target_classes, cfg.stride);
        ftn = FeatureTransform(cfg.f_d, cfg.f_e);
        disc = Discriminator(cfg.n_source_classes, cfg.disc_base, cfg.leaky_slope);
        bank = ClusterBank(cfg.num_clusters, cfg.f_e);
    }

    // Deterministic init: one stream, fixed layer order.
    void init(std::uint64_t seed) {
        SplitMix64 rng = stream_for(seed, 0x0de1);
        encoder.l1.init(rng);
        encoder.l2.init(rng);
        decoder_s.head.init(rng);
        decoder_t.head.init(rng);
        ftn.proj.init(rng);
        for (auto& l : disc.layers) l.init(rng);
        disc.head.init(rng);
        bank.init(rng);
    }

    // Canonical checkpoint names.
    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out = backbone_params();
        auto d = discriminator_params();
        out.insert(out.end(), d.begin(), d.end());
        out.push_back({"clusters.centers", &bank.centers, &bank.grad_centers});
        return out;
    }

    std::vector<ParamRef> backbone_params() {
        std::vector<ParamRef> out;
        auto add = [&](const std::string& name, LinearLayer& l) {
            out.push_back({name + ".weight", &l.weight, &l.grad_weight});
            out.push_back({name + ".bias", &l.bias, &l.grad_bias});
        };
        add("encoder.l1", encoder.l1);
        add("encoder.l2", encoder.l2);
        add("decoder_s.l1", decoder_s.head);
        add("decoder_t.l1", decoder_t.head);
        add("ftn.l1", ftn.proj);
        return out;
    }

    std::vector<ParamRef> discriminator_params() {
        std::vector<ParamRef> out;
        for (std::size_t i = 0; i < disc.layers.size(); ++i) {
            const std::string name = "disc.l" + std::to_string(i + 1);
            out.push_back({name + ".weight", &disc.layers[i].weight, &disc.layers[i].grad_weight});
            out.push_back({name + ".bias", &disc.layers[i].bias, &disc.layers[i].grad_bias});
        }
        out.push_back({"disc.head.weight", &disc.head.weight, &disc.head.grad_weight});
        out.push_back({"disc.head.bias", &disc.head.bias, &disc.head.grad_bias});
        return out;
    }

    std::vector<ParamRef> center_params() {
        return {{"clusters.centers", &bank.centers, &bank.grad_centers}};
    }
};

}  // namespace c2a
