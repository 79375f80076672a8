#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "c2a/model.hpp"
#include "c2a/tensor.hpp"
#include "c2a/world.hpp"

namespace c2a {

// Per-iteration loss bookkeeping. total follows the combined objective:
// l_sup_s + l_sup_t + lambda_adv*l_adv + lambda_c*(l_c + l_kl).
struct LossReport {
    double l_sup_s = 0.0;
    double l_sup_t = 0.0;
    double l_adv = 0.0;
    double l_disc = 0.0;
    double l_c = 0.0;
    double l_kl = 0.0;
    double lambda_adv = 0.0;
    double lambda_c = 0.0;
    double total = 0.0;
};

inline double total_objective(LossReport& r) {
    r.total = r.l_sup_s + r.l_sup_t + r.lambda_adv * r.l_adv + r.lambda_c * (r.l_c + r.l_kl);
    return r.total;
}

// lambda_c(delta) = 2/(1+e^(-10 delta)) - 1, delta clamped to [0, 1].
inline double lambda_c_schedule(double delta) {
    if (delta < 0.0) delta = 0.0;
    if (delta > 1.0) delta = 1.0;
    return 2.0 / (1.0 + std::exp(-10.0 * delta)) - 1.0;
}

// Pixel cross-entropy on one image. labels hold class ids offset by
// label_base (channel j <-> id label_base + j) or IGNORE_LABEL. Ignored
// pixels drop out of both the numerator and the denominator. d_logits is the
// gradient at the per-pixel logits behind prob_map, already scaled by
// 1/|valid|; callers add any batch factor.
struct SupLoss {
    double loss = 0.0;
    Tensor d_logits;  // H x W x C
    std::size_t valid_pixels = 0;
};

inline SupLoss sup_loss(const Tensor& prob_map, const Tensor& labels, std::uint16_t label_base) {
    const std::size_t h = prob_map.dims[0], w = prob_map.dims[1], c = prob_map.dims[2];
    if (labels.rank() != 2 || labels.dims[0] != h || labels.dims[1] != w)
        throw shape_error("sup_loss: labels " + dims_to_string(labels.dims) + " vs map " +
                          dims_to_string(prob_map.dims));
    SupLoss out;
    out.d_logits = Tensor({h, w, c});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double lv = labels.at(y, x);
            if (lv == static_cast<double>(IGNORE_LABEL)) continue;
            const long idx = static_cast<long>(lv) - static_cast<long>(label_base);
            if (lv != std::floor(lv) || idx < 0 || idx >= static_cast<long>(c))
                throw world_error("sup_loss: label " + std::to_string(lv) +
                                  " outside [" + std::to_string(label_base) + ", " +
                                  std::to_string(label_base + c) + ") at (" + std::to_string(y) +
                                  ", " + std::to_string(x) + ")");
            out.valid_pixels += 1;
        }
    if (out.valid_pixels == 0) return out;  // documented degenerate case
    const double inv = 1.0 / static_cast<double>(out.valid_pixels);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double lv = labels.at(y, x);
            if (lv == static_cast<double>(IGNORE_LABEL)) continue;
            const std::size_t idx = static_cast<std::size_t>(lv) - label_base;
            const double p = std::max(prob_map.at(y, x, idx), 1e-300);
            out.loss -= inv * std::log(p);
            // softmax+CE composite: (p - onehot) / |valid|
            for (std::size_t j = 0; j < c; ++j)
                out.d_logits.at(y, x, j) += inv * (prob_map.at(y, x, j) - (j == idx ? 1.0 : 0.0));
        }
    return out;
}

// Generator-side LS-GAN term: mean over the batch of D(P)^2. Discriminator
// parameters receive no gradient; d_prob_maps carries weight * dL/dP.
struct AdvLoss {
    double loss = 0.0;
    std::vector<Tensor> d_prob_maps;
};

inline AdvLoss adv_loss(Discriminator& disc, const std::vector<Tensor>& prob_maps_aux,
                        double weight = 1.0) {
    AdvLoss out;
    const double inv = prob_maps_aux.empty() ? 0.0 : 1.0 / static_cast<double>(prob_maps_aux.size());
    for (const Tensor& pm : prob_maps_aux) {
        Discriminator::Cache cache;
        const double score = disc.forward(pm, cache);
        out.loss += inv * score * score;
        out.d_prob_maps.push_back(disc.backward(cache, weight * inv * 2.0 * score, false));
    }
    return out;
}

// Discriminator-side LS-GAN term: mean_src D(P)^2 + mean_aux (D(P)-1)^2.
// Probability maps are constants here; only discriminator grads accumulate.
inline double disc_loss(Discriminator& disc, const std::vector<Tensor>& prob_maps_src,
                        const std::vector<Tensor>& prob_maps_aux, double weight = 1.0) {
    double loss = 0.0;
    const double inv_s = prob_maps_src.empty() ? 0.0 : 1.0 / static_cast<double>(prob_maps_src.size());
    for (const Tensor& pm : prob_maps_src) {
        Discriminator::Cache cache;
        const double score = disc.forward(pm, cache);
        loss += inv_s * score * score;
        disc.backward(cache, weight * inv_s * 2.0 * score, true);
    }
    const double inv_a = prob_maps_aux.empty() ? 0.0 : 1.0 / static_cast<double>(prob_maps_aux.size());
    for (const Tensor& pm : prob_maps_aux) {
        Discriminator::Cache cache;
        const double score = disc.forward(pm, cache);
        loss += inv_a * (score - 1.0) * (score - 1.0);
        disc.backward(cache, weight * inv_a * 2.0 * (score - 1.0), true);
    }
    return loss;
}

// (1/M) sum_j -log max_k p_jk, evaluated on a precomputed assignment.
// Adds dL/dp into d_p when given.
inline double cluster_ce_from_assign(const ClusterAssignment& assign, Tensor* d_p) {
    const std::size_t m = assign.p.dims[0];
    const double inv = 1.0 / static_cast<double>(m);
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t star = argmax_row(assign.p, r);
        const double p = std::max(assign.p.at(r, star), 1e-300);
        loss -= inv * std::log(p);
        if (d_p) d_p->at(r, star) -= inv / p;
    }
    return loss;
}

// Spec-level wrapper: assignment plus clustering CE in one call, with
// gradients into both the bank and the embedding rows (all weighted).
struct ClusterLoss {
    double loss = 0.0;
    Tensor d_rows;  // M x f_e
    ClusterAssignment assign;
};

inline ClusterLoss cluster_loss(ClusterBank& bank, const Tensor& rows, double temperature = 1.0,
                                double weight = 1.0) {
    if (rows.rank() != 2 || rows.dims[0] == 0)
        throw shape_error("cluster_loss: want a nonempty M x f_e matrix, got " +
                          dims_to_string(rows.dims));
    ClusterLoss out;
    out.assign = cluster_assign_batch(bank, rows, temperature);
    Tensor d_p({rows.dims[0], bank.num_clusters()});
    out.loss = cluster_ce_from_assign(out.assign, &d_p);
    if (weight != 1.0)
        for (double& v : d_p.data) v *= weight;
    out.d_rows = Tensor({rows.dims[0], rows.dims[1]});
    cluster_assign_backward(bank, rows, out.assign, d_p, out.d_rows, temperature);
    return out;
}

// Auxiliary target distribution: with f_k = sum_j p_jk,
// q_jk = (p_jk^2/f_k) / sum_k' (p_jk'^2/f_k'). Pure function of p; no
// gradient ever flows through it.
inline Tensor target_distribution_q(const Tensor& p_batch) {
    const std::size_t m = p_batch.dims[0], k = p_batch.dims[1];
    std::vector<double> freq(k, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < k; ++j) freq[j] += p_batch.at(r, j);
    Tensor q({m, k});
    for (std::size_t r = 0; r < m; ++r) {
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double num = freq[j] > 0.0 ? p_batch.at(r, j) * p_batch.at(r, j) / freq[j] : 0.0;
            q.at(r, j) = num;
            denom += num;
        }
        if (denom > 0.0)
            for (std::size_t j = 0; j < k; ++j) q.at(r, j) /= denom;
    }
    return q;
}

// (1/M) sum_j sum_k q log(q/p), q held constant. Adds dL/dp into d_p.
inline double kl_from(const Tensor& p_batch, const Tensor& q_batch, Tensor* d_p) {
    require_same_shape(p_batch, q_batch, "kl_loss");
    const std::size_t m = p_batch.dims[0], k = p_batch.dims[1];
    const double inv = 1.0 / static_cast<double>(m);
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < k; ++j) {
            const double q = q_batch.at(r, j);
            if (q <= 0.0) continue;
            const double p = std::max(p_batch.at(r, j), 1e-30);
            loss += inv * q * std::log(q / p);
            if (d_p) d_p->at(r, j) -= inv * q / p;
        }
    return loss;
}

struct KlLoss {
    double loss = 0.0;
    Tensor d_p;
};

inline KlLoss kl_loss(const Tensor& p_batch, const Tensor& q_batch) {
    KlLoss out;
    out.d_p = Tensor({p_batch.dims[0], p_batch.dims[1]});
    out.loss = kl_from(p_batch, q_batch, &out.d_p);
    return out;
}

}  // namespace c2a
