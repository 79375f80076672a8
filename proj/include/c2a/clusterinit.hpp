#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "c2a/losses.hpp"
#include "c2a/model.hpp"
#include "c2a/rng.hpp"
#include "c2a/sgd.hpp"
#include "c2a/world.hpp"

namespace c2a {

struct ClusterInitConfig {
    std::size_t pretrain_iters = 500;
    std::size_t batch_source = 4;
    std::size_t batch_target = 4;
    double lr = 2.5e-4;
    double poly_power = 0.9;
    // k-means
    std::size_t kmeans_n_init = 10;
    std::size_t kmeans_max_iter = 300;
    double kmeans_tol = 1e-9;
    // PCA power iteration
    double pca_tol = 1e-10;
    std::size_t pca_max_iter = 10000;
};

// Supervised warm-up on the labeled source and target splits only; the
// adversarial and clustering branches stay untouched.
inline void pretrain_supervised(Model& model, const DomainDataset& source,
                                const DomainDataset& target_labeled,
                                const ClusterInitConfig& cfg, std::uint64_t seed) {
    if (source.num_images() == 0 || target_labeled.num_images() == 0)
        throw world_error("pretrain_supervised: empty labeled set");
    SplitMix64 sampler = stream_for(seed, 0x9e7a);
    auto params = model.backbone_params();
    SgdState state{cfg.lr, cfg.poly_power, 0, std::max<std::uint64_t>(cfg.pretrain_iters, 1)};
    const std::uint16_t src_base = source.label_space.classes.front().id;
    const std::uint16_t tgt_base = target_labeled.label_space.classes.front().id;
    for (std::size_t it = 0; it < cfg.pretrain_iters; ++it) {
        zero_grads(params);
        auto run_branch = [&](const DomainDataset& ds, Decoder& dec, std::size_t batch,
                              std::uint16_t base) {
            const double inv = 1.0 / static_cast<double>(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t n = sampler.index(ds.num_images());
                const Tensor image = ds.image_at(n);
                Encoder::Cache ec;
                Decoder::Cache dc;
                const Tensor map = model.encoder.forward(image, ec);
                const Tensor probs = dec.forward(map, dc);
                SupLoss sl = sup_loss(probs, ds.labels_at(n), base);
                for (double& v : sl.d_logits.data) v *= inv;
                const Tensor d_map = dec.backward_logits(dc, sl.d_logits);
                model.encoder.backward(ec, d_map);
            }
        };
        run_branch(source, model.decoder_s, cfg.batch_source, src_base);
        run_branch(target_labeled, model.decoder_t, cfg.batch_target, tgt_base);
        sgd_step(params, state);
    }
}

// Every encoder-map cell of every image, image-major then row-major: M x f_d.
inline Tensor collect_features(Model& model, const DomainDataset& ds) {
    const std::size_t f_d = model.encoder.l2.out_dim;
    const std::size_t hp = ds.images.dims[1] / model.encoder.stride;
    const std::size_t wp = ds.images.dims[2] / model.encoder.stride;
    Tensor rows({ds.num_images() * hp * wp, f_d});
    for (std::size_t n = 0; n < ds.num_images(); ++n) {
        Encoder::Cache ec;
        const Tensor map = model.encoder.forward(ds.image_at(n), ec);
        std::copy_n(map.data.begin(), hp * wp * f_d, &rows.data[n * hp * wp * f_d]);
    }
    return rows;
}

struct PcaResult {
    Tensor projection;  // f_e x f_d, rows orthonormal
    Tensor mean;        // f_d
    std::vector<double> explained;  // eigenvalues, non-increasing
};

struct pca_error : std::runtime_error {
    explicit pca_error(const std::string& msg) : std::runtime_error("pca error: " + msg) {}
};

// Top-out_dim eigenvectors of the sample covariance via power iteration with
// deflation. Sign convention: largest-magnitude coordinate positive.
inline PcaResult pca_fit(const Tensor& x, std::size_t out_dim, const ClusterInitConfig& cfg = {},
                         std::uint64_t seed = 17) {
    const std::size_t m = x.dims[0], d = x.dims[1];
    if (m < out_dim || out_dim > d)
        throw pca_error("need M >= out_dim and out_dim <= dim, got M=" + std::to_string(m) +
                        " dim=" + std::to_string(d) + " out=" + std::to_string(out_dim));
    PcaResult res;
    res.mean = Tensor({d});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < d; ++j) res.mean[j] += x.at(r, j);
    for (std::size_t j = 0; j < d; ++j) res.mean[j] /= static_cast<double>(m);

    // covariance, 1/(M-1)
    Tensor cov({d, d});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < d; ++i) {
            const double xi = x.at(r, i) - res.mean[i];
            for (std::size_t j = i; j < d; ++j)
                cov.at(i, j) += xi * (x.at(r, j) - res.mean[j]);
        }
    const double norm = m > 1 ? 1.0 / static_cast<double>(m - 1) : 1.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov.at(i, j) *= norm;
            cov.at(j, i) = cov.at(i, j);
        }

    SplitMix64 rng = stream_for(seed, 0x9ca);
    res.projection = Tensor({out_dim, d});
    double top_eigenvalue = 0.0;
    for (std::size_t comp = 0; comp < out_dim; ++comp) {
        std::vector<double> v(d), next(d);
        for (double& e : v) e = rng.uniform(-1.0, 1.0);
        // re-orthogonalize against found components every sweep
        for (std::size_t it = 0; it < cfg.pca_max_iter; ++it) {
            for (std::size_t prev = 0; prev < comp; ++prev) {
                double dp = 0.0;
                for (std::size_t j = 0; j < d; ++j) dp += v[j] * res.projection.at(prev, j);
                for (std::size_t j = 0; j < d; ++j) v[j] -= dp * res.projection.at(prev, j);
            }
            double nv = 0.0;
            for (double e : v) nv += e * e;
            nv = std::sqrt(nv);
            if (nv < 1e-300) {
                for (double& e : v) e = rng.uniform(-1.0, 1.0);
                continue;
            }
            for (double& e : v) e /= nv;
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += cov.at(i, j) * v[j];
                next[i] = acc;
            }
            double nn = 0.0;
            for (double e : next) nn += e * e;
            nn = std::sqrt(nn);
            if (nn < 1e-300) break;  // v lies in the null space
            double diff = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double nj = next[j] / nn;
                diff += (nj - v[j]) * (nj - v[j]);
                v[j] = nj;
            }
            if (std::sqrt(diff) < cfg.pca_tol) break;
        }
        double lambda = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += cov.at(i, j) * v[j];
            lambda += v[i] * acc;
        }
        if (comp == 0) top_eigenvalue = lambda;
        if (lambda <= 1e-12 * std::max(top_eigenvalue, 1e-300) || lambda <= 0.0)
            throw pca_error("rank deficiency: achieved rank " + std::to_string(comp) + " of " +
                            std::to_string(out_dim));
        // sign: largest-|coordinate| positive
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0.0)
            for (double& e : v) e = -e;
        for (std::size_t j = 0; j < d; ++j) res.projection.at(comp, j) = v[j];
        res.explained.push_back(lambda);
        // deflate
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov.at(i, j) -= lambda * v[i] * v[j];
    }
    return res;
}

struct KmeansResult {
    Tensor centers;  // K x dim
    std::vector<std::size_t> assignments;
    double objective = 0.0;  // sum of squared distances to assigned centers
    std::vector<double> objective_trace;  // per Lloyd iteration of the winning run
};

namespace detail {

inline double sq_dist(const Tensor& x, std::size_t row, const Tensor& centers, std::size_t c) {
    const std::size_t d = x.dims[1];
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = x.at(row, j) - centers.at(c, j);
        acc += diff * diff;
    }
    return acc;
}

inline KmeansResult kmeans_single(const Tensor& x, std::size_t k, SplitMix64& rng,
                                  const ClusterInitConfig& cfg) {
    const std::size_t m = x.dims[0], d = x.dims[1];
    KmeansResult res;
    res.centers = Tensor({k, d});

    // k-means++ seeding
    std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
    std::size_t first = rng.index(m);
    for (std::size_t j = 0; j < d; ++j) res.centers.at(0, j) = x.at(first, j);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            min_d2[r] = std::min(min_d2[r], sq_dist(x, r, res.centers, c - 1));
            total += min_d2[r];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                acc += min_d2[r];
                if (acc >= target) { pick = r; break; }
            }
        } else {
            pick = rng.index(m);
        }
        for (std::size_t j = 0; j < d; ++j) res.centers.at(c, j) = x.at(pick, j);
    }

    res.assignments.assign(m, 0);
    double prev_obj = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < cfg.kmeans_max_iter; ++it) {
        // assignment step, ties to the lowest index
        double obj = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            std::size_t best = 0;
            double bd = sq_dist(x, r, res.centers, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double dd = sq_dist(x, r, res.centers, c);
                if (dd < bd) { bd = dd; best = c; }
            }
            res.assignments[r] = best;
            obj += bd;
        }
        if (obj > prev_obj + 1e-12)
            throw numeric_error("kmeans_lloyd: objective increased from " +
                                std::to_string(prev_obj) + " to " + std::to_string(obj));
        res.objective_trace.push_back(obj);
        res.objective = obj;
        if (prev_obj - obj < cfg.kmeans_tol) break;
        prev_obj = obj;

        // centroid step
        Tensor sums({k, d});
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t r = 0; r < m; ++r) {
            counts[res.assignments[r]] += 1;
            for (std::size_t j = 0; j < d; ++j) sums.at(res.assignments[r], j) += x.at(r, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed to the point farthest from its assigned center
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t r = 0; r < m; ++r) {
                    const double dd = sq_dist(x, r, res.centers, res.assignments[r]);
                    if (dd > fd) { fd = dd; far = r; }
                }
                for (std::size_t j = 0; j < d; ++j) res.centers.at(c, j) = x.at(far, j);
            } else {
                for (std::size_t j = 0; j < d; ++j)
                    res.centers.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
            }
        }
    }
    // final assignment/objective for the last centroid update
    double obj = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        std::size_t best = 0;
        double bd = sq_dist(x, r, res.centers, 0);
        for (std::size_t c = 1; c < k; ++c) {
            const double dd = sq_dist(x, r, res.centers, c);
            if (dd < bd) { bd = dd; best = c; }
        }
        res.assignments[r] = best;
        obj += bd;
    }
    if (obj <= res.objective) {
        res.objective = obj;
        res.objective_trace.push_back(obj);
    }
    return res;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding, restarted kmeans_n_init times
// from the seed stream; best final objective wins.
inline KmeansResult kmeans_lloyd(const Tensor& x, std::size_t k, std::uint64_t seed,
                                 const ClusterInitConfig& cfg = {}) {
    const std::size_t m = x.dims[0];
    if (m < k) throw world_error("kmeans_lloyd: need M >= K");
    KmeansResult best;
    best.objective = std::numeric_limits<double>::infinity();
    for (std::size_t run = 0; run < std::max<std::size_t>(cfg.kmeans_n_init, 1); ++run) {
        SplitMix64 rng = stream_for(seed, 0x6b6d + run);
        KmeansResult r = detail::kmeans_single(x, k, rng, cfg);
        if (r.objective < best.objective) best = std::move(r);
    }
    return best;
}

// Initialize the feature transform with the PCA map (weight = P, bias =
// -P*mean) so that F(E(x)) at step 0 reproduces the projected features the
// centers were fit on, then install the k-means centers.
inline void install_centers(Model& model, const PcaResult& pca, const Tensor& centers) {
    if (pca.projection.dims != model.ftn.proj.weight.dims)
        throw shape_error("install_centers: projection " + dims_to_string(pca.projection.dims) +
                          " vs ftn weight " + dims_to_string(model.ftn.proj.weight.dims));
    if (centers.dims != model.bank.centers.dims)
        throw shape_error("install_centers: centers " + dims_to_string(centers.dims) + " vs bank " +
                          dims_to_string(model.bank.centers.dims));
    model.ftn.proj.weight = pca.projection;
    const std::size_t f_e = model.ftn.proj.out_dim, f_d = model.ftn.proj.in_dim;
    for (std::size_t o = 0; o < f_e; ++o) {
        double acc = 0.0;
        for (std::size_t j = 0; j < f_d; ++j) acc += pca.projection.at(o, j) * pca.mean[j];
        model.ftn.proj.bias[o] = -acc;
    }
    model.bank.centers = centers;
    model.bank.check_norms();
}

}  // namespace c2a
