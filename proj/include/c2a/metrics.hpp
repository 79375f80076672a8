#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "c2a/model.hpp"
#include "c2a/tensor.hpp"
#include "c2a/world.hpp"

namespace c2a {

// Rows = ground truth, columns = prediction, both as positions within one
// label space. Ignored pixels are counted separately.
struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::uint64_t> counts;  // num_classes x num_classes
    std::uint64_t ignored = 0;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t c) : num_classes(c), counts(c * c, 0) {}

    std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts[gt * num_classes + pred]; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const {
        return counts[gt * num_classes + pred];
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        ignored += o.ignored;
        return *this;
    }
};

// pred and gt are label grids with ids offset by label_base; gt may contain
// IGNORE_LABEL.
inline void confusion_update(ConfusionMatrix& cm, const Tensor& pred, const Tensor& gt,
                             std::uint16_t label_base) {
    require_same_shape(pred, gt, "confusion_update");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double g = gt[i];
        if (g == static_cast<double>(IGNORE_LABEL)) {
            cm.ignored += 1;
            continue;
        }
        const long gi = static_cast<long>(g) - label_base;
        const long pi = static_cast<long>(pred[i]) - label_base;
        if (gi < 0 || gi >= static_cast<long>(cm.num_classes))
            throw world_error("confusion_update: gt label " + std::to_string(g) + " out of range");
        if (pi < 0 || pi >= static_cast<long>(cm.num_classes))
            throw world_error("confusion_update: pred label " + std::to_string(pred[i]) +
                              " out of range");
        cm.at(static_cast<std::size_t>(gi), static_cast<std::size_t>(pi)) += 1;
    }
}

struct MiouResult {
    std::vector<double> per_class;
    double mean = 0.0;
};

// IoU_c = TP / (TP + FP + FN); classes absent from both gt and pred score 0
// and stay in the mean.
inline MiouResult miou(const ConfusionMatrix& cm) {
    MiouResult out;
    out.per_class.resize(cm.num_classes, 0.0);
    for (std::size_t c = 0; c < cm.num_classes; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < cm.num_classes; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t uni = row + col - tp;
        out.per_class[c] = uni == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(uni);
        out.mean += out.per_class[c];
    }
    if (cm.num_classes > 0) out.mean /= static_cast<double>(cm.num_classes);
    return out;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
    std::uint64_t correct = 0, total = 0;
    for (std::size_t g = 0; g < cm.num_classes; ++g)
        for (std::size_t p = 0; p < cm.num_classes; ++p) {
            total += cm.at(g, p);
            if (g == p) correct += cm.at(g, p);
        }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// Non-canonical averaging variant: mean over images of that image's own mIoU
// (classes appearing in neither gt nor pred of the image are skipped there).
inline double miou_per_image(const std::vector<ConfusionMatrix>& per_image) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& cm : per_image) {
        double s = 0.0;
        std::size_t present = 0;
        const MiouResult r = miou(cm);
        for (std::size_t c = 0; c < cm.num_classes; ++c) {
            std::uint64_t row = 0, col = 0;
            for (std::size_t j = 0; j < cm.num_classes; ++j) {
                row += cm.at(c, j);
                col += cm.at(j, c);
            }
            if (row + col > 0) {
                s += r.per_class[c];
                present += 1;
            }
        }
        if (present > 0) {
            sum += s / static_cast<double>(present);
            n += 1;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Argmax-class prediction over a dataset through encoder + decoder.
inline ConfusionMatrix evaluate_dataset(Model& model, const DomainDataset& ds, Decoder& decoder) {
    const std::size_t c = decoder.head.out_dim;
    const std::uint16_t base = ds.label_space.classes.front().id;
    ConfusionMatrix cm(c);
    const std::size_t h = ds.images.dims[1], w = ds.images.dims[2];
    for (std::size_t n = 0; n < ds.num_images(); ++n) {
        Tensor image({h, w, 3});
        std::copy_n(&ds.images.data[n * h * w * 3], h * w * 3, image.data.begin());
        Encoder::Cache ec;
        Decoder::Cache dc;
        const Tensor map = model.encoder.forward(image, ec);
        const Tensor probs = decoder.forward(map, dc);
        Tensor pred({h, w});
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < c; ++j)
                    if (probs.at(y, x, j) > probs.at(y, x, best)) best = j;
                pred.at(y, x) = static_cast<double>(base + best);
            }
        Tensor gt({h, w});
        std::copy_n(&ds.labels.data[n * h * w], h * w, gt.data.begin());
        confusion_update(cm, pred, gt, base);
    }
    return cm;
}

// Per-(class, domain) histograms over argmax clusters of embedding cells,
// pairwise cosine co-occupancy, cluster purity, and the modal-cluster
// occupancy fraction. Cells take the majority label of their patch.
struct ClusterDiagnostics {
    // key: (domain tag, class id) -> normalized histogram over clusters
    std::map<std::pair<std::string, std::uint16_t>, std::vector<double>> histograms;
    double purity = 0.0;
    double largest_cluster_frac = 0.0;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dp = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dp += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dp / (std::sqrt(na) * std::sqrt(nb));
}

inline ClusterDiagnostics cluster_diagnostics(Model& model,
                                              const std::vector<const DomainDataset*>& domains) {
    ClusterDiagnostics out;
    const std::size_t k = model.bank.num_clusters();
    std::map<std::pair<std::string, std::uint16_t>, std::vector<double>> raw;
    std::vector<double> cluster_totals(k, 0.0);
    // cluster -> class-id -> count, for purity
    std::map<std::size_t, std::map<std::uint16_t, double>> members;
    const std::size_t s = model.encoder.stride;
    for (const DomainDataset* ds : domains) {
        const std::string dom = domain_tag_name(ds->domain_tag);
        const std::size_t h = ds->images.dims[1], w = ds->images.dims[2];
        for (std::size_t n = 0; n < ds->num_images(); ++n) {
            Tensor image({h, w, 3});
            std::copy_n(&ds->images.data[n * h * w * 3], h * w * 3, image.data.begin());
            Encoder::Cache ec;
            FeatureTransform::Cache fc;
            const Tensor map = model.encoder.forward(image, ec);
            const Tensor emb = model.ftn.forward(map, fc);
            const Tensor rows = detail::reshape(emb, {emb.dims[0] * emb.dims[1], emb.dims[2]});
            const ClusterAssignment assign =
                cluster_assign_batch(model.bank, rows, model.cfg.assign_temperature);
            for (std::size_t py = 0; py < emb.dims[0]; ++py)
                for (std::size_t px = 0; px < emb.dims[1]; ++px) {
                    // majority label of the s x s patch, ties to the lowest id
                    std::map<std::uint16_t, std::size_t> votes;
                    for (std::size_t dy = 0; dy < s; ++dy)
                        for (std::size_t dx = 0; dx < s; ++dx) {
                            const double lv = ds->labels.at(n, py * s + dy, px * s + dx);
                            if (lv == static_cast<double>(IGNORE_LABEL)) continue;
                            votes[static_cast<std::uint16_t>(lv)] += 1;
                        }
                    if (votes.empty()) continue;
                    std::uint16_t label = votes.begin()->first;
                    std::size_t best = votes.begin()->second;
                    for (const auto& [id, cnt] : votes)
                        if (cnt > best) { label = id; best = cnt; }
                    const std::size_t cluster = argmax_row(assign.p, py * emb.dims[1] + px);
                    auto& hist = raw[{dom, label}];
                    if (hist.empty()) hist.assign(k, 0.0);
                    hist[cluster] += 1.0;
                    cluster_totals[cluster] += 1.0;
                    members[cluster][label] += 1.0;
                }
        }
    }
    double total = 0.0;
    for (double v : cluster_totals) total += v;
    for (auto& [key, hist] : raw) {
        double sum = 0.0;
        for (double v : hist) sum += v;
        if (sum > 0.0)
            for (double& v : hist) v /= sum;
        out.histograms[key] = hist;
    }
    if (total > 0.0) {
        double largest = 0.0, purity_sum = 0.0;
        std::size_t occupied = 0;
        for (std::size_t i = 0; i < k; ++i) {
            largest = std::max(largest, cluster_totals[i]);
            if (cluster_totals[i] > 0.0) {
                double modal = 0.0;
                for (const auto& [id, cnt] : members[i]) modal = std::max(modal, cnt);
                purity_sum += modal / cluster_totals[i];
                occupied += 1;
            }
        }
        out.largest_cluster_frac = largest / total;
        out.purity = occupied > 0 ? purity_sum / static_cast<double>(occupied) : 0.0;
    }
    return out;
}

// Diagnostics over the clustering inputs: the bridge and unlabeled-target
// splits (their labels exist for diagnostics only).
inline ClusterDiagnostics cluster_diagnostics(Model& model, const World& world) {
    return cluster_diagnostics(model, {&world.bridge, &world.target_unlabeled});
}

// Cosine similarity of two class histograms from the diagnostics, keyed by
// (domain, class id). Missing keys give 0.
inline double co_occupancy(const ClusterDiagnostics& diag, const std::string& dom_a,
                           std::uint16_t class_a, const std::string& dom_b,
                           std::uint16_t class_b) {
    auto ita = diag.histograms.find({dom_a, class_a});
    auto itb = diag.histograms.find({dom_b, class_b});
    if (ita == diag.histograms.end() || itb == diag.histograms.end()) return 0.0;
    return cosine_similarity(ita->second, itb->second);
}

}  // namespace c2a
