#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2a/checkpoint.hpp"
#include "c2a/clusterinit.hpp"
#include "c2a/losses.hpp"
#include "c2a/metrics.hpp"
#include "c2a/model.hpp"
#include "c2a/sgd.hpp"
#include "c2a/world.hpp"

namespace c2a {

enum class TrainMode { c2a_full, lambda_c_zero, target_only, finetune, source_only };

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::c2a_full: return "c2a_full";
        case TrainMode::lambda_c_zero: return "lambda_c_zero";
        case TrainMode::target_only: return "target_only";
        case TrainMode::finetune: return "finetune";
        case TrainMode::source_only: return "source_only";
    }
    return "?";
}

inline TrainMode train_mode_from_name(const std::string& s) {
    if (s == "c2a_full") return TrainMode::c2a_full;
    if (s == "lambda_c_zero") return TrainMode::lambda_c_zero;
    if (s == "target_only") return TrainMode::target_only;
    if (s == "finetune") return TrainMode::finetune;
    if (s == "source_only") return TrainMode::source_only;
    throw world_error("unknown mode '" + s + "'");
}

struct TrainConfig {
    std::uint64_t max_iter = 2000;
    std::uint64_t stop_iter = 0;  // 0 = run to max_iter; schedules always use max_iter
    std::size_t eval_interval = 250;
    std::size_t batch_source = 4;
    std::size_t batch_target_labeled = 4;
    std::size_t batch_bridge = 4;
    std::size_t batch_target_unlabeled = 4;
    double lr_backbone = 2.5e-4;
    double lr_centers = 2.5e-5;  // backbone/10; centers start near their init and should stay close
    double lr_disc = 1e-4;
    double poly_power = 0.9;
    double lambda_adv = 0.001;
    bool use_kl_loss = true;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::c2a_full;
    ModelConfig model;
    ClusterInitConfig init;
    std::string resume_from;  // checkpoint dir; config-file-only key
};

// Which loss branches a mode trains.
struct ActiveBranches {
    bool sup_s = false, sup_t = false, adv = false, cluster = false, disc = false;
};

inline ActiveBranches branches_for(TrainMode mode) {
    switch (mode) {
        case TrainMode::c2a_full: return {true, true, true, true, true};
        case TrainMode::lambda_c_zero: return {true, true, true, false, true};
        case TrainMode::target_only: return {false, true, false, false, false};
        case TrainMode::source_only: return {true, false, false, false, false};
        case TrainMode::finetune: return {false, true, false, false, false};  // target phase
    }
    return {};
}

struct LabeledBatch {
    std::vector<Tensor> images;
    std::vector<Tensor> labels;
    std::uint16_t label_base = 0;
};

// Bridge and unlabeled-target batches carry no label tensor by construction;
// no loss can read what is not there.
struct UnlabeledBatch {
    std::vector<Tensor> images;
};

struct StepBatches {
    LabeledBatch source;
    LabeledBatch target_labeled;
    UnlabeledBatch bridge;
    UnlabeledBatch target_unlabeled;
};

// One alternating step: (a) supervised + adversarial + clustering gradients
// into {encoder, decoders, ftn} and the cluster bank, one SGD step each;
// (b) probability maps recomputed as constants, one SGD step on the
// discriminator.
inline LossReport train_step(Model& model, const StepBatches& batches, const TrainConfig& cfg,
                             std::uint64_t iter, SgdState& backbone_state,
                             SgdState& centers_state, SgdState& disc_state) {
    const ActiveBranches act = branches_for(cfg.mode);
    if (act.sup_s && batches.source.images.empty())
        throw world_error("train_step: mode needs a source batch");
    if (act.sup_t && batches.target_labeled.images.empty())
        throw world_error("train_step: mode needs a labeled target batch");
    if ((act.adv || act.cluster) && batches.bridge.images.empty())
        throw world_error("train_step: mode needs a bridge batch");
    if (act.cluster && batches.target_unlabeled.images.empty())
        throw world_error("train_step: mode needs an unlabeled target batch");

    LossReport rep;
    rep.lambda_adv = act.adv ? cfg.lambda_adv : 0.0;
    const double delta = static_cast<double>(iter) / static_cast<double>(cfg.max_iter);
    rep.lambda_c = act.cluster ? lambda_c_schedule(delta) : 0.0;

    auto backbone = model.backbone_params();
    auto centers = model.center_params();
    zero_grads(backbone);
    zero_grads(centers);

    // supervised branches
    auto run_sup = [&](const LabeledBatch& batch, Decoder& dec, double& loss_slot) {
        const double inv = 1.0 / static_cast<double>(batch.images.size());
        for (std::size_t b = 0; b < batch.images.size(); ++b) {
            Encoder::Cache ec;
            Decoder::Cache dc;
            const Tensor map = model.encoder.forward(batch.images[b], ec);
            const Tensor probs = dec.forward(map, dc);
            SupLoss sl = sup_loss(probs, batch.labels[b], batch.label_base);
            loss_slot += inv * sl.loss;
            for (double& v : sl.d_logits.data) v *= inv;
            const Tensor d_map = dec.backward_logits(dc, sl.d_logits);
            model.encoder.backward(ec, d_map);
        }
    };
    if (act.sup_s) run_sup(batches.source, model.decoder_s, rep.l_sup_s);
    if (act.sup_t) run_sup(batches.target_labeled, model.decoder_t, rep.l_sup_t);

    // adversarial + clustering share the bridge encoder passes
    if (act.adv || act.cluster) {
        const std::size_t n_bridge = batches.bridge.images.size();
        const std::size_t n_unlab = act.cluster ? batches.target_unlabeled.images.size() : 0;
        std::vector<Encoder::Cache> enc_caches(n_bridge + n_unlab);
        std::vector<Tensor> maps(n_bridge + n_unlab);
        std::vector<Tensor> d_maps(n_bridge + n_unlab);
        for (std::size_t b = 0; b < n_bridge; ++b)
            maps[b] = model.encoder.forward(batches.bridge.images[b], enc_caches[b]);
        for (std::size_t u = 0; u < n_unlab; ++u)
            maps[n_bridge + u] =
                model.encoder.forward(batches.target_unlabeled.images[u], enc_caches[n_bridge + u]);
        for (std::size_t i = 0; i < d_maps.size(); ++i)
            d_maps[i] = Tensor(maps[i].dims);

        if (act.adv) {
            std::vector<Decoder::Cache> dec_caches(n_bridge);
            std::vector<Tensor> prob_maps;
            for (std::size_t b = 0; b < n_bridge; ++b)
                prob_maps.push_back(model.decoder_s.forward(maps[b], dec_caches[b]));
            AdvLoss adv = adv_loss(model.disc, prob_maps, cfg.lambda_adv);
            rep.l_adv = adv.loss;
            for (std::size_t b = 0; b < n_bridge; ++b) {
                const Tensor d_map = model.decoder_s.backward_probs(dec_caches[b], adv.d_prob_maps[b]);
                for (std::size_t i = 0; i < d_map.size(); ++i) d_maps[b][i] += d_map[i];
            }
        }

        if (act.cluster) {
            const std::size_t hp = maps[0].dims[0], wp = maps[0].dims[1];
            const std::size_t cells = hp * wp;
            const std::size_t f_e = model.ftn.proj.out_dim;
            std::vector<FeatureTransform::Cache> ftn_caches(maps.size());
            Tensor rows({maps.size() * cells, f_e});
            for (std::size_t i = 0; i < maps.size(); ++i) {
                const Tensor emb = model.ftn.forward(maps[i], ftn_caches[i]);
                std::copy_n(emb.data.begin(), cells * f_e, &rows.data[i * cells * f_e]);
            }
            const ClusterAssignment assign =
                cluster_assign_batch(model.bank, rows, model.cfg.assign_temperature);
            Tensor d_p({rows.dims[0], model.bank.num_clusters()});
            rep.l_c = cluster_ce_from_assign(assign, &d_p);
            if (cfg.use_kl_loss) {
                const Tensor q = target_distribution_q(assign.p);
                rep.l_kl = kl_from(assign.p, q, &d_p);
            }
            if (rep.lambda_c != 1.0)
                for (double& v : d_p.data) v *= rep.lambda_c;
            Tensor d_rows({rows.dims[0], f_e});
            cluster_assign_backward(model.bank, rows, assign, d_p, d_rows,
                                    model.cfg.assign_temperature);
            for (std::size_t i = 0; i < maps.size(); ++i) {
                Tensor d_emb({hp, wp, f_e});
                std::copy_n(&d_rows.data[i * cells * f_e], cells * f_e, d_emb.data.begin());
                const Tensor d_map = model.ftn.backward(ftn_caches[i], d_emb);
                for (std::size_t j = 0; j < d_map.size(); ++j) d_maps[i][j] += d_map[j];
            }
        }

        for (std::size_t i = 0; i < maps.size(); ++i)
            model.encoder.backward(enc_caches[i], d_maps[i]);
    }

    sgd_step(backbone, backbone_state);
    sgd_step(centers, centers_state);

    if (act.disc) {
        auto disc_params = model.discriminator_params();
        zero_grads(disc_params);
        std::vector<Tensor> src_maps, aux_maps;
        for (const Tensor& img : batches.source.images) {
            Encoder::Cache ec;
            Decoder::Cache dc;
            src_maps.push_back(model.decoder_s.forward(model.encoder.forward(img, ec), dc));
        }
        for (const Tensor& img : batches.bridge.images) {
            Encoder::Cache ec;
            Decoder::Cache dc;
            aux_maps.push_back(model.decoder_s.forward(model.encoder.forward(img, ec), dc));
        }
        rep.l_disc = disc_loss(model.disc, src_maps, aux_maps);
        sgd_step(disc_params, disc_state);
    }

    total_objective(rep);
    return rep;
}

// Draws per-domain minibatches from seeded streams; owns the optimizer state.
struct Trainer {
    const World* world = nullptr;
    TrainConfig cfg;
    Model model;
    SgdState backbone_state, centers_state, disc_state;
    SplitMix64 sample_source, sample_target_labeled, sample_bridge, sample_target_unlabeled;
    std::uint64_t iter = 0;
    LossReport last_report;

    Trainer(const World& w, const TrainConfig& c, Model m)
        : world(&w), cfg(c), model(std::move(m)) {
        backbone_state = {cfg.lr_backbone, cfg.poly_power, 0, cfg.max_iter};
        centers_state = {cfg.lr_centers, cfg.poly_power, 0, cfg.max_iter};
        disc_state = {cfg.lr_disc, cfg.poly_power, 0, cfg.max_iter};
        sample_source = stream_for(cfg.seed, 0xa1);
        sample_target_labeled = stream_for(cfg.seed, 0xa2);
        sample_bridge = stream_for(cfg.seed, 0xa3);
        sample_target_unlabeled = stream_for(cfg.seed, 0xa4);
    }

    StepBatches draw_batches() {
        const ActiveBranches act = branches_for(cfg.mode);
        StepBatches out;
        auto draw_labeled = [](const DomainDataset& ds, std::size_t batch, SplitMix64& rng,
                               LabeledBatch& dst) {
            if (ds.num_images() == 0) return;
            dst.label_base = ds.label_space.classes.front().id;
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t n = rng.index(ds.num_images());
                dst.images.push_back(ds.image_at(n));
                dst.labels.push_back(ds.labels_at(n));
            }
        };
        auto draw_unlabeled = [](const DomainDataset& ds, std::size_t batch, SplitMix64& rng,
                                 UnlabeledBatch& dst) {
            if (ds.num_images() == 0) return;
            for (std::size_t b = 0; b < batch; ++b)
                dst.images.push_back(ds.image_at(rng.index(ds.num_images())));
        };
        if (act.sup_s || act.disc)
            draw_labeled(world->source, cfg.batch_source, sample_source, out.source);
        if (act.sup_t)
            draw_labeled(world->target_labeled, cfg.batch_target_labeled, sample_target_labeled,
                         out.target_labeled);
        if (act.adv || act.cluster || act.disc)
            draw_unlabeled(world->bridge, cfg.batch_bridge, sample_bridge, out.bridge);
        if (act.cluster)
            draw_unlabeled(world->target_unlabeled, cfg.batch_target_unlabeled,
                           sample_target_unlabeled, out.target_unlabeled);
        return out;
    }

    LossReport step() {
        const StepBatches batches = draw_batches();
        last_report =
            train_step(model, batches, cfg, iter, backbone_state, centers_state, disc_state);
        iter += 1;
        return last_report;
    }

    nlohmann::json eval_record() {
        nlohmann::json rec;
        rec["iter"] = iter;
        rec["mode"] = train_mode_name(cfg.mode);
        rec["seed"] = cfg.seed;
        rec["l_sup_s"] = last_report.l_sup_s;
        rec["l_sup_t"] = last_report.l_sup_t;
        rec["l_adv"] = last_report.l_adv;
        rec["l_disc"] = last_report.l_disc;
        rec["l_c"] = last_report.l_c;
        rec["l_kl"] = last_report.l_kl;
        rec["lambda_adv"] = last_report.lambda_adv;
        rec["lambda_c"] = last_report.lambda_c;
        rec["total"] = last_report.total;
        const ConfusionMatrix cm = evaluate_dataset(model, world->target_val, model.decoder_t);
        const MiouResult m = miou(cm);
        rec["miou"] = m.mean;
        rec["pixel_acc"] = pixel_accuracy(cm);
        rec["per_class_iou"] = m.per_class;
        const ClusterDiagnostics diag = cluster_diagnostics(model, *world);
        rec["largest_cluster_frac"] = diag.largest_cluster_frac;
        return rec;
    }

    nlohmann::json state_meta() const {
        nlohmann::json meta;
        meta["iter"] = iter;
        meta["mode"] = train_mode_name(cfg.mode);
        meta["seed"] = cfg.seed;
        meta["backbone_iter"] = backbone_state.iter;
        meta["centers_iter"] = centers_state.iter;
        meta["disc_iter"] = disc_state.iter;
        meta["rng_source"] = sample_source.state;
        meta["rng_target_labeled"] = sample_target_labeled.state;
        meta["rng_bridge"] = sample_bridge.state;
        meta["rng_target_unlabeled"] = sample_target_unlabeled.state;
        return meta;
    }

    void restore_state(const nlohmann::json& meta) {
        iter = meta.at("iter").get<std::uint64_t>();
        backbone_state.iter = meta.at("backbone_iter").get<std::uint64_t>();
        centers_state.iter = meta.at("centers_iter").get<std::uint64_t>();
        disc_state.iter = meta.at("disc_iter").get<std::uint64_t>();
        sample_source.state = meta.at("rng_source").get<std::uint64_t>();
        sample_target_labeled.state = meta.at("rng_target_labeled").get<std::uint64_t>();
        sample_bridge.state = meta.at("rng_bridge").get<std::uint64_t>();
        sample_target_unlabeled.state = meta.at("rng_target_unlabeled").get<std::uint64_t>();
    }
};

struct RunResult {
    Model model;
    std::vector<nlohmann::json> records;

    RunResult() = default;
    explicit RunResult(Model m) : model(std::move(m)) {}

    double final_miou() const {
        return records.empty() ? 0.0 : records.back().at("miou").get<double>();
    }
};

// Full training run: evaluation records at iter 0, every eval_interval, and
// the final iter; optional JSONL + checkpoint output; optional resume from a
// previous checkpoint of the same configuration.
inline RunResult run_training(const World& world, TrainConfig cfg, Model initial_model,
                              const std::filesystem::path& out_dir = {}) {
    if (cfg.mode == TrainMode::finetune) {
        // source-converged warm start, then the labeled-target phase
        TrainConfig source_cfg = cfg;
        source_cfg.mode = TrainMode::source_only;
        source_cfg.resume_from.clear();
        RunResult source_run = run_training(world, source_cfg, std::move(initial_model));
        initial_model = std::move(source_run.model);
    }

    Trainer trainer(world, cfg, std::move(initial_model));
    if (!cfg.resume_from.empty()) {
        const Checkpoint ck = load_checkpoint(cfg.resume_from);
        ck.apply(trainer.model);
        trainer.restore_state(ck.manifest.at("meta"));
    }

    std::ofstream jsonl;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        jsonl.open(out_dir / "metrics.jsonl", trainer.iter == 0 ? std::ios::trunc : std::ios::app);
        if (!jsonl) throw io_error(IoErrorCode::open_failed, (out_dir / "metrics.jsonl").string());
    }
    RunResult result;
    auto emit = [&]() {
        nlohmann::json rec = trainer.eval_record();
        if (jsonl.is_open()) jsonl << rec.dump() << "\n";
        result.records.push_back(std::move(rec));
    };

    const std::uint64_t stop = cfg.stop_iter == 0 ? cfg.max_iter : cfg.stop_iter;
    const std::size_t interval = std::max<std::size_t>(cfg.eval_interval, 1);
    if (trainer.iter == 0) emit();
    while (trainer.iter < stop) {
        trainer.step();
        if (trainer.iter % interval == 0 || trainer.iter == stop) emit();
    }

    if (!out_dir.empty()) {
        jsonl.close();
        save_checkpoint(out_dir / "checkpoint", trainer.model, {}, trainer.state_meta());
    }
    result.model = std::move(trainer.model);
    return result;
}

// The cluster-center initialization pipeline: supervised pretraining on the
// labeled splits, PCA over unlabeled-target encoder features, k-means, and
// installation into the feature transform + bank.
struct InitResult {
    Model model;
    PcaResult pca;
    Tensor kmeans_centers;
};

inline InitResult init_clusters(const World& world, const TrainConfig& cfg) {
    Model model(cfg.model);
    model.init(cfg.seed);
    ClusterInitConfig init = cfg.init;
    init.lr = cfg.lr_backbone;
    init.poly_power = cfg.poly_power;
    pretrain_supervised(model, world.source, world.target_labeled, init, cfg.seed);
    const Tensor features = collect_features(model, world.target_unlabeled);
    InitResult out;
    out.pca = pca_fit(features, cfg.model.f_e, init, cfg.seed);
    const Tensor projected = [&] {
        Tensor rows({features.dims[0], cfg.model.f_e});
        for (std::size_t r = 0; r < features.dims[0]; ++r)
            for (std::size_t o = 0; o < cfg.model.f_e; ++o) {
                double acc = 0.0;
                for (std::size_t j = 0; j < features.dims[1]; ++j)
                    acc += out.pca.projection.at(o, j) * (features.at(r, j) - out.pca.mean[j]);
                rows.at(r, o) = acc;
            }
        return rows;
    }();
    const KmeansResult km = kmeans_lloyd(projected, cfg.model.num_clusters, cfg.seed, init);
    out.kmeans_centers = km.centers;
    install_centers(model, out.pca, km.centers);
    out.model = std::move(model);
    return out;
}

}  // namespace c2a
