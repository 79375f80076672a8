#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2a/trainer.hpp"
#include "c2a/world.hpp"

namespace c2a {

inline constexpr int CONFIG_SCHEMA_VERSION = 1;

// Collects every schema violation and reports them in one throw.
struct config_error : std::runtime_error {
    std::vector<std::string> offending;
    explicit config_error(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), offending(std::move(problems)) {}

    static std::string join(const std::vector<std::string>& problems) {
        std::string msg = "config error:";
        for (const auto& p : problems) msg += " [" + p + "]";
        return msg;
    }
};

namespace cfgdetail {

struct Checker {
    std::vector<std::string> problems;

    void unknown_keys(const json& j, const std::string& prefix,
                      const std::set<std::string>& allowed) {
        if (!j.is_object()) {
            problems.push_back(prefix + ": expected object");
            return;
        }
        for (const auto& [key, _] : j.items())
            if (!allowed.count(key)) problems.push_back(prefix + "." + key + ": unknown key");
    }

    template <typename T>
    void read(const json& j, const std::string& prefix, const std::string& key, T& slot) {
        if (!j.contains(key)) return;
        try {
            slot = j.at(key).get<T>();
        } catch (const json::exception&) {
            problems.push_back(prefix + "." + key + ": wrong type");
        }
    }

    void read_affine(const json& j, const std::string& prefix, const std::string& key,
                     DomainAffine& slot) {
        if (!j.contains(key)) return;
        const json& a = j.at(key);
        if (!a.is_object() || !a.contains("a") || !a.contains("b")) {
            problems.push_back(prefix + "." + key + ": want {\"a\": 3x3, \"b\": [3]}");
            return;
        }
        try {
            const auto rows = a.at("a").get<std::vector<std::vector<double>>>();
            const auto b = a.at("b").get<std::vector<double>>();
            if (rows.size() != 3 || b.size() != 3) throw json::other_error::create(501, "size", &a);
            for (int i = 0; i < 3; ++i) {
                if (rows[i].size() != 3) throw json::other_error::create(501, "size", &a);
                for (int k = 0; k < 3; ++k) slot.a[i][k] = rows[i][k];
            }
            for (int i = 0; i < 3; ++i) slot.b[i] = b[i];
        } catch (const json::exception&) {
            problems.push_back(prefix + "." + key + ": want {\"a\": 3x3, \"b\": [3]}");
        }
    }
};

inline json affine_to_json(const DomainAffine& t) {
    return json{{"a", {{t.a[0][0], t.a[0][1], t.a[0][2]},
                       {t.a[1][0], t.a[1][1], t.a[1][2]},
                       {t.a[2][0], t.a[2][1], t.a[2][2]}}},
                {"b", {t.b[0], t.b[1], t.b[2]}}};
}

}  // namespace cfgdetail

inline json world_spec_to_json(const WorldSpec& s) {
    return json{{"height", s.height},
                {"width", s.width},
                {"n_source", s.n_source},
                {"n_bridge", s.n_bridge},
                {"n_target", s.n_target},
                {"n_val", s.n_val},
                {"sigma", s.sigma},
                {"n_source_classes", s.n_source_classes},
                {"n_target_classes", s.n_target_classes},
                {"n_related", s.n_related},
                {"regions_per_image", s.regions_per_image},
                {"min_region", s.min_region},
                {"relation", s.relation},
                {"prototype_scale", s.prototype_scale},
                {"epsilon", s.epsilon},
                {"noise_std", s.noise_std},
                {"source_affine", cfgdetail::affine_to_json(s.source_affine)},
                {"bridge_affine", cfgdetail::affine_to_json(s.bridge_affine)},
                {"target_affine", cfgdetail::affine_to_json(s.target_affine)}};
}

inline WorldSpec world_spec_from_json(const json& j, cfgdetail::Checker& ck,
                                      const std::string& prefix = "world") {
    WorldSpec s;
    ck.unknown_keys(j, prefix,
                    {"height", "width", "n_source", "n_bridge", "n_target", "n_val", "sigma",
                     "n_source_classes", "n_target_classes", "n_related", "regions_per_image",
                     "min_region", "relation", "prototype_scale", "epsilon", "noise_std",
                     "source_affine", "bridge_affine", "target_affine"});
    ck.read(j, prefix, "height", s.height);
    ck.read(j, prefix, "width", s.width);
    ck.read(j, prefix, "n_source", s.n_source);
    ck.read(j, prefix, "n_bridge", s.n_bridge);
    ck.read(j, prefix, "n_target", s.n_target);
    ck.read(j, prefix, "n_val", s.n_val);
    ck.read(j, prefix, "sigma", s.sigma);
    ck.read(j, prefix, "n_source_classes", s.n_source_classes);
    ck.read(j, prefix, "n_target_classes", s.n_target_classes);
    ck.read(j, prefix, "n_related", s.n_related);
    ck.read(j, prefix, "regions_per_image", s.regions_per_image);
    ck.read(j, prefix, "min_region", s.min_region);
    ck.read(j, prefix, "relation", s.relation);
    ck.read(j, prefix, "prototype_scale", s.prototype_scale);
    ck.read(j, prefix, "epsilon", s.epsilon);
    ck.read(j, prefix, "noise_std", s.noise_std);
    ck.read_affine(j, prefix, "source_affine", s.source_affine);
    ck.read_affine(j, prefix, "bridge_affine", s.bridge_affine);
    ck.read_affine(j, prefix, "target_affine", s.target_affine);
    return s;
}

inline json train_config_to_json(const TrainConfig& c) {
    json model = {{"stride", c.model.stride},
                  {"encoder_hidden", c.model.encoder_hidden},
                  {"f_d", c.model.f_d},
                  {"f_e", c.model.f_e},
                  {"num_clusters", c.model.num_clusters},
                  {"disc_base", c.model.disc_base},
                  {"leaky_slope", c.model.leaky_slope},
                  {"assign_temperature", c.model.assign_temperature}};
    json init = {{"pretrain_iters", c.init.pretrain_iters},
                 {"batch_source", c.init.batch_source},
                 {"batch_target", c.init.batch_target},
                 {"kmeans_n_init", c.init.kmeans_n_init},
                 {"kmeans_max_iter", c.init.kmeans_max_iter},
                 {"kmeans_tol", c.init.kmeans_tol},
                 {"pca_tol", c.init.pca_tol},
                 {"pca_max_iter", c.init.pca_max_iter}};
    return json{{"max_iter", c.max_iter},
                {"stop_iter", c.stop_iter},
                {"eval_interval", c.eval_interval},
                {"batch_source", c.batch_source},
                {"batch_target_labeled", c.batch_target_labeled},
                {"batch_bridge", c.batch_bridge},
                {"batch_target_unlabeled", c.batch_target_unlabeled},
                {"lr_backbone", c.lr_backbone},
                {"lr_centers", c.lr_centers},
                {"lr_disc", c.lr_disc},
                {"poly_power", c.poly_power},
                {"lambda_adv", c.lambda_adv},
                {"use_kl_loss", c.use_kl_loss},
                {"seed", c.seed},
                {"mode", train_mode_name(c.mode)},
                {"resume_from", c.resume_from},
                {"model", model},
                {"init", init}};
}

inline TrainConfig train_config_from_json(const json& j, cfgdetail::Checker& ck,
                                          const std::string& prefix = "train") {
    TrainConfig c;
    ck.unknown_keys(j, prefix,
                    {"max_iter", "stop_iter", "eval_interval", "batch_source",
                     "batch_target_labeled", "batch_bridge", "batch_target_unlabeled",
                     "lr_backbone", "lr_centers", "lr_disc", "poly_power", "lambda_adv",
                     "use_kl_loss", "seed", "mode", "resume_from", "model", "init"});
    ck.read(j, prefix, "max_iter", c.max_iter);
    ck.read(j, prefix, "stop_iter", c.stop_iter);
    ck.read(j, prefix, "eval_interval", c.eval_interval);
    ck.read(j, prefix, "batch_source", c.batch_source);
    ck.read(j, prefix, "batch_target_labeled", c.batch_target_labeled);
    ck.read(j, prefix, "batch_bridge", c.batch_bridge);
    ck.read(j, prefix, "batch_target_unlabeled", c.batch_target_unlabeled);
    ck.read(j, prefix, "lr_backbone", c.lr_backbone);
    ck.read(j, prefix, "lr_centers", c.lr_centers);
    ck.read(j, prefix, "lr_disc", c.lr_disc);
    ck.read(j, prefix, "poly_power", c.poly_power);
    ck.read(j, prefix, "lambda_adv", c.lambda_adv);
    ck.read(j, prefix, "use_kl_loss", c.use_kl_loss);
    ck.read(j, prefix, "seed", c.seed);
    if (j.contains("mode")) {
        try {
            c.mode = train_mode_from_name(j.at("mode").get<std::string>());
        } catch (const std::exception&) {
            ck.problems.push_back(prefix + ".mode: unknown mode");
        }
    }
    ck.read(j, prefix, "resume_from", c.resume_from);
    if (j.contains("model")) {
        const json& m = j.at("model");
        ck.unknown_keys(m, prefix + ".model",
                        {"stride", "encoder_hidden", "f_d", "f_e", "num_clusters", "disc_base",
                         "leaky_slope", "assign_temperature"});
        ck.read(m, prefix + ".model", "stride", c.model.stride);
        ck.read(m, prefix + ".model", "encoder_hidden", c.model.encoder_hidden);
        ck.read(m, prefix + ".model", "f_d", c.model.f_d);
        ck.read(m, prefix + ".model", "f_e", c.model.f_e);
        ck.read(m, prefix + ".model", "num_clusters", c.model.num_clusters);
        ck.read(m, prefix + ".model", "disc_base", c.model.disc_base);
        ck.read(m, prefix + ".model", "leaky_slope", c.model.leaky_slope);
        ck.read(m, prefix + ".model", "assign_temperature", c.model.assign_temperature);
    }
    if (j.contains("init")) {
        const json& m = j.at("init");
        ck.unknown_keys(m, prefix + ".init",
                        {"pretrain_iters", "batch_source", "batch_target", "kmeans_n_init",
                         "kmeans_max_iter", "kmeans_tol", "pca_tol", "pca_max_iter"});
        ck.read(m, prefix + ".init", "pretrain_iters", c.init.pretrain_iters);
        ck.read(m, prefix + ".init", "batch_source", c.init.batch_source);
        ck.read(m, prefix + ".init", "batch_target", c.init.batch_target);
        ck.read(m, prefix + ".init", "kmeans_n_init", c.init.kmeans_n_init);
        ck.read(m, prefix + ".init", "kmeans_max_iter", c.init.kmeans_max_iter);
        ck.read(m, prefix + ".init", "kmeans_tol", c.init.kmeans_tol);
        ck.read(m, prefix + ".init", "pca_tol", c.init.pca_tol);
        ck.read(m, prefix + ".init", "pca_max_iter", c.init.pca_max_iter);
    }
    return c;
}

// Top-level experiment config: {"version": 1, "world": {...}, "train": {...},
// "out_dir": ..., "seeds": [...], "modes": [...]}. Every section optional;
// flags override file values.
struct ExperimentConfig {
    WorldSpec world;
    TrainConfig train;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> modes;
};

inline ExperimentConfig experiment_config_from_json(const json& j) {
    cfgdetail::Checker ck;
    ExperimentConfig c;
    ck.unknown_keys(j, "config", {"version", "world", "train", "out_dir", "seeds", "modes"});
    if (j.contains("version")) {
        int v = -1;
        ck.read(j, "config", "version", v);
        if (v != CONFIG_SCHEMA_VERSION)
            ck.problems.push_back("config.version: want " + std::to_string(CONFIG_SCHEMA_VERSION));
    }
    if (j.contains("world")) c.world = world_spec_from_json(j.at("world"), ck);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), ck);
    ck.read(j, "config", "out_dir", c.out_dir);
    ck.read(j, "config", "seeds", c.seeds);
    ck.read(j, "config", "modes", c.modes);
    if (!ck.problems.empty()) throw config_error(std::move(ck.problems));
    return c;
}

inline json experiment_config_to_json(const ExperimentConfig& c) {
    return json{{"version", CONFIG_SCHEMA_VERSION},
                {"world", world_spec_to_json(c.world)},
                {"train", train_config_to_json(c.train)},
                {"out_dir", c.out_dir},
                {"seeds", c.seeds},
                {"modes", c.modes}};
}

inline json load_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("cannot parse " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace c2a
