#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2a/model.hpp"
#include "c2a/tensor_io.hpp"

namespace c2a {

using json = nlohmann::json;

inline json model_config_to_json(const ModelConfig& cfg) {
    return json{{"stride", cfg.stride},
                {"encoder_hidden", cfg.encoder_hidden},
                {"f_d", cfg.f_d},
                {"f_e", cfg.f_e},
                {"n_source_classes", cfg.n_source_classes},
                {"n_target_classes", cfg.n_target_classes},
                {"num_clusters", cfg.num_clusters},
                {"disc_base", cfg.disc_base},
                {"leaky_slope", cfg.leaky_slope},
                {"assign_temperature", cfg.assign_temperature}};
}

inline ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.stride = j.at("stride").get<std::size_t>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::size_t>();
    cfg.f_d = j.at("f_d").get<std::size_t>();
    cfg.f_e = j.at("f_e").get<std::size_t>();
    cfg.n_source_classes = j.at("n_source_classes").get<std::size_t>();
    cfg.n_target_classes = j.at("n_target_classes").get<std::size_t>();
    cfg.num_clusters = j.at("num_clusters").get<std::size_t>();
    cfg.disc_base = j.at("disc_base").get<std::size_t>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.assign_temperature = j.at("assign_temperature").get<double>();
    return cfg;
}

// A checkpoint is a directory: manifest.json plus one tensor file per
// parameter, named after the parameter (encoder.l1.weight.c2at, ...,
// clusters.centers.c2at). Extra tensors (pca.projection, pca.mean) ride
// along the same way.
inline void save_checkpoint(const std::filesystem::path& dir, Model& model,
                            const std::map<std::string, Tensor>& extras = {},
                            const json& meta = json::object()) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "c2a-checkpoint";
    manifest["version"] = 1;
    manifest["model_config"] = model_config_to_json(model.cfg);
    manifest["meta"] = meta;
    json names = json::array();
    for (auto& p : model.parameters()) {
        write_tensor_file(dir / (p.name + ".c2at"), *p.value);
        names.push_back(p.name);
    }
    manifest["params"] = names;
    json extra_names = json::array();
    for (const auto& [name, tensor] : extras) {
        write_tensor_file(dir / (name + ".c2at"), tensor);
        extra_names.push_back(name);
    }
    manifest["extras"] = extra_names;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw io_error(IoErrorCode::open_failed, (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

struct Checkpoint {
    json manifest;
    ModelConfig model_config;
    std::map<std::string, Tensor> tensors;  // params and extras

    bool has(const std::string& name) const { return tensors.count(name) > 0; }

    // Copy stored parameter tensors into an existing model (shape-checked).
    void apply(Model& model) const {
        for (auto& p : model.parameters()) {
            auto it = tensors.find(p.name);
            if (it == tensors.end())
                throw io_error(IoErrorCode::truncated, "checkpoint missing param " + p.name);
            require_same_shape(*p.value, it->second, p.name.c_str());
            *p.value = it->second;
        }
    }

    Model build_model() const {
        Model m(model_config);
        apply(m);
        return m;
    }
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw io_error(IoErrorCode::open_failed, (dir / "manifest.json").string());
    Checkpoint ck;
    in >> ck.manifest;
    if (ck.manifest.value("format", "") != "c2a-checkpoint")
        throw io_error(IoErrorCode::bad_magic, (dir / "manifest.json").string());
    ck.model_config = model_config_from_json(ck.manifest.at("model_config"));
    for (const auto& name_json : ck.manifest.at("params"))
        ck.tensors[name_json.get<std::string>()] =
            read_tensor_file(dir / (name_json.get<std::string>() + ".c2at"));
    if (ck.manifest.contains("extras"))
        for (const auto& name_json : ck.manifest.at("extras"))
            ck.tensors[name_json.get<std::string>()] =
                read_tensor_file(dir / (name_json.get<std::string>() + ".c2at"));
    return ck;
}

}  // namespace c2a
