#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "c2a/config.hpp"
#include "c2a/tensor_io.hpp"
#include "c2a/world.hpp"

namespace c2a {

namespace worldio_detail {

inline json label_space_to_json(const LabelSpace& ls) {
    json classes = json::array();
    for (const auto& c : ls.classes)
        classes.push_back({{"id", c.id},
                           {"name", c.name},
                           {"prototype", {c.prototype[0], c.prototype[1], c.prototype[2]}}});
    return json{{"name", ls.name}, {"classes", classes}};
}

inline LabelSpace label_space_from_json(const json& j) {
    LabelSpace ls;
    ls.name = j.at("name").get<std::string>();
    for (const auto& cj : j.at("classes")) {
        ClassDef c;
        c.id = cj.at("id").get<std::uint16_t>();
        c.name = cj.at("name").get<std::string>();
        const auto p = cj.at("prototype").get<std::vector<double>>();
        for (int i = 0; i < 3; ++i) c.prototype[i] = p[i];
        ls.classes.push_back(c);
    }
    ls.validate();
    return ls;
}

}  // namespace worldio_detail

// On-disk layout: <dir>/manifest.json plus <domain>.images.c2at (f64) and
// <domain>.labels.c2at (u16) per domain.
inline void save_world(const std::filesystem::path& dir, const World& world) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "c2a-world";
    manifest["version"] = 1;
    manifest["seed"] = world.seed;
    manifest["spec"] = world_spec_to_json(world.spec);
    manifest["source_space"] = worldio_detail::label_space_to_json(world.source_space);
    manifest["target_space"] = worldio_detail::label_space_to_json(world.target_space);
    manifest["relation"] = world.relation;
    json domains = json::object();
    auto dump = [&](const DomainDataset& ds) {
        const std::string tag = domain_tag_name(ds.domain_tag);
        write_tensor_file(dir / (tag + ".images.c2at"), ds.images, TensorDType::f64);
        write_tensor_file(dir / (tag + ".labels.c2at"), ds.labels, TensorDType::u16);
        domains[tag] = {{"images", tag + ".images.c2at"},
                        {"labels", tag + ".labels.c2at"},
                        {"n", ds.num_images()},
                        {"label_space", ds.label_space.name},
                        {"seed", ds.seed}};
    };
    dump(world.source);
    dump(world.bridge);
    dump(world.target_labeled);
    dump(world.target_unlabeled);
    dump(world.target_val);
    manifest["domains"] = domains;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw io_error(IoErrorCode::open_failed, (dir / "manifest.json").string());
    out << manifest.dump(2) << "\n";
}

inline World load_world(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw io_error(IoErrorCode::open_failed, (dir / "manifest.json").string());
    json manifest;
    in >> manifest;
    if (manifest.value("format", "") != "c2a-world")
        throw io_error(IoErrorCode::bad_magic, (dir / "manifest.json").string());
    World world;
    world.seed = manifest.at("seed").get<std::uint64_t>();
    cfgdetail::Checker ck;
    world.spec = world_spec_from_json(manifest.at("spec"), ck);
    if (!ck.problems.empty()) throw config_error(std::move(ck.problems));
    world.source_space = worldio_detail::label_space_from_json(manifest.at("source_space"));
    world.target_space = worldio_detail::label_space_from_json(manifest.at("target_space"));
    world.relation = manifest.at("relation").get<std::vector<int>>();
    auto load = [&](DomainTag tag, DomainDataset& ds) {
        const std::string name = domain_tag_name(tag);
        const json& dj = manifest.at("domains").at(name);
        ds.domain_tag = tag;
        ds.images = read_tensor_file(dir / dj.at("images").get<std::string>());
        ds.labels = read_tensor_file(dir / dj.at("labels").get<std::string>());
        ds.seed = dj.at("seed").get<std::uint64_t>();
        const std::string space = dj.at("label_space").get<std::string>();
        ds.label_space = space == "source" ? world.source_space : world.target_space;
    };
    load(DomainTag::source, world.source);
    load(DomainTag::bridge, world.bridge);
    load(DomainTag::target_labeled, world.target_labeled);
    load(DomainTag::target_unlabeled, world.target_unlabeled);
    load(DomainTag::target_val, world.target_val);
    return world;
}

}  // namespace c2a
