// Command-line driver: dataset generation, cluster initialization, training,
// evaluation, multi-seed sweeps, and SVG plots.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "c2a/checkpoint.hpp"
#include "c2a/clusterinit.hpp"
#include "c2a/config.hpp"
#include "c2a/metrics.hpp"
#include "c2a/svg.hpp"
#include "c2a/trainer.hpp"
#include "c2a/world.hpp"
#include "c2a/world_io.hpp"

namespace fs = std::filesystem;
using c2a::json;

namespace {

struct cli_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

c2a::ExperimentConfig read_config_file(const std::string& path) {
    return c2a::experiment_config_from_json(c2a::load_json_file(path));
}

c2a::WorldSpec read_world_spec_file(const std::string& path) {
    const json j = c2a::load_json_file(path);
    if (j.contains("world")) return read_config_file(path).world;
    c2a::cfgdetail::Checker ck;
    c2a::WorldSpec spec = c2a::world_spec_from_json(j, ck, "world");
    if (!ck.problems.empty()) throw c2a::config_error(std::move(ck.problems));
    return spec;
}

const c2a::DomainDataset& dataset_for_split(const c2a::World& world, const std::string& split) {
    if (split == "source") return world.source;
    if (split == "bridge") return world.bridge;
    if (split == "target_labeled") return world.target_labeled;
    if (split == "target_unlabeled") return world.target_unlabeled;
    if (split == "target_val") return world.target_val;
    throw cli_error("unknown split '" + split + "'");
}

// Apply world-derived facts (class counts) before building models.
void bind_model_to_world(c2a::TrainConfig& cfg, const c2a::World& world) {
    cfg.model.n_source_classes = world.source_space.num_classes();
    cfg.model.n_target_classes = world.target_space.num_classes();
}

c2a::Model model_from_init(const c2a::Checkpoint& ck, const c2a::TrainConfig& cfg) {
    const json want = c2a::model_config_to_json(cfg.model);
    const json have = c2a::model_config_to_json(ck.model_config);
    if (want != have)
        throw cli_error("init checkpoint model config mismatch: checkpoint " + have.dump() +
                        " vs effective " + want.dump());
    return ck.build_model();
}

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const std::string& spec_path, const std::string& out, std::uint64_t seed) {
    c2a::WorldSpec spec;
    if (!spec_path.empty()) spec = read_world_spec_file(spec_path);
    const c2a::World world = c2a::generate_world(spec, seed);
    c2a::save_world(out, world);
    std::cout << "wrote world to " << out << " (seed " << seed << ", "
              << world.source.num_images() << " source / " << world.bridge.num_images()
              << " bridge / " << world.target_labeled.num_images() << "+"
              << world.target_unlabeled.num_images() << " target / "
              << world.target_val.num_images() << " val images)\n";
    return 0;
}

// ------------------------------------------------------------ init-clusters

int cmd_init_clusters(const std::string& world_dir, const std::string& config_path,
                      const std::string& out, std::optional<std::uint64_t> seed_flag) {
    const c2a::World world = c2a::load_world(world_dir);
    c2a::TrainConfig cfg;
    if (!config_path.empty()) cfg = read_config_file(config_path).train;
    if (seed_flag) cfg.seed = *seed_flag;
    bind_model_to_world(cfg, world);
    c2a::InitResult init = c2a::init_clusters(world, cfg);
    json meta;
    meta["kind"] = "cluster-init";
    meta["seed"] = cfg.seed;
    meta["world_seed"] = world.seed;
    meta["pretrain_iters"] = cfg.init.pretrain_iters;
    c2a::save_checkpoint(out, init.model,
                         {{"pca.projection", init.pca.projection}, {"pca.mean", init.pca.mean}},
                         meta);
    std::cout << "wrote cluster-init checkpoint to " << out << "\n";
    return 0;
}

// ----------------------------------------------------------------- train

int cmd_train(const std::string& world_dir, const std::string& config_path,
              const std::string& mode_flag, const std::string& init_path, const std::string& out,
              std::optional<std::uint64_t> seed_flag, bool print_defaults) {
    if (print_defaults) {
        std::cout << c2a::experiment_config_to_json(c2a::ExperimentConfig{}).dump(2) << "\n";
        return 0;
    }
    if (world_dir.empty() || out.empty())
        throw cli_error("train needs --world and --out (or --print-defaults)");
    const c2a::World world = c2a::load_world(world_dir);
    c2a::TrainConfig cfg;
    if (!config_path.empty()) cfg = read_config_file(config_path).train;
    if (!mode_flag.empty()) cfg.mode = c2a::train_mode_from_name(mode_flag);
    if (seed_flag) cfg.seed = *seed_flag;
    bind_model_to_world(cfg, world);

    c2a::Model model(cfg.model);
    const bool c2a_mode =
        cfg.mode == c2a::TrainMode::c2a_full || cfg.mode == c2a::TrainMode::lambda_c_zero;
    if (!init_path.empty()) {
        model = model_from_init(c2a::load_checkpoint(init_path), cfg);
    } else if (c2a_mode && cfg.resume_from.empty()) {
        throw cli_error("mode " + std::string(c2a::train_mode_name(cfg.mode)) +
                        " needs --init (a cluster-init checkpoint)");
    } else {
        model.init(cfg.seed);
    }

    fs::create_directories(out);
    {
        c2a::ExperimentConfig effective;
        effective.world = world.spec;
        effective.train = cfg;
        effective.out_dir = out;
        std::ofstream cf(fs::path(out) / "config.json");
        cf << c2a::experiment_config_to_json(effective).dump(2) << "\n";
    }
    const c2a::RunResult run = c2a::run_training(world, cfg, std::move(model), out);
    std::cout << "mode " << c2a::train_mode_name(cfg.mode) << " seed " << cfg.seed
              << " final miou " << fmt4(run.final_miou()) << " (" << run.records.size()
              << " eval records, checkpoint in " << out << "/checkpoint)\n";
    return 0;
}

// ------------------------------------------------------------------ eval

int cmd_eval(const std::string& world_dir, const std::string& ckpt, const std::string& split,
             const std::string& json_out, bool per_image) {
    const c2a::World world = c2a::load_world(world_dir);
    const c2a::Checkpoint checkpoint = c2a::load_checkpoint(ckpt);
    c2a::Model model = checkpoint.build_model();
    const c2a::DomainDataset& ds = dataset_for_split(world, split);
    if (ds.num_images() == 0) throw cli_error("split '" + split + "' is empty");
    const bool is_source_space = ds.label_space.name == "source";
    c2a::Decoder& decoder = is_source_space ? model.decoder_s : model.decoder_t;

    const c2a::ConfusionMatrix cm = c2a::evaluate_dataset(model, ds, decoder);
    const c2a::MiouResult result = c2a::miou(cm);
    const double pacc = c2a::pixel_accuracy(cm);

    std::string header = "class", row = "iou  ";
    for (std::size_t i = 0; i < ds.label_space.classes.size(); ++i) {
        const auto& cls = ds.label_space.classes[i];
        header += "  " + cls.name + "(" + std::to_string(cls.id) + ")";
        row += "  " + fmt4(result.per_class[i]);
    }
    std::cout << header << "\n" << row << "\n";
    std::cout << "miou " << fmt4(result.mean) << "  pixel_acc " << fmt4(pacc) << "\n";

    json out;
    out["split"] = split;
    out["miou"] = result.mean;
    out["pixel_acc"] = pacc;
    out["per_class_iou"] = result.per_class;
    json ids = json::array(), names = json::array();
    for (const auto& cls : ds.label_space.classes) {
        ids.push_back(cls.id);
        names.push_back(cls.name);
    }
    out["class_ids"] = ids;
    out["class_names"] = names;
    if (per_image) {
        std::vector<c2a::ConfusionMatrix> per;
        for (std::size_t n = 0; n < ds.num_images(); ++n) {
            c2a::DomainDataset one;
            one.domain_tag = ds.domain_tag;
            one.label_space = ds.label_space;
            one.images = c2a::Tensor({1, ds.images.dims[1], ds.images.dims[2], 3});
            one.labels = c2a::Tensor({1, ds.labels.dims[1], ds.labels.dims[2]});
            const c2a::Tensor img = ds.image_at(n);
            const c2a::Tensor lab = ds.labels_at(n);
            std::copy(img.data.begin(), img.data.end(), one.images.data.begin());
            std::copy(lab.data.begin(), lab.data.end(), one.labels.data.begin());
            per.push_back(c2a::evaluate_dataset(model, one, decoder));
        }
        out["miou_per_image"] = c2a::miou_per_image(per);
        std::cout << "miou_per_image " << fmt4(out["miou_per_image"].get<double>()) << "\n";
    }
    if (json_out.empty()) {
        std::cout << out.dump() << "\n";
    } else {
        std::ofstream f(json_out);
        f << out.dump(2) << "\n";
    }
    return 0;
}

// ----------------------------------------------------------------- sweep

struct SweepCell {
    std::string mode;
    std::uint64_t seed;
    double miou;
};

int cmd_sweep(const std::string& config_path, const std::string& seeds_flag,
              const std::string& modes_flag, const std::string& out_flag) {
    c2a::ExperimentConfig cfg = read_config_file(config_path);
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    if (cfg.out_dir.empty()) throw cli_error("sweep needs out_dir (config key or --out)");
    if (!seeds_flag.empty()) {
        cfg.seeds.clear();
        for (const auto& tok : json::parse("[" + seeds_flag + "]"))
            cfg.seeds.push_back(tok.get<std::uint64_t>());
    }
    if (cfg.seeds.empty()) cfg.seeds = {0, 1, 2, 3, 4};
    if (!modes_flag.empty()) {
        cfg.modes.clear();
        std::string tok;
        for (char ch : modes_flag + ",") {
            if (ch == ',') {
                if (!tok.empty()) cfg.modes.push_back(tok);
                tok.clear();
            } else {
                tok += ch;
            }
        }
    }
    if (cfg.modes.empty()) cfg.modes = {"target_only", "finetune", "lambda_c_zero", "c2a_full"};

    fs::create_directories(cfg.out_dir);
    std::vector<SweepCell> cells;
    for (std::uint64_t seed : cfg.seeds) {
        const c2a::World world = c2a::generate_world(cfg.world, seed);
        std::optional<c2a::InitResult> init;  // shared by the c2a modes of this seed
        for (const std::string& mode_name : cfg.modes) {
            c2a::TrainConfig train = cfg.train;
            train.mode = c2a::train_mode_from_name(mode_name);
            train.seed = seed;
            bind_model_to_world(train, world);
            c2a::Model model(train.model);
            const bool needs_init = train.mode == c2a::TrainMode::c2a_full ||
                                    train.mode == c2a::TrainMode::lambda_c_zero;
            if (needs_init) {
                if (!init) init = c2a::init_clusters(world, train);
                model = init->model;
            } else {
                model.init(seed);
            }
            const fs::path cell_dir =
                fs::path(cfg.out_dir) / (mode_name + "_seed" + std::to_string(seed));
            const c2a::RunResult run = c2a::run_training(world, train, std::move(model), cell_dir);
            cells.push_back({mode_name, seed, run.final_miou()});
            std::cout << "cell " << mode_name << " seed " << seed << " final miou "
                      << fmt4(run.final_miou()) << "\n";
        }
    }

    json summary;
    summary["seeds"] = cfg.seeds;
    std::cout << "\nmode                 mean +- sd\n";
    for (const std::string& mode_name : cfg.modes) {
        std::vector<double> mious;
        for (const auto& c : cells)
            if (c.mode == mode_name) mious.push_back(c.miou);
        double mean = 0;
        for (double v : mious) mean += v;
        mean /= static_cast<double>(mious.size());
        double var = 0;
        for (double v : mious) var += (v - mean) * (v - mean);
        const double sd =
            mious.size() > 1 ? std::sqrt(var / static_cast<double>(mious.size() - 1)) : 0.0;
        summary[mode_name] = {{"mious", mious}, {"mean", mean}, {"sd", sd}};
        std::printf("%-20s %.4f +- %.4f\n", mode_name.c_str(), mean, sd);
    }
    std::ofstream sf(fs::path(cfg.out_dir) / "summary.json");
    sf << summary.dump(2) << "\n";
    std::cout << "summary written to " << (fs::path(cfg.out_dir) / "summary.json").string()
              << "\n";
    return 0;
}

// ------------------------------------------------------------------ plot

int cmd_plot(const std::vector<std::string>& runs, const std::string& out) {
    c2a::SvgLineChart miou_chart, loss_chart;
    miou_chart.title = "target-val mIoU";
    miou_chart.x_label = "iteration";
    miou_chart.y_label = "mIoU";
    loss_chart.title = "training losses";
    loss_chart.x_label = "iteration";
    loss_chart.y_label = "loss";
    for (const std::string& run : runs) {
        std::ifstream in(fs::path(run) / "metrics.jsonl");
        if (!in) throw cli_error("no metrics.jsonl under " + run);
        std::vector<double> iters, mious, totals;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json rec = json::parse(line);
            iters.push_back(rec.at("iter").get<double>());
            mious.push_back(rec.at("miou").get<double>());
            totals.push_back(rec.at("total").get<double>());
        }
        const std::string name = fs::path(run).filename().string();
        miou_chart.add_series(name, iters, mious);
        loss_chart.add_series(name + " total", iters, totals);
    }
    std::ofstream f(out);
    if (!f) throw cli_error("cannot write " + out);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"820\">\n";
    f << miou_chart.render(10, 0);
    f << loss_chart.render(10, 410);
    f << "</svg>\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "c2a: few-shot domain adaptation across disjoint label spaces on synthetic "
        "dense-prediction worlds"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-domain world");
    std::string gen_spec, gen_out;
    std::uint64_t gen_seed = 0;
    gen->add_option("--spec", gen_spec, "world spec JSON (defaults when omitted)");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "generation seed");

    auto* init = app.add_subcommand("init-clusters",
                                    "pretrain, collect features, PCA + k-means, write checkpoint");
    std::string init_world, init_config, init_out;
    std::optional<std::uint64_t> init_seed;
    init->add_option("--world", init_world, "world directory")->required();
    init->add_option("--config", init_config, "config JSON");
    init->add_option("--out", init_out, "checkpoint output directory")->required();
    init->add_option("--seed", init_seed, "seed override");

    auto* train = app.add_subcommand("train", "run one training configuration");
    std::string train_world, train_config, train_mode, train_init, train_out;
    std::optional<std::uint64_t> train_seed;
    bool train_defaults = false;
    train->add_option("--world", train_world, "world directory");
    train->add_option("--config", train_config, "config JSON");
    train->add_option("--mode", train_mode,
                      "c2a_full | lambda_c_zero | target_only | finetune | source_only");
    train->add_option("--init", train_init, "cluster-init checkpoint directory");
    train->add_option("--out", train_out, "run output directory");
    train->add_option("--seed", train_seed, "seed override");
    train->add_flag("--print-defaults", train_defaults, "print the default config and exit");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string eval_world, eval_ckpt, eval_split = "target_val", eval_json;
    bool eval_per_image = false;
    eval->add_option("--world", eval_world, "world directory")->required();
    eval->add_option("--ckpt", eval_ckpt, "checkpoint directory")->required();
    eval->add_option("--split", eval_split,
                     "source | bridge | target_labeled | target_unlabeled | target_val");
    eval->add_option("--json", eval_json, "write the JSON report here instead of stdout");
    eval->add_flag("--per-image", eval_per_image, "also report the per-image mIoU variant");

    auto* sweep = app.add_subcommand("sweep", "run the mode x seed grid and summarize");
    std::string sweep_config, sweep_seeds, sweep_modes, sweep_out;
    sweep->add_option("--config", sweep_config, "config JSON with world+train sections")
        ->required();
    sweep->add_option("--seeds", sweep_seeds, "comma-separated seed list");
    sweep->add_option("--modes", sweep_modes, "comma-separated mode list");
    sweep->add_option("--out", sweep_out, "output directory (overrides config out_dir)");

    auto* plot = app.add_subcommand("plot", "emit loss/mIoU curves as a standalone SVG");
    std::vector<std::string> plot_runs;
    std::string plot_out;
    plot->add_option("--runs", plot_runs, "run directories")->required()->expected(-1);
    plot->add_option("--out", plot_out, "output SVG path")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out, gen_seed);
        if (init->parsed()) return cmd_init_clusters(init_world, init_config, init_out, init_seed);
        if (train->parsed())
            return cmd_train(train_world, train_config, train_mode, train_init, train_out,
                             train_seed, train_defaults);
        if (eval->parsed())
            return cmd_eval(eval_world, eval_ckpt, eval_split, eval_json, eval_per_image);
        if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_seeds, sweep_modes, sweep_out);
        if (plot->parsed()) return cmd_plot(plot_runs, plot_out);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: cli: " << e.what() << std::endl;
        return 2;
    } catch (const c2a::config_error& e) {
        std::cerr << "error: config: " << e.what() << std::endl;
        return 3;
    } catch (const c2a::io_error& e) {
        std::cerr << "error: io: " << e.what() << std::endl;
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
