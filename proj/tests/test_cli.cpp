#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(C2A_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CmdResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("c2a_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    f << content;
}

// tiny world + short runs so the suite stays fast
const char* SMALL_WORLD = R"({"n_source": 12, "n_bridge": 8, "n_target": 16, "n_val": 6, "sigma": 0.25})";

std::string small_config(const std::string& out_dir) {
    json cfg = {{"version", 1},
                {"world", json::parse(SMALL_WORLD)},
                {"train", {{"max_iter", 30}, {"eval_interval", 10},
                           {"init", {{"pretrain_iters", 20}}}}},
                {"out_dir", out_dir}};
    return cfg.dump();
}

std::string hash_tree(const fs::path& dir) {
    // order-stable concatenation of (relative path, size, bytes) per file
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::ostringstream acc;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream body;
        body << in.rdbuf();
        acc << fs::relative(f, dir).string() << ":" << body.str().size() << ":"
            << std::hash<std::string>{}(body.str()) << "\n";
    }
    return acc.str();
}

}  // namespace

TEST_CASE("help is available for every subcommand") {
    REQUIRE(run_cli("--help").exit_code == 0);
    for (const std::string sub :
         {"gen-data", "init-clusters", "train", "eval", "sweep", "plot"}) {
        const CmdResult r = run_cli(sub + " --help");
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.output.find("--") != std::string::npos);
    }
    REQUIRE(run_cli("train --help").output.find("--print-defaults") != std::string::npos);
    REQUIRE(run_cli("eval --help").output.find("--split") != std::string::npos);
}

TEST_CASE("unknown flags are rejected with a single-line error") {
    const CmdResult r = run_cli("gen-data --out /tmp/x --frobnicate 3");
    REQUIRE(r.exit_code != 0);
    REQUIRE(r.output.rfind("error:", 0) == 0);
    REQUIRE(std::count(r.output.begin(), r.output.end(), '\n') == 1);
}

TEST_CASE("config schema violations list every offending key") {
    const fs::path dir = temp_dir("badcfg");
    write_file(dir / "bad.json",
               R"({"version": 1, "world": {"bogus_key": 1, "noise_std": "high"},
                   "train": {"another_bogus": true}})");
    const CmdResult r = run_cli("sweep --config " + (dir / "bad.json").string());
    REQUIRE(r.exit_code == 3);
    REQUIRE(r.output.find("world.bogus_key: unknown key") != std::string::npos);
    REQUIRE(r.output.find("world.noise_std: wrong type") != std::string::npos);
    REQUIRE(r.output.find("train.another_bogus: unknown key") != std::string::npos);
}

TEST_CASE("train --print-defaults emits the full config schema") {
    const CmdResult r = run_cli("train --print-defaults");
    REQUIRE(r.exit_code == 0);
    const json cfg = json::parse(r.output);
    REQUIRE(cfg.at("version").get<int>() == 1);
    REQUIRE(cfg.at("train").at("lr_backbone").get<double>() == 2.5e-4);
    REQUIRE(cfg.at("train").at("lr_centers").get<double>() == 2.5e-5);
    REQUIRE(cfg.at("train").at("lambda_adv").get<double>() == 0.001);
    REQUIRE(cfg.at("train").at("model").at("num_clusters").get<int>() == 10);
    REQUIRE(cfg.at("world").at("sigma").get<double>() == 0.04);
}

TEST_CASE("gen-data is deterministic and validates its spec") {
    const fs::path dir = temp_dir("gen");
    write_file(dir / "spec.json", SMALL_WORLD);
    const std::string spec = (dir / "spec.json").string();
    REQUIRE(run_cli("gen-data --spec " + spec + " --out " + (dir / "a").string() +
                    " --seed 7").exit_code == 0);
    REQUIRE(run_cli("gen-data --spec " + spec + " --out " + (dir / "b").string() +
                    " --seed 7").exit_code == 0);
    REQUIRE(run_cli("gen-data --spec " + spec + " --out " + (dir / "c").string() +
                    " --seed 8").exit_code == 0);
    REQUIRE(hash_tree(dir / "a") == hash_tree(dir / "b"));
    REQUIRE(hash_tree(dir / "a") != hash_tree(dir / "c"));

    write_file(dir / "badspec.json", R"({"sigma": 2.5})");
    const CmdResult bad =
        run_cli("gen-data --spec " + (dir / "badspec.json").string() + " --out " +
                (dir / "d").string());
    REQUIRE(bad.exit_code != 0);
    REQUIRE(bad.output.rfind("error:", 0) == 0);
}

TEST_CASE("full pipeline: gen-data, init-clusters, train, eval, plot") {
    const fs::path dir = temp_dir("pipe");
    write_file(dir / "spec.json", SMALL_WORLD);
    write_file(dir / "config.json", small_config((dir / "runs").string()));
    const std::string world = (dir / "world").string();
    REQUIRE(run_cli("gen-data --spec " + (dir / "spec.json").string() + " --out " + world +
                    " --seed 1").exit_code == 0);

    // c2a training demands a cluster init
    const CmdResult no_init = run_cli("train --world " + world + " --config " +
                                      (dir / "config.json").string() +
                                      " --mode c2a_full --out " + (dir / "r0").string());
    REQUIRE(no_init.exit_code != 0);
    REQUIRE(no_init.output.find("--init") != std::string::npos);

    const std::string init = (dir / "init").string();
    REQUIRE(run_cli("init-clusters --world " + world + " --config " +
                    (dir / "config.json").string() + " --out " + init + " --seed 1")
                .exit_code == 0);
    REQUIRE(fs::exists(fs::path(init) / "manifest.json"));
    REQUIRE(fs::exists(fs::path(init) / "pca.projection.c2at"));
    REQUIRE(fs::exists(fs::path(init) / "clusters.centers.c2at"));

    const std::string run = (dir / "run").string();
    REQUIRE(run_cli("train --world " + world + " --config " + (dir / "config.json").string() +
                    " --mode c2a_full --init " + init + " --out " + run + " --seed 1")
                .exit_code == 0);
    REQUIRE(fs::exists(fs::path(run) / "metrics.jsonl"));
    REQUIRE(fs::exists(fs::path(run) / "config.json"));
    REQUIRE(fs::exists(fs::path(run) / "checkpoint" / "manifest.json"));

    // JSONL stream carries the required fields
    std::ifstream jl(fs::path(run) / "metrics.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(jl, line)) {
        const json rec = json::parse(line);
        for (const char* key : {"iter", "mode", "seed", "miou", "pixel_acc", "per_class_iou",
                                "largest_cluster_frac", "l_sup_s", "l_c", "l_kl", "lambda_c",
                                "total"})
            REQUIRE(rec.contains(key));
        ++lines;
    }
    REQUIRE(lines == 4);  // iters 0, 10, 20, 30

    const CmdResult ev = run_cli("eval --world " + world + " --ckpt " + run +
                                 "/checkpoint --split target_val --json " +
                                 (dir / "eval.json").string() + " --per-image");
    REQUIRE(ev.exit_code == 0);
    REQUIRE(ev.output.find("miou") != std::string::npos);
    REQUIRE(ev.output.find("t0(4)") != std::string::npos);  // class columns in id order
    const json evj = json::parse(std::ifstream((dir / "eval.json").string()));
    REQUIRE(evj.at("split").get<std::string>() == "target_val");
    REQUIRE(evj.at("per_class_iou").size() == 3);
    REQUIRE(evj.contains("miou_per_image"));

    const CmdResult plot = run_cli("plot --runs " + run + " --out " + (dir / "out.svg").string());
    REQUIRE(plot.exit_code == 0);
    std::ifstream svg(dir / "out.svg");
    std::ostringstream body;
    body << svg.rdbuf();
    REQUIRE(body.str().find("<svg") != std::string::npos);
    REQUIRE(body.str().find("polyline") != std::string::npos);
    REQUIRE(body.str().find("mIoU") != std::string::npos);
}

TEST_CASE("eval of an untrained checkpoint stays below the uniform bound") {
    const fs::path dir = temp_dir("evalu");
    write_file(dir / "spec.json", SMALL_WORLD);
    write_file(dir / "config.json", small_config((dir / "runs").string()));
    const std::string world = (dir / "world").string();
    REQUIRE(run_cli("gen-data --spec " + (dir / "spec.json").string() + " --out " + world +
                    " --seed 3").exit_code == 0);
    // 0-iteration run just writes the seeded init as a checkpoint
    json cfg = json::parse(small_config(""));
    cfg["train"]["max_iter"] = 0;
    write_file(dir / "cfg0.json", cfg.dump());
    const std::string run = (dir / "run0").string();
    REQUIRE(run_cli("train --world " + world + " --config " + (dir / "cfg0.json").string() +
                    " --mode target_only --out " + run + " --seed 3").exit_code == 0);
    const CmdResult ev = run_cli("eval --world " + world + " --ckpt " + run +
                                 "/checkpoint --split target_val --json " +
                                 (dir / "e.json").string());
    REQUIRE(ev.exit_code == 0);
    const json evj = json::parse(std::ifstream((dir / "e.json").string()));
    const double c = 3.0;
    REQUIRE(evj.at("miou").get<double>() <= 2.0 / (c + 1.0));
}

TEST_CASE("train is bitwise deterministic across invocations") {
    const fs::path dir = temp_dir("det");
    write_file(dir / "spec.json", SMALL_WORLD);
    write_file(dir / "config.json", small_config(""));
    const std::string world = (dir / "world").string();
    REQUIRE(run_cli("gen-data --spec " + (dir / "spec.json").string() + " --out " + world +
                    " --seed 5").exit_code == 0);
    for (const char* run : {"r1", "r2"})
        REQUIRE(run_cli("train --world " + world + " --config " +
                        (dir / "config.json").string() + " --mode target_only --out " +
                        (dir / run).string() + " --seed 5").exit_code == 0);
    // identical checkpoints and JSONL streams; config.json differs in out_dir only
    REQUIRE(hash_tree(dir / "r1" / "checkpoint") == hash_tree(dir / "r2" / "checkpoint"));
    auto slurp = [](const fs::path& p) {
        std::ostringstream s;
        s << std::ifstream(p).rdbuf();
        return s.str();
    };
    REQUIRE(slurp(dir / "r1" / "metrics.jsonl") == slurp(dir / "r2" / "metrics.jsonl"));
}

TEST_CASE("missing world directory is a clean io error") {
    const CmdResult r = run_cli("eval --world /nonexistent/dir --ckpt /also/missing");
    REQUIRE(r.exit_code == 4);
    REQUIRE(r.output.rfind("error: io:", 0) == 0);
}
