#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "fairint/commands.hpp"
#include "support/tempdir.hpp"

using namespace fairint;
using fairint::testing::read_file;
using fairint::testing::scratch_dir;
using fairint::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run cli(const fs::path& dir, const std::string& args) {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(FAIRINT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

nlohmann::json quick_train() {
    return {{"max_epochs", 3}, {"batch_size", 128}, {"learning_rate", 0.003}, {"seed", 5}};
}

fs::path write_config(const fs::path& dir, const std::string& name, nlohmann::json cfg) {
    const auto p = dir / name;
    write_file(p, cfg.dump(2));
    return p;
}

nlohmann::json synth_config(const fs::path& out, nlohmann::json train = quick_train()) {
    return {{"synth", {{"n", 800}, {"beta", 2.0}, {"rho", 0.8}}},
            {"train", std::move(train)},
            {"output_dir", out.string()}};
}

} // namespace

TEST(Cli, SynthWritesCsvAndSchemaDeterministically) {
    const auto dir = scratch_dir("cli_synth");
    const auto a = dir / "a.csv", b = dir / "b.csv";
    ASSERT_EQ(cli(dir, "synth --n 100 --seed 4 --out " + a.string()).code, 0);
    ASSERT_EQ(cli(dir, "synth --n 100 --seed 4 --out " + b.string()).code, 0);
    const auto text = read_file(a);
    EXPECT_EQ(lines(text).size(), 101u);
    EXPECT_EQ(text, read_file(b));
    EXPECT_EQ(read_file(dir / "a.schema.json"), read_file(dir / "b.schema.json"));

    const Schema schema = load_schema((dir / "a.schema.json").string());
    int numerical = 0, sensitive = 0, label = 0;
    for (const auto& c : schema) {
        numerical += c.kind == FeatureKind::numerical && c.role == FeatureRole::non_sensitive;
        sensitive += c.role == FeatureRole::sensitive;
        label += c.role == FeatureRole::label;
    }
    EXPECT_EQ(numerical, 5);
    EXPECT_EQ(sensitive, 1);
    EXPECT_EQ(label, 1);

    ASSERT_EQ(cli(dir, "synth --n 100 --seed 5 --out " + b.string()).code, 0);
    EXPECT_NE(text, read_file(b));
}

TEST(Cli, SynthErrors) {
    const auto dir = scratch_dir("cli_synth_err");
    EXPECT_EQ(cli(dir, "synth --n 10 --out " + (dir / "x.csv").string()).code, 2);
    EXPECT_EQ(cli(dir, "synth --n 100 --out " + (dir / "missing" / "deeper" / "x.csv").string()).code, 3);
}

TEST(Cli, UsageErrorsExitTwo) {
    const auto dir = scratch_dir("cli_usage");
    EXPECT_EQ(cli(dir, "").code, 2);
    EXPECT_EQ(cli(dir, "fly").code, 2);
    EXPECT_EQ(cli(dir, "train").code, 2);
    const auto cfg = write_config(dir, "c.json", synth_config(dir / "out"));
    EXPECT_EQ(cli(dir, "train --config " + cfg.string() + " --threshold 1.5").code, 2);
    EXPECT_EQ(cli(dir, "train --config " + cfg.string() + " --groups-from maybe").code, 2);
    EXPECT_EQ(cli(dir, "train --config " + (dir / "nope.json").string()).code, 2);
    write_file(dir / "broken.json", "{\"synth\": ");
    EXPECT_EQ(cli(dir, "train --config " + (dir / "broken.json").string()).code, 2);
    EXPECT_EQ(cli(dir, "train --config " + write_config(dir, "both.json", {{"synth", {}}, {"dataset", {}}}).string()).code,
              2);
}

TEST(Cli, MissingSchemaNamesThePath) {
    const auto dir = scratch_dir("cli_schema");
    ASSERT_EQ(cli(dir, "synth --n 200 --out " + (dir / "d.csv").string()).code, 0);
    const auto missing = (dir / "absent.schema.json").string();
    const auto cfg = write_config(dir, "c.json",
                                  {{"dataset", {{"csv_path", (dir / "d.csv").string()}, {"schema_path", missing}}},
                                   {"train", quick_train()},
                                   {"output_dir", (dir / "out").string()}});
    const auto r = cli(dir, "train --config " + cfg.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Cli, BadDataExitsThree) {
    const auto dir = scratch_dir("cli_data");
    ASSERT_EQ(cli(dir, "synth --n 200 --out " + (dir / "d.csv").string()).code, 0);
    auto text = read_file(dir / "d.csv");
    // Corrupt the label of the first data row.
    const auto eol = text.find('\n', text.find('\n') + 1);
    text.replace(eol - 1, 1, "x");
    write_file(dir / "d.csv", text);
    const auto cfg = write_config(
        dir, "c.json",
        {{"dataset", {{"csv_path", (dir / "d.csv").string()}, {"schema_path", (dir / "d.schema.json").string()}}},
         {"train", quick_train()},
         {"output_dir", (dir / "out").string()}});
    const auto r = cli(dir, "train --config " + cfg.string());
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;

    const auto cfg2 = write_config(
        dir, "c2.json",
        {{"dataset", {{"csv_path", (dir / "gone.csv").string()}, {"schema_path", (dir / "d.schema.json").string()}}},
         {"output_dir", (dir / "out").string()}});
    EXPECT_EQ(cli(dir, "train --config " + cfg2.string()).code, 3);
}

TEST(Cli, TrainIsByteReproducibleAndEvalAgrees) {
    const auto dir = scratch_dir("cli_train");
    const auto cfg_a = write_config(dir, "a.json", synth_config(dir / "a"));
    const auto cfg_b = write_config(dir, "b.json", synth_config(dir / "b"));
    const auto ra = cli(dir, "train --config " + cfg_a.string());
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(cli(dir, "train --config " + cfg_b.string()).code, 0);
    for (const char* f : {"model.bin", "report.json", "history.jsonl"}) {
        EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
    }
    const auto report = nlohmann::json::parse(read_file(dir / "a" / "report.json"));
    EXPECT_EQ(nlohmann::json::parse(ra.out), report);

    const auto ev = cli(dir, "eval --config " + cfg_a.string() + " --model " + (dir / "a" / "model.bin").string());
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(nlohmann::json::parse(ev.out), report);

    // A different seed gives a different model.
    const auto cfg_c = write_config(dir, "c.json", synth_config(dir / "c"));
    ASSERT_EQ(cli(dir, "train --config " + cfg_c.string() + " --seed 6").code, 0);
    EXPECT_NE(read_file(dir / "a" / "model.bin"), read_file(dir / "c" / "model.bin"));
}

TEST(Cli, AblationFlagsReachHistoryMetadata) {
    const auto dir = scratch_dir("cli_ablation");
    auto train = quick_train();
    train["ablation"] = {{"enable_ifc", false}, {"enable_fc", true}, {"enable_bid", true}};
    train["lambda_ifc"] = 2.5;
    const auto cfg = write_config(dir, "c.json", synth_config(dir / "out", train));
    ASSERT_EQ(cli(dir, "train --config " + cfg.string()).code, 0);
    const auto ls = lines(read_file(dir / "out" / "history.jsonl"));
    ASSERT_EQ(ls.size(), 4u);
    const auto meta = nlohmann::json::parse(ls[0]).at("meta");
    EXPECT_EQ(meta.at("ablation").at("enable_ifc"), false);
    EXPECT_EQ(meta.at("ablation").at("enable_fc"), true);
    EXPECT_EQ(meta.at("lambda_ifc"), 2.5);
    EXPECT_EQ(meta.at("seed"), 5);
    for (std::size_t k = 1; k < ls.size(); ++k) EXPECT_EQ(nlohmann::json::parse(ls[k]).at("l_ifc"), 0.0);
}

TEST(Cli, SweepWritesTradeoffTable) {
    const auto dir = scratch_dir("cli_sweep");
    auto cfg = synth_config(dir / "sweep");
    cfg["sweep"] = {{"grid", nlohmann::json::array()}};
    const auto empty = write_config(dir, "empty.json", cfg);
    EXPECT_EQ(cli(dir, "sweep --config " + empty.string()).code, 2);
    EXPECT_EQ(cli(dir, "sweep --config " + empty.string() + " --grid 1:nope").code, 2);

    const auto r = cli(dir, "sweep --config " + empty.string() + " --grid 2:0.5");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(read_file(dir / "sweep" / "tradeoff.csv"));
    ASSERT_EQ(ls.size(), 2u);
    EXPECT_EQ(ls[0], "lambda_ifc,lambda_fc,auc,ddp,deo");

    // The row parses back to the report of the same run trained directly.
    auto train = quick_train();
    train["lambda_ifc"] = 2.0;
    train["lambda_fc"] = 0.5;
    const auto single = write_config(dir, "single.json", synth_config(dir / "single", train));
    ASSERT_EQ(cli(dir, "train --config " + single.string()).code, 0);
    const auto rep = nlohmann::json::parse(read_file(dir / "single" / "report.json"));
    const auto cells = parse_csv(ls[1] + "\n").at(0);
    ASSERT_EQ(cells.size(), 5u);
    EXPECT_EQ(*parse_number(cells[0]), 2.0);
    EXPECT_EQ(*parse_number(cells[1]), 0.5);
    EXPECT_EQ(*parse_number(cells[2]), rep.at("auc").get<double>());
    EXPECT_EQ(*parse_number(cells[3]), rep.at("ddp").get<double>());
    EXPECT_EQ(*parse_number(cells[4]), rep.at("deo").get<double>());

    // Grid from the config file.
    cfg["sweep"]["grid"] = {{0, 0}, {1, 1}};
    cfg["output_dir"] = (dir / "two").string();
    ASSERT_EQ(cli(dir, "sweep --config " + write_config(dir, "two.json", cfg).string()).code, 0);
    EXPECT_EQ(lines(read_file(dir / "two" / "tradeoff.csv")).size(), 3u);
}

TEST(Cli, ExplainNeedsInteractionLayer) {
    const auto dir = scratch_dir("cli_explain");
    auto mlp = quick_train();
    mlp["ablation"] = {{"enable_bid", false}};
    const auto mlp_cfg = write_config(dir, "mlp.json", synth_config(dir / "mlp", mlp));
    ASSERT_EQ(cli(dir, "train --config " + mlp_cfg.string()).code, 0);
    EXPECT_EQ(cli(dir, "explain --config " + mlp_cfg.string() + " --model " + (dir / "mlp" / "model.bin").string()).code,
              2);

    const auto cfg = write_config(dir, "bid.json", synth_config(dir / "bid"));
    ASSERT_EQ(cli(dir, "train --config " + cfg.string()).code, 0);
    const auto r = cli(dir, "explain --config " + cfg.string() + " --model " + (dir / "bid" / "model.bin").string() +
                                " --split val");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(read_file(dir / "bid" / "attention.json"));
    EXPECT_EQ(j, nlohmann::json::parse(r.out));
    ASSERT_EQ(j.at("heads").size(), 1u);
    EXPECT_EQ(j["heads"][0]["features"].size(), 5u);

    write_file(dir / "junk.bin", "not a model");
    EXPECT_EQ(cli(dir, "explain --config " + cfg.string() + " --model " + (dir / "junk.bin").string()).code, 3);
    EXPECT_EQ(cli(dir, "eval --config " + cfg.string() + " --model " + (dir / "bid" / "model.bin").string() +
                           " --split holdout")
                  .code,
              2);
}

TEST(Cli, ProbeRanksProxyFirst) {
    const auto dir = scratch_dir("cli_probe");
    auto cfg = synth_config(dir / "probe");
    cfg["synth"]["n"] = 4000;
    const auto r = cli(dir, "probe --config " + write_config(dir, "p.json", cfg).string());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("coefficients").at(0).at("feature"), "proxy1");
    EXPECT_TRUE(j.contains("intercept"));
}
