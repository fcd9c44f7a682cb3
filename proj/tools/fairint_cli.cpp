#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "fairint/commands.hpp"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    double threshold = 0.5;
    std::string groups_from = "true";

    fairint::RunOptions options() const {
        fairint::RunOptions o;
        o.seed = seed;
        o.threshold = threshold;
        o.groups_from = fairint::group_source_from_string(groups_from);
        return o;
    }
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
    if (needs_config) {
        opt->required();
    }
    cmd->add_option("--seed", c.seed, "override train.seed");
    cmd->add_option("--threshold", c.threshold, "label threshold for the fairness metrics")->capture_default_str();
    cmd->add_option("--groups-from", c.groups_from, "group source for metrics: true or pseudo")
        ->capture_default_str();
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fairint: bias-aware feature-interaction classifiers for tabular data"};
    app.require_subcommand(1);

    Common common;
    std::string model_path;
    std::string split_name = "test";
    std::vector<std::string> grid_arg;

    auto* train = app.add_subcommand("train", "train a model; writes model.bin, history.jsonl, report.json");
    add_common(train, common);

    auto* eval = app.add_subcommand("eval", "evaluate a saved model on one split");
    add_common(eval, common);
    eval->add_option("--model", model_path, "model file")->required();
    eval->add_option("--split", split_name, "train, val or test")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "lambda grid; writes tradeoff.csv");
    add_common(sweep, common);
    sweep->add_option("--grid", grid_arg, "lambda_ifc:lambda_fc pairs (overrides sweep.grid in the config)");

    auto* explain = app.add_subcommand("explain", "attention statistics; writes attention.json");
    add_common(explain, common);
    explain->add_option("--model", model_path, "model file")->required();
    explain->add_option("--split", split_name, "train, val or test")->capture_default_str();

    auto* probe = app.add_subcommand("probe", "linear probe of the sensitive attribute");
    add_common(probe, common);

    fairint::SynthParams synth_params;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "write a synthetic biased dataset and its schema");
    synth->add_option("--n", synth_params.n, "rows")->capture_default_str();
    synth->add_option("--beta", synth_params.beta, "bias strength")->capture_default_str();
    synth->add_option("--rho", synth_params.rho, "proxy correlation")->capture_default_str();
    synth->add_option("--seed", synth_params.seed, "generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "CSV path; the schema goes next to it as <name>.schema.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            fairint::cmd_synth(synth_params, synth_out);
            std::cout << synth_out << "\n" << fairint::schema_path_for(synth_out) << "\n";
            return 0;
        }
        const auto opts = common.options();
        auto cfg = fairint::load_experiment_config(common.config);
        if (train->parsed()) {
            const auto out = fairint::cmd_train(cfg, opts);
            print_json(fairint::to_json(out.report));
        } else if (eval->parsed()) {
            print_json(fairint::to_json(
                fairint::cmd_eval(cfg, model_path, fairint::split_from_string(split_name), opts)));
        } else if (sweep->parsed()) {
            if (!grid_arg.empty()) {
                cfg.grid.clear();
                for (const auto& g : grid_arg) {
                    const auto colon = g.find(':');
                    const auto a = fairint::parse_number(g.substr(0, colon));
                    const auto b = colon == std::string::npos ? std::nullopt : fairint::parse_number(g.substr(colon + 1));
                    if (!a || !b) {
                        throw fairint::ConfigError("--grid entries look like 1.0:20, got '" + g + "'");
                    }
                    cfg.grid.emplace_back(*a, *b);
                }
            }
            const auto points = fairint::cmd_sweep(cfg, opts);
            std::cout << fairint::tradeoff_csv(points);
            for (const auto& p : points) {
                if (!p.error.empty()) {
                    std::cerr << "point (" << p.lambda_ifc << ", " << p.lambda_fc << ") failed: " << p.error << "\n";
                }
            }
        } else if (explain->parsed()) {
            print_json(fairint::to_json(
                fairint::cmd_explain(cfg, model_path, fairint::split_from_string(split_name), opts)));
        } else if (probe->parsed()) {
            print_json(fairint::to_json(fairint::cmd_probe(cfg, opts)));
        }
    } catch (const fairint::Error& e) {
        std::cerr << "error [" << fairint::kind_name(e.kind()) << "]: " << e.what() << "\n";
        return fairint::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
