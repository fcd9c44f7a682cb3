#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairint/data.hpp"
#include "fairint/error.hpp"
#include "fairint/metrics.hpp"
#include "fairint/model.hpp"
#include "fairint/reports.hpp"
#include "fairint/serialize.hpp"
#include "fairint/training.hpp"

namespace fairint {

struct CsvSource {
    std::string csv_path;
    std::string schema_path;
};

struct ExperimentConfig {
    std::optional<CsvSource> dataset;
    std::optional<SynthParams> synth;
    ModelConfig model;
    TrainConfig train;
    std::string output_dir = ".";
    /// Sweep grid of (lambda_ifc, lambda_fc) pairs; read only by `sweep`.
    std::vector<std::pair<double, double>> grid;
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    ExperimentConfig c;
    const bool has_csv = j.contains("dataset");
    const bool has_synth = j.contains("synth");
    if (has_csv == has_synth) {
        throw ConfigError("config needs exactly one of 'dataset' or 'synth'");
    }
    try {
        if (has_csv) {
            const auto& d = j.at("dataset");
            c.dataset = CsvSource{d.at("csv_path").get<std::string>(), d.at("schema_path").get<std::string>()};
        } else {
            const auto& s = j.at("synth");
            SynthParams p;
            p.n = s.value("n", p.n);
            p.beta = s.value("beta", p.beta);
            p.rho = s.value("rho", p.rho);
            p.seed = s.value("seed", p.seed);
            c.synth = p;
        }
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("sweep")) {
            for (const auto& pt : j.at("sweep").at("grid")) {
                c.grid.emplace_back(pt.at(0).get<double>(), pt.at(1).get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.model = model_config_from_json(j.value("model", nlohmann::json::object()));
    c.train = train_config_from_json(j.value("train", nlohmann::json::object()));
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
    try {
        return experiment_config_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Command-line overrides shared by every subcommand.
struct RunOptions {
    std::optional<std::uint64_t> seed;
    double threshold = 0.5;
    GroupSource groups_from = GroupSource::true_sensitive;
};

inline void apply_overrides(ExperimentConfig& cfg, const RunOptions& opt) {
    if (opt.seed) {
        cfg.train.seed = *opt.seed;
    }
    if (!(opt.threshold > 0.0 && opt.threshold < 1.0)) {
        throw ConfigError("--threshold must lie in (0, 1)");
    }
}

// ---------------------------------------------------------------------------
// Data loading

/// Loads the configured data and assigns the split with the training seed.
/// Without `fixed`, encoders and standardization are fitted on the train rows;
/// with it, the stored encoders are applied as-is.
inline Dataset load_experiment_data(const ExperimentConfig& cfg, const Encoders* fixed = nullptr) {
    Dataset ds;
    if (cfg.dataset) {
        const Schema schema = load_schema(cfg.dataset->schema_path);
        ds = load_csv(cfg.dataset->csv_path, schema, fixed);
    } else {
        ds = synth_generate(*cfg.synth);
    }
    assign_split(ds, SplitRatios{}, cfg.train.seed);
    if (fixed) {
        for (std::size_t c = 0; c < ds.schema.size(); ++c) {
            if (ds.schema[c].kind == FeatureKind::numerical && ds.schema[c].role != FeatureRole::label) {
                ds.encoders.stats[c] = fixed->stats.at(c);
            }
        }
    } else {
        fit_standardization(ds);
    }
    apply_standardization(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Model files

inline nlohmann::json encoders_to_json(const Encoders& e) {
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& v : e.vocab) {
        vocab.push_back(v.values);
    }
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& s : e.stats) {
        stats.push_back({s.mean, s.std});
    }
    return nlohmann::json{{"vocab", std::move(vocab)}, {"stats", std::move(stats)}};
}

inline Encoders encoders_from_json(const nlohmann::json& j) {
    Encoders e;
    for (const auto& v : j.at("vocab")) {
        e.vocab.push_back(CategoryVocab{v.get<std::vector<std::string>>()});
    }
    for (const auto& s : j.at("stats")) {
        e.stats.push_back(NumericStats{s.at(0).get<double>(), s.at(1).get<double>()});
    }
    return e;
}

inline std::string model_metadata(const FairIntModel& model, const Encoders& enc, const TrainConfig& train) {
    return nlohmann::json{{"architecture", to_string(model.architecture())},
                          {"model", to_json(model.config())},
                          {"schema", schema_to_json(model.schema())},
                          {"encoders", encoders_to_json(enc)},
                          {"train", to_json(train)}}
        .dump();
}

struct LoadedModel {
    FairIntModel model;
    Encoders encoders;
    TrainConfig train;
};

inline LoadedModel load_trained_model(const std::string& path) {
    const ModelFile file = load_model(path);
    try {
        const auto meta = nlohmann::json::parse(file.metadata);
        Schema schema = schema_from_json(meta.at("schema"));
        ModelConfig mc = model_config_from_json(meta.at("model"));
        const Architecture arch = architecture_from_string(meta.at("architecture").get<std::string>());
        Encoders enc = encoders_from_json(meta.at("encoders"));
        TrainConfig tc = train_config_from_json(meta.at("train"));
        if (enc.vocab.size() != schema.size() || enc.stats.size() != schema.size()) {
            throw DataError("model file encoders do not match its schema");
        }
        FairIntModel model(std::move(schema), std::move(mc), arch, file.params);
        return LoadedModel{std::move(model), std::move(enc), std::move(tc)};
    } catch (const nlohmann::json::exception& e) {
        throw DataError("model file '" + path + "' has malformed metadata: " + e.what());
    } catch (const UsageError& e) {
        throw DataError("model file '" + path + "' does not match its architecture: " + e.what());
    } catch (const ConfigError& e) {
        throw DataError("model file '" + path + "' has an invalid configuration: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::filesystem::path ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    }
    return std::filesystem::path(dir);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file_bytes(path.string(), text);
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string tradeoff_csv(const std::vector<SweepPoint>& points) {
    std::string out = "lambda_ifc,lambda_fc,auc,ddp,deo\n";
    for (const auto& p : points) {
        out += format_double(p.lambda_ifc) + "," + format_double(p.lambda_fc) + ",";
        if (p.report) {
            out += format_double(p.report->auc) + "," + format_double(p.report->ddp) + "," +
                   format_double(p.report->deo);
        } else {
            out += ",,";
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns the primary artifact; files go under output_dir.

struct TrainOutcome {
    FairnessReport report;
    TrainHistory history;
};

/// Writes model.bin, history.jsonl and report.json (test split).
inline TrainOutcome cmd_train(ExperimentConfig cfg, const RunOptions& opt) {
    apply_overrides(cfg, opt);
    const Dataset ds = load_experiment_data(cfg);
    auto result = train(ds, cfg.model, cfg.train);
    const auto report = evaluate(result.model, ds, SplitTag::test, opt.threshold, opt.groups_from);
    const auto dir = ensure_dir(cfg.output_dir);
    save_model((dir / "model.bin").string(), model_metadata(result.model, ds.encoders, cfg.train),
               result.model.params());
    write_text(dir / "history.jsonl", history_to_jsonl(result.history, cfg.train));
    write_text(dir / "report.json", json_text(to_json(report)));
    return TrainOutcome{report, std::move(result.history)};
}

/// Re-evaluates a saved model on one split of the configured data.
inline FairnessReport cmd_eval(ExperimentConfig cfg, const std::string& model_path, SplitTag split,
                               const RunOptions& opt) {
    apply_overrides(cfg, opt);
    auto loaded = load_trained_model(model_path);
    const Dataset ds = load_experiment_data(cfg, &loaded.encoders);
    return evaluate(loaded.model, ds, split, opt.threshold, opt.groups_from);
}

/// Writes tradeoff.csv; per-point failures leave empty metric cells.
inline std::vector<SweepPoint> cmd_sweep(ExperimentConfig cfg, const RunOptions& opt) {
    apply_overrides(cfg, opt);
    if (cfg.grid.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    const Dataset ds = load_experiment_data(cfg);
    auto points = sweep(ds, cfg.model, cfg.train, cfg.grid, opt.threshold, opt.groups_from);
    const auto dir = ensure_dir(cfg.output_dir);
    write_text(dir / "tradeoff.csv", tradeoff_csv(points));
    return points;
}

/// Writes attention.json for a saved model.
inline AttentionStats cmd_explain(ExperimentConfig cfg, const std::string& model_path, SplitTag split,
                                  const RunOptions& opt) {
    apply_overrides(cfg, opt);
    auto loaded = load_trained_model(model_path);
    if (loaded.model.architecture() != Architecture::fairint) {
        throw UsageError("explain needs a model trained with the interaction layer enabled (enable_bid = true)");
    }
    const Dataset ds = load_experiment_data(cfg, &loaded.encoders);
    const auto stats = explain(loaded.model, ds, split);
    const auto dir = ensure_dir(cfg.output_dir);
    write_text(dir / "attention.json", json_text(to_json(stats)));
    return stats;
}

inline ProbeResult cmd_probe(ExperimentConfig cfg, const RunOptions& opt) {
    apply_overrides(cfg, opt);
    return probe(load_experiment_data(cfg));
}

/// `out.csv` gets its schema next to it as `out.schema.json`.
inline std::string schema_path_for(const std::string& csv_path) {
    std::filesystem::path p(csv_path);
    p.replace_extension(".schema.json");
    return p.string();
}

inline void cmd_synth(const SynthParams& params, const std::string& out_path) {
    const Dataset ds = synth_generate(params);
    write_file_bytes(out_path, dataset_to_csv(ds));
    write_file_bytes(schema_path_for(out_path), json_text(schema_to_json(ds.schema)));
}

} // namespace fairint
