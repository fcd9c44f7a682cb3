// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion that ran has passed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include "fairint/commands.hpp"
#include "support/gradcheck.hpp"
#include "support/op_cases.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace fairint;
namespace ft = fairint::testing;

namespace {

enum class Verdict { pass, fail, skip };

struct Line {
    int id;
    std::string title;
    Verdict verdict;
    std::string detail;
};

std::vector<Line> g_lines;

void record(int id, const std::string& title, Verdict v, const std::string& detail) {
    const char* tag = v == Verdict::pass ? "PASS" : v == Verdict::fail ? "FAIL" : "SKIP";
    std::printf("[%s] %2d %s: %s\n", tag, id, title.c_str(), detail.c_str());
    std::fflush(stdout);
    g_lines.push_back({id, title, v, detail});
}

Verdict verdict(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string num(double v) { return fmt("%.4f", v); }

// ---------------------------------------------------------------------------
// 1. Gradients

void gradients() {
    double worst_op = 0.0;
    std::string worst_name;
    for (const auto& [name, c] : ft::op_cases()) {
        const auto res = ft::op_gradient_error(c);
        if (res.max_rel_error > worst_op) {
            worst_op = res.max_rel_error;
            worst_name = name;
        }
    }

    // Full objective on 10 synthetic rows; every path differentiable, both
    // pseudo-groups present, no row within 1e-3 of the group boundary.
    const Dataset ds = split(synth_generate({200, 2.0, 0.8, 1}), SplitRatios{}, 1);
    std::vector<std::size_t> rows(10);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Batch b = make_batch(ds, rows);
    const std::vector<double> s(b.true_sensitive.begin(), b.true_sensitive.end());
    Rng unused(0);
    std::uint64_t seed = 1;
    for (; seed < 500; ++seed) {
        FairIntModel m(ds.schema, ModelConfig{}, Architecture::fairint, seed);
        m.set_detach_reconstructor_input(false);
        Graph g;
        const auto t = m.forward(g, b, false, unused);
        const auto p = t.pseudo_prob.value().values();
        int ones = 0;
        double margin = 1.0;
        for (double v : p) {
            ones += v >= 0.5;
            margin = std::min(margin, std::fabs(v - 0.5));
        }
        if (ones > 0 && ones < 10 && margin > 1e-3) break;
    }
    FairIntModel m(ds.schema, ModelConfig{}, Architecture::fairint, seed);
    m.set_detach_reconstructor_input(false);
    const auto full = ft::grad_check(m.params(), [&](Graph& g, ParameterStore&) {
        const auto t = m.forward(g, b, false, unused);
        return joint_loss(t, b.labels, s, LossWeights{0.7, 1.3}).total;
    });
    record(1, "gradient correctness", verdict(worst_op < 1e-4 && full.max_rel_error < 1e-3),
           "worst op " + worst_name + " rel " + fmt("%.2e", worst_op) + " (< 1e-4); joint loss rel " +
               fmt("%.2e", full.max_rel_error) + " (< 1e-3)");
}

// ---------------------------------------------------------------------------
// 2. Loss oracles

void loss_oracles() {
    Graph g;
    const Var fused = g.constant(Tensor(Shape{4, 2}, {1.0, -1.0, 0.0, std::log(27.0), -1.0, 1.0, 0.0, -std::log(3.0)}));
    const std::vector<int> groups{0, 1, 0, 1};
    const double ifc = ifc_loss(fused, groups).value().item();
    const double fc = fc_from_group_ce(std::vector<double>{0.7, 0.4});
    const double ce = ce_loss(std::vector<double>(8, 0.5), std::vector<double>{1, 0, 1, 0, 0, 0, 1, 1});
    const bool ok = std::fabs(ifc - 0.27471) <= 1e-4 && fc == 2.0 * (0.7 - 0.4) && std::fabs(fc - 0.6) <= 1e-15 &&
                    std::fabs(ce - std::log(2.0)) <= 1e-12;
    record(2, "loss oracles", verdict(ok),
           "ifc " + fmt("%.6f", ifc) + " (0.27471 +- 1e-4); fc " + fmt("%.17g", fc) + " (0.6); ce " +
               fmt("%.15f", ce) + " (ln 2)");
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

void metric_oracles() {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + rng.below(297);
        std::vector<double> scores, y;
        std::vector<int> s;
        for (std::size_t i = 0; i < n; ++i) {
            s.push_back(i < 4 ? static_cast<int>(i / 2) : static_cast<int>(rng.below(2)));
            y.push_back(i < 4 ? static_cast<double>(i % 2) : static_cast<double>(rng.below(2)));
            scores.push_back(std::round(rng.uniform() * 20.0) / 20.0);
        }
        const auto pred = threshold_labels(scores, 0.5);
        worst = std::max({worst, std::fabs(auc_roc(scores, y) - ft::brute_auc(scores, y)),
                          std::fabs(delta_dp(pred, s) - ft::brute_delta_dp(pred, s)),
                          std::fabs(delta_eo(pred, y, s) - ft::brute_delta_eo(pred, y, s))});
    }
    const double example = auc_roc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<double>{0, 0, 1, 1});
    record(3, "metric oracles", verdict(worst <= 1e-12 && example == 0.75),
           "max deviation from brute force over 50 instances " + fmt("%.1e", worst) + "; AUC example " +
               fmt("%.17g", example));
}

// ---------------------------------------------------------------------------
// Shared training runs for 4-8

struct RunResult {
    FairnessReport val, test;
    double attention_variance = 0.0;
};

TrainConfig base_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    return c;
}

RunResult run(const Dataset& ds, const TrainConfig& cfg) {
    auto r = train(ds, ModelConfig{}, cfg);
    RunResult out;
    out.val = evaluate(r.model, ds, SplitTag::val);
    out.test = evaluate(r.model, ds, SplitTag::test);
    if (r.model.architecture() == Architecture::fairint) {
        out.attention_variance = explain(r.model, ds, SplitTag::test).mean_variance();
    }
    return out;
}

TrainConfig vanilla_mlp(std::uint64_t seed) {
    auto c = base_config(seed);
    c.lambda_ifc = c.lambda_fc = 0.0;
    c.ablation = Ablation{false, false, false};
    return c;
}

TrainConfig fairint_config(std::uint64_t seed, double li, double lf, bool ifc = true, bool fc = true) {
    auto c = base_config(seed);
    c.lambda_ifc = ifc ? li : 0.0;
    c.lambda_fc = fc ? lf : 0.0;
    c.ablation = Ablation{ifc, fc, true};
    return c;
}

std::string report_str(const FairnessReport& r) {
    return "AUC " + num(r.auc) + " dDP " + num(r.ddp) + " dEO " + num(r.deo);
}

struct Selection {
    double li = 0.0, lf = 0.0;
    RunResult result;
};

Selection bias_mitigation(const Dataset& ds, const RunResult& vanilla) {
    std::printf("      vanilla MLP: test %s | val %s\n", report_str(vanilla.test).c_str(),
                report_str(vanilla.val).c_str());
    const std::vector<double> grid{1.0, 10.0, 100.0};
    Selection best;
    bool have = false, best_eligible = false;
    double best_score = 0.0;
    for (double li : grid) {
        for (double lf : grid) {
            const auto r = run(ds, fairint_config(1, li, lf));
            const bool eligible = r.val.auc >= vanilla.val.auc - 0.03;
            const double score = r.val.ddp + r.val.deo;
            std::printf("      grid (%g, %g): val %s%s | test %s\n", li, lf, report_str(r.val).c_str(),
                        eligible ? "" : " (AUC out of band)", report_str(r.test).c_str());
            std::fflush(stdout);
            if (!have || (eligible && !best_eligible) || (eligible == best_eligible && score < best_score)) {
                best = Selection{li, lf, r};
                best_score = score;
                best_eligible = eligible;
                have = true;
            }
        }
    }
    const auto& t = best.result.test;
    const auto& v = vanilla.test;
    const bool ok = t.ddp <= 0.7 * v.ddp && t.deo <= 0.7 * v.deo && std::fabs(t.auc - v.auc) <= 0.03;
    record(4, "bias-mitigation direction", verdict(ok),
           "selected (" + fmt("%g", best.li) + ", " + fmt("%g", best.lf) + ") on validation; test dDP " +
               num(t.ddp) + " vs 0.7 x " + num(v.ddp) + " = " + num(0.7 * v.ddp) + ", dEO " + num(t.deo) +
               " vs " + num(0.7 * v.deo) + ", AUC " + num(t.auc) + " vs " + num(v.auc) + " (+-0.03)");
    return best;
}

struct AblationMeans {
    double ddp = 0.0, deo = 0.0;
};

struct VarianceOutcome {
    int lower = 0;
    std::string detail;
};

VarianceOutcome ablation_and_attention(const Dataset& ds, const Selection& sel) {
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const char* names[4] = {"Vanilla FairInt", "+IFC", "+FC", "FairInt"};
    AblationMeans means[4];
    int lower_variance = 0;
    std::string variance_detail;
    for (auto seed : seeds) {
        const TrainConfig cfgs[4] = {fairint_config(seed, 0, 0, false, false),
                                     fairint_config(seed, sel.li, sel.lf, true, false),
                                     fairint_config(seed, sel.li, sel.lf, false, true),
                                     fairint_config(seed, sel.li, sel.lf)};
        RunResult res[4];
        for (int k = 0; k < 4; ++k) {
            res[k] = run(ds, cfgs[k]);
            means[k].ddp += res[k].test.ddp / static_cast<double>(seeds.size());
            means[k].deo += res[k].test.deo / static_cast<double>(seeds.size());
            std::printf("      seed %llu %-15s test %s attention var %.3e\n", static_cast<unsigned long long>(seed),
                        names[k], report_str(res[k].test).c_str(), res[k].attention_variance);
            std::fflush(stdout);
        }
        lower_variance += res[3].attention_variance < res[0].attention_variance;
        variance_detail += (variance_detail.empty() ? "" : ", ") + fmt("%.3e", res[3].attention_variance) + " vs " +
                           fmt("%.3e", res[0].attention_variance);
    }
    double min_other = 1e9;
    for (int k = 0; k < 3; ++k) min_other = std::min(min_other, means[k].ddp + means[k].deo);
    const bool eo = means[0].deo > means[1].deo;
    const bool dp = means[0].ddp > means[2].ddp;
    const bool full = means[3].ddp + means[3].deo < min_other;
    std::string detail;
    for (int k = 0; k < 4; ++k) {
        detail += std::string(k ? "; " : "") + names[k] + " dDP " + num(means[k].ddp) + " dEO " + num(means[k].deo);
    }
    detail += std::string(" | dEO(V)>dEO(+IFC) ") + (eo ? "yes" : "no") + ", dDP(V)>dDP(+FC) " + (dp ? "yes" : "no") +
              ", full minimal " + (full ? "yes" : "no");
    record(5, "ablation ordering (3-seed means)", verdict(eo && dp && full), detail);
    return VarianceOutcome{lower_variance, variance_detail};
}

void attention_variance(const VarianceOutcome& v) {
    record(7, "attention-variance observation", verdict(v.lower == 3),
           std::to_string(v.lower) + "/3 seeds lower (tuned vs vanilla FairInt: " + v.detail + ")");
}

void sar_quality(const Selection& sel) {
    const double acc = sel.result.test.sar_accuracy;
    const Dataset blind = split(synth_generate({20000, 2.0, 0.0, 1}), SplitRatios{}, 1);
    const auto r = run(blind, fairint_config(1, sel.li, sel.lf));
    const auto test_rows = blind.rows_in(SplitTag::test);
    double ones = 0.0;
    for (auto i : test_rows) ones += blind.sensitive[i];
    const double majority = std::max(ones, test_rows.size() - ones) / static_cast<double>(test_rows.size());
    const bool ok = acc > 0.85 && std::fabs(r.test.sar_accuracy - majority) <= 0.05;
    record(6, "SAR quality", verdict(ok),
           "rho 0.8 accuracy " + num(acc) + " (> 0.85); rho 0 accuracy " + num(r.test.sar_accuracy) +
               " vs majority rate " + num(majority) + " (+-0.05)");
}

void lambda_sensitivity(const Dataset& ds, const Selection& sel) {
    const std::vector<double> lfs{0.0, 5.0, 10.0, 20.0};
    std::vector<FairnessReport> reps;
    std::string detail;
    for (double lf : lfs) {
        const auto r = run(ds, fairint_config(1, sel.li, lf));
        reps.push_back(r.test);
        detail += (detail.empty() ? "" : "; ") + std::string("lfc ") + fmt("%g", lf) + ": dDP " + num(r.test.ddp) +
                  " AUC " + num(r.test.auc);
    }
    double lo = 1.0, hi = 0.0;
    for (const auto& r : reps) {
        lo = std::min(lo, r.auc);
        hi = std::max(hi, r.auc);
    }
    const bool ok = reps.back().ddp <= reps.front().ddp && hi - lo < 0.02;
    record(8, "lambda sensitivity trend", verdict(ok),
           "lambda_ifc " + fmt("%g", sel.li) + "; " + detail + " | AUC spread " + num(hi - lo) + " (< 0.02)");
}

// ---------------------------------------------------------------------------
// 9. Determinism through the train command

void determinism() {
    const auto dir = ft::scratch_dir("determinism");
    ExperimentConfig cfg;
    cfg.synth = SynthParams{2000, 2.0, 0.8, 1};
    cfg.train.max_epochs = 5;
    cfg.train.seed = 11;
    std::string bytes[2][2];
    for (int k = 0; k < 2; ++k) {
        cfg.output_dir = (dir / ("run" + std::to_string(k))).string();
        cmd_train(cfg, RunOptions{});
        bytes[k][0] = ft::read_file(dir / ("run" + std::to_string(k)) / "report.json");
        bytes[k][1] = ft::read_file(dir / ("run" + std::to_string(k)) / "model.bin");
    }
    const bool ok = !bytes[0][1].empty() && bytes[0][0] == bytes[1][0] && bytes[0][1] == bytes[1][1];
    record(9, "determinism", verdict(ok),
           std::string("report.json ") + (bytes[0][0] == bytes[1][0] ? "identical" : "differs") + ", model.bin " +
               (bytes[0][1] == bytes[1][1] ? "identical" : "differs") + " (" + std::to_string(bytes[0][1].size()) +
               " bytes)");
}

// ---------------------------------------------------------------------------
// 10. Optional real-data check

void adult(const Selection& sel) {
    const char* csv = std::getenv("FAIRINT_ADULT_CSV");
    const char* schema = std::getenv("FAIRINT_ADULT_SCHEMA");
    if (!csv || !schema) {
        record(10, "Adult directional check", Verdict::skip,
               "set FAIRINT_ADULT_CSV and FAIRINT_ADULT_SCHEMA to run it");
        return;
    }
    ExperimentConfig cfg;
    cfg.dataset = CsvSource{csv, schema};
    cfg.train = base_config(1);
    const Dataset ds = load_experiment_data(cfg);
    const auto v = run(ds, vanilla_mlp(1));
    const auto f = run(ds, fairint_config(1, sel.li, sel.lf));
    const bool ok = v.test.auc >= 0.88 && v.test.auc <= 0.93 && f.test.ddp < v.test.ddp && f.test.deo < v.test.deo &&
                    v.test.auc - f.test.auc <= 0.04;
    record(10, "Adult directional check", verdict(ok),
           "vanilla " + report_str(v.test) + "; FairInt " + report_str(f.test));
}

} // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    try {
        gradients();
        loss_oracles();
        metric_oracles();

        const Dataset ds = split(synth_generate({20000, 2.0, 0.8, 1}), SplitRatios{}, 1);
        const auto vanilla = run(ds, vanilla_mlp(1));
        const auto sel = bias_mitigation(ds, vanilla);
        const auto variance = ablation_and_attention(ds, sel);
        sar_quality(sel);
        attention_variance(variance);
        lambda_sensitivity(ds, sel);
        determinism();
        adult(sel);
    } catch (const std::exception& e) {
        std::printf("acceptance run aborted: %s\n", e.what());
        return 1;
    }

    std::sort(g_lines.begin(), g_lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
    int failed = 0;
    std::printf("\nsummary\n");
    for (const auto& l : g_lines) {
        const char* tag = l.verdict == Verdict::pass ? "PASS" : l.verdict == Verdict::fail ? "FAIL" : "SKIP";
        std::printf("[%s] %2d %s\n", tag, l.id, l.title.c_str());
        failed += l.verdict == Verdict::fail;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d failing criteria, %.0f s\n", failed, secs);
    return failed == 0 ? 0 : 1;
}
