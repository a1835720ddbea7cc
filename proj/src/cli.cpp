#include "slicesim/cli.hpp"

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "slicesim/config.hpp"
#include "slicesim/scenario.hpp"
#include "slicesim/trace.hpp"
#include "slicesim/trainer.hpp"

namespace slicesim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    auto number = [&](const std::string& s) -> std::uint64_t {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError("--seeds: not a non-negative integer: '" + s + "'");
        return std::stoull(s);
    };
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(number(item));
            continue;
        }
        const auto lo = number(item.substr(0, dash)), hi = number(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("--seeds: empty range '" + item + "'");
        if (hi - lo > 100000) throw ConfigError("--seeds: range too long '" + item + "'");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw ConfigError("--seeds: no seeds given");
    return seeds;
}

namespace {

struct Args {
    std::string config;
    std::string seeds;
    std::string out;
    std::string checkpoint = "checkpoints/reference.json";
    std::string driver = "controller";
    std::string trace;
    bool ablation = false;
    bool no_spike = false;
    long horizon = 0;
};

Config resolve_config(const Args& a) {
    Config cfg = a.config.empty() ? default_config() : load_config(a.config);
    if (a.ablation) cfg = trainer::ablation_config(cfg);
    cfg.validate();
    return cfg;
}

std::vector<std::uint64_t> resolve_seeds(const Args& a, const std::vector<std::uint64_t>& fallback) {
    return a.seeds.empty() ? fallback : parse_seeds(a.seeds);
}

void require_out(const Args& a, const char* command) {
    if (a.out.empty()) throw ConfigError(std::string(command) + ": --out is required");
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream os(p);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

int cmd_validate(const Args& a, std::ostream& out) {
    const Config cfg = resolve_config(a);
    out << "config OK (hash " << hex64(config_hash(cfg)) << ")\n";
    return kOk;
}

int cmd_train(const Args& a, std::ostream& out) {
    require_out(a, "train");
    Config cfg = resolve_config(a);
    const auto seeds = resolve_seeds(a, {cfg.train.seed});
    const fs::path root(a.out);
    trace::Manifest m{"train", seeds, {{"ablation", a.ablation}}};
    trace::write_manifest(root, m, cfg);
    for (auto seed : seeds) {
        Config run = cfg;
        run.train.seed = seed;
        const fs::path dir = seeds.size() == 1 ? root : root / ("seed_" + std::to_string(seed));
        if (seeds.size() > 1) trace::write_manifest(dir, {"train", {seed}, {{"ablation", a.ablation}}}, run);
        trainer::TrainOptions opts;
        opts.metrics_csv = dir / "metrics.csv";
        opts.on_iteration = [&](const trainer::IterationMetrics& it) {
            if (it.iteration % 10 == 0 || it.iteration + 1 == run.train.iterations)
                out << "seed " << seed << " iter " << it.iteration << " u_total " << it.mean_u_total << " e " << it.mean_e << '\n';
        };
        const auto pol = trainer::train(run, opts);
        pol.save(dir / "policy.json");
        out << "saved " << (dir / "policy.json").string() << '\n';
    }
    return kOk;
}

scenario::Driver parse_driver(const std::string& d) {
    if (d == "controller") return scenario::Driver::Controller;
    if (d == "reactive") return scenario::Driver::ReactiveOnly;
    if (d == "random") return scenario::Driver::Random;
    throw ConfigError("--driver must be controller, reactive or random");
}

int cmd_evaluate(const Args& a, std::ostream& out) {
    require_out(a, "evaluate");
    const Config cfg = resolve_config(a);
    const auto seeds = resolve_seeds(a, cfg.scenario.seeds);
    const auto driver = parse_driver(a.driver);
    const fs::path root(a.out);
    trace::write_manifest(root, {"evaluate", seeds, {{"checkpoint", a.checkpoint}, {"driver", a.driver}, {"ablation", a.ablation}}}, cfg);
    const auto pol = policy::Policy::load(a.checkpoint);
    scenario::EvalOptions opts;
    opts.horizon = a.horizon;
    opts.driver = driver;
    opts.out_dir = root;
    const auto summary = scenario::evaluate(pol, cfg, seeds, opts);
    write_json(root / "summary.json", summary.to_json());
    out << "U_total " << summary.u_total.mean << " +/- " << summary.u_total.ci95 << ", E " << summary.e.mean << " +/- "
        << summary.e.ci95 << " over " << seeds.size() << " seeds\n";
    return kOk;
}

int cmd_case_study(const Args& a, std::ostream& out) {
    require_out(a, "case-study");
    const Config cfg = resolve_config(a);
    const auto seeds = resolve_seeds(a, cfg.scenario.seeds);
    const fs::path root(a.out);
    trace::write_manifest(root, {"case-study", seeds, {{"checkpoint", a.checkpoint}, {"spike_enabled", !a.no_spike}}}, cfg);
    auto pol = policy::Policy::load(a.checkpoint);
    int passed = 0;
    json index = json::array();
    for (auto seed : seeds) {
        scenario::CaseStudyOptions opts;
        opts.spike_enabled = !a.no_spike;
        opts.out_dir = root / ("seed_" + std::to_string(seed));
        const auto run = scenario::run_spike_case_study(pol, cfg, seed, opts);
        const auto& r = run.report;
        passed += r.passed ? 1 : 0;
        const auto rt = r.resolution_ticks();
        index.push_back({{"seed", seed}, {"verdict", r.verdict()}, {"resolution_ticks", rt ? json(*rt) : json(nullptr)}});
        out << "seed " << seed << ": " << r.verdict();
        if (rt) out << " (resolved in " << *rt << " ticks)";
        out << '\n';
    }
    write_json(root / "summary.json", {{"passed", passed}, {"total", seeds.size()}, {"runs", index}});
    out << passed << "/" << seeds.size() << " case studies PASSED\n";
    return passed == static_cast<int>(seeds.size()) ? kOk : kScenarioFailed;
}

int cmd_replay(const Args& a, std::ostream& out) {
    const std::string dir = !a.trace.empty() ? a.trace : a.out;
    if (dir.empty()) throw ConfigError("replay: trace directory required");
    const auto v = trace::replay(dir);
    for (const auto& f : v.failures) out << "  " << f << '\n';
    out << (v.pass ? "PASS" : "FAIL") << ": " << v.rows_checked << " rows, " << v.attention_checked << " attention lines, "
        << v.explanations_checked << " explanations checked\n";
    return v.pass ? kOk : kScenarioFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"slicesim: RAN slicing simulator, AE-MAPPO trainer and controller"};
    app.require_subcommand(1);
    Args a;
    auto common = [&](CLI::App* c) {
        c->add_option("--config", a.config, "Config JSON (defaults to the built-in configuration)");
        c->add_option("--seeds", a.seeds, "Seed list, e.g. 1,2,5-8");
        c->add_option("--out", a.out, "Output directory");
        c->add_flag("--ablation", a.ablation, "Plain MAPPO: alpha_xrl = 0 and w_xrl = 0");
    };
    auto* validate = app.add_subcommand("validate-config", "Schema-check a configuration");
    validate->add_option("--config", a.config)->required();
    validate->add_flag("--ablation", a.ablation);
    auto* train = app.add_subcommand("train", "Train a policy per seed");
    common(train);
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint over seeds");
    common(evaluate);
    evaluate->add_option("--checkpoint", a.checkpoint);
    evaluate->add_option("--driver", a.driver, "controller | reactive | random");
    evaluate->add_option("--horizon", a.horizon, "Ticks per seed (0 = full episode)");
    auto* cs = app.add_subcommand("case-study", "Run the URLLC spike case study");
    common(cs);
    cs->add_option("--checkpoint", a.checkpoint);
    cs->add_flag("--no-spike", a.no_spike, "Run the case study without injecting the spike");
    auto* replay = app.add_subcommand("replay", "Verify a trace directory");
    replay->add_option("trace", a.trace, "Trace directory");
    replay->add_option("--out", a.out, "Trace directory (alternative to the positional argument)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "slicesim: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        if (validate->parsed()) return cmd_validate(a, out);
        if (train->parsed()) return cmd_train(a, out);
        if (evaluate->parsed()) return cmd_evaluate(a, out);
        if (cs->parsed()) return cmd_case_study(a, out);
        if (replay->parsed()) return cmd_replay(a, out);
    } catch (const ConfigError& e) {
        err << "slicesim: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const trace::SchemaError& e) {
        err << "slicesim: schema error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "slicesim: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kRuntimeError;
}

}  // namespace slicesim::cli
