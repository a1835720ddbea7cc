#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slicesim/trace.hpp"

using namespace slicesim;
namespace fs = std::filesystem;

namespace {

Config small_config() {
    Config c = default_config();
    c.policy.hidden = 16;
    c.policy.critic_hidden = 16;
    c.policy.qhat_hidden = 8;
    c.policy.key_dim = 4;
    c.policy.slice_embed = 4;
    c.policy.history = 3;
    c.validate();
    return c;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("slicesim_trace_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

controller::Trajectory short_run(const Config& cfg, std::uint64_t seed) {
    policy::Policy pol(cfg.policy, cfg.env.share_floor, cfg.train.gamma);
    trainer::EpisodeContext ctx(cfg, seed);
    controller::LoopOptions o;
    o.horizon = 15;
    o.hold_until_tick = 2;
    return controller::run_loop(ctx, pol, cfg, o);
}

}  // namespace

TEST_CASE("format_double round trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 123456.789}) CHECK(std::stod(trace::format_double(v)) == v);
    CHECK(trace::format_double(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("written traces replay and are deterministic") {
    const Config cfg = small_config();
    const auto a = scratch("a"), b = scratch("b");
    trace::Manifest m{"test", {5}};
    trace::write_run(a, short_run(cfg, 5), cfg, m);
    trace::write_run(b, short_run(cfg, 5), cfg, m);

    const auto v = trace::replay(a);
    for (const auto& f : v.failures) MESSAGE(f);
    CHECK(v.pass);
    CHECK(v.rows_checked == 15 * kNumSlices);
    CHECK(v.attention_checked == 13 * kNumSlices);
    CHECK(v.explanations_checked == 13 * kNumSlices);

    for (const char* f : {trace::kTraceFile, trace::kAttentionFile, trace::kExplanationFile, trace::kEventFile, trace::kManifestFile})
        CHECK(slurp(a / f) == slurp(b / f));

    const auto j = trace::read_manifest(a);
    CHECK(j.at("config_hash").get<std::string>() == hex64(config_hash(cfg)));
    CHECK(j.at("seeds") == nlohmann::json::array({5}));
}

TEST_CASE("tampered reward cell fails replay and names the row") {
    const Config cfg = small_config();
    const auto dir = scratch("tamper");
    trace::write_run(dir, short_run(cfg, 6), cfg, {"test", {6}});
    std::vector<std::string> lines;
    {
        std::ifstream is(dir / trace::kTraceFile);
        for (std::string l; std::getline(is, l);) lines.push_back(l);
    }
    const auto& cols = trace::trace_columns();
    const auto reward_col = std::find(cols.begin(), cols.end(), "reward") - cols.begin();
    // Line 11 of the file: tick 3, the second slice.
    std::vector<std::string> cells;
    {
        std::stringstream ss(lines[10]);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    }
    cells[static_cast<std::size_t>(reward_col)] = "0.123";
    std::string joined;
    for (std::size_t i = 0; i < cells.size(); ++i) joined += (i ? "," : "") + cells[i];
    lines[10] = joined;
    {
        std::ofstream os(dir / trace::kTraceFile, std::ios::binary);
        for (const auto& l : lines) os << l << '\n';
    }
    const auto v = trace::replay(dir);
    CHECK_FALSE(v.pass);
    REQUIRE(v.failures.size() >= 1);
    bool named = false;
    for (const auto& f : v.failures) named = named || f.find("line 11") != std::string::npos;
    CHECK(named);
}

TEST_CASE("schema errors") {
    const auto dir = scratch("schema");
    CHECK_THROWS_AS(trace::replay(dir), trace::SchemaError);
    const Config cfg = small_config();
    trace::write_manifest(dir, {"test", {1}}, cfg);
    CHECK(fs::exists(dir / trace::kManifestFile));
    CHECK_THROWS_AS(trace::replay(dir), trace::SchemaError);
}
