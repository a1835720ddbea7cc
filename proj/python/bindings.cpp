#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "slicesim/cli.hpp"
#include "slicesim/config.hpp"
#include "slicesim/env.hpp"
#include "slicesim/link.hpp"
#include "slicesim/policy.hpp"
#include "slicesim/scenario.hpp"
#include "slicesim/trace.hpp"
#include "slicesim/utility.hpp"

#include <sstream>

namespace py = pybind11;
using namespace slicesim;

namespace {

Config parse_config(const std::string& text) {
    return text.empty() ? default_config() : config_from_json(nlohmann::json::parse(text));
}

py::dict qos_dict(const QosAchieved& q) {
    py::dict d;
    d["latency_ms"] = q.latency_ms;
    d["reliability"] = q.reliability;
    d["throughput_mbps"] = q.throughput_mbps;
    d["power_used_mw"] = q.power_used_mw;
    return d;
}

class PyEnv {
public:
    PyEnv(const std::string& config_json, std::uint64_t seed) : cfg_(parse_config(config_json)), env_(cfg_.env, seed) {}

    py::list step(const ShareMatrix& shares, bool expected) {
        const auto r = env_.step_shares(shares, expected ? env::StepMode::Expected : env::StepMode::Stochastic);
        py::list out;
        for (const auto& q : r.qos) out.append(qos_dict(q));
        return out;
    }
    std::vector<double> state() const {
        const auto& x = env_.state().x;
        return {x.begin(), x.end()};
    }
    long tick() const { return env_.tick(); }
    ShareMatrix shares() const { return env_.shares(); }
    void reset(std::uint64_t seed) { env_.reset(seed); }

private:
    Config cfg_;
    env::SliceEnv env_;
};

}  // namespace

PYBIND11_MODULE(_slicesim, m) {
    m.doc() = "Deterministic RAN slicing simulator with an explainable multi-agent PPO controller.";
    m.attr("__version__") = trace::code_version();

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("default_config", [] { return config_to_json(default_config()).dump(); },
          "Built-in configuration as a JSON string.");
    m.def("config_hash", [](const std::string& text) { return hex64(config_hash(parse_config(text))); }, py::arg("config_json") = "");
    m.def("gini", [](const std::vector<double>& x) { return utility::gini(x); });
    m.def("q_function", &env::q_function);
    m.def("derive_seed", &env::derive_seed);

    py::class_<PyEnv>(m, "SliceEnv")
        .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json") = "", py::arg("seed") = 1)
        .def("step", &PyEnv::step, py::arg("shares"), py::arg("expected") = false,
             "Advance one tick with a 3x3 share matrix (rows URLLC, eMBB, mMTC; columns power, PRB, compute).")
        .def("state", &PyEnv::state)
        .def("reset", &PyEnv::reset)
        .def_property_readonly("tick", &PyEnv::tick)
        .def_property_readonly("shares", &PyEnv::shares);

    m.def(
        "case_study",
        [](const std::filesystem::path& checkpoint, std::uint64_t seed, bool spike, const std::string& config_json) {
            auto pol = policy::Policy::load(checkpoint);
            scenario::CaseStudyOptions o;
            o.spike_enabled = spike;
            py::gil_scoped_release nogil;
            return scenario::run_spike_case_study(pol, parse_config(config_json), seed, o).report.to_json().dump();
        },
        py::arg("checkpoint"), py::arg("seed") = 1, py::arg("spike") = true, py::arg("config_json") = "",
        "Runs the spike case study and returns the report as a JSON string.");

    m.def(
        "replay",
        [](const std::filesystem::path& dir) {
            const auto v = trace::replay(dir);
            return py::make_tuple(v.pass, v.failures);
        },
        "Verifies a trace directory; returns (passed, failures).");

    m.def(
        "main",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "slicesim");
            std::vector<const char*> argv;
            for (auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(rc, out.str(), err.str());
        },
        "Runs the command line interface in-process; returns (exit_code, stdout, stderr).");
}
