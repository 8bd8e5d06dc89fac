// Copyright 2026 GBT Authors
// SPDX-License-Identifier: Apache-2.0
//
// gbt: validate, compile, simulate, sweep and serve persona-gated process
// definitions.

#include "gbt/diagnostic.hpp"
#include "gbt/service.hpp"
#include "gbt/sim.hpp"
#include "gbt/spec_io.hpp"
#include "gbt/tree.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <pthread.h>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;
constexpr int kEpisodeFailed = 3;

struct Inputs {
    std::string process_path;
    std::string personas_path;
};

void add_inputs(CLI::App* cmd, Inputs& in)
{
    cmd->add_option("process", in.process_path, "Process definition (JSON)")->required();
    cmd->add_option("personas", in.personas_path, "Persona file (JSON)")->required();
}

void print_diagnostics(const gbt::Diagnostics& diags, std::ostream& out)
{
    for (const auto& d : diags) out << gbt::format_diagnostic(d) << '\n';
}

// Reads and loads both files. Returns an exit code on failure.
std::optional<int> load(const Inputs& in, gbt::LoadedDefinitions& defs)
{
    std::string texts[2];
    const std::string* paths[2] = {&in.process_path, &in.personas_path};
    for (int i = 0; i < 2; ++i) {
        std::error_code ec;
        auto text = std::filesystem::is_regular_file(*paths[i], ec) ? gbt::read_text_file(*paths[i]) : std::nullopt;
        if (!text) {
            std::cerr << "error: cannot read '" << *paths[i] << "'\n";
            return kUsage;
        }
        texts[i] = std::move(*text);
    }
    try {
        defs = gbt::load_definitions(texts[0], texts[1]);
    } catch (const gbt::RejectedInput& e) {
        print_diagnostics(e.diagnostics(), std::cerr);
        return kInvalid;
    }
    return std::nullopt;
}

std::optional<gbt::BehaviorTree> compile_or_report(const gbt::LoadedDefinitions& defs)
{
    if (gbt::has_errors(defs.diagnostics)) {
        print_diagnostics(defs.diagnostics, std::cerr);
        return std::nullopt;
    }
    return gbt::compile(defs.process, defs.personas);
}

struct PolicyOptions {
    std::string mode = "responsive";
    double fail_probability = 0.0;
    std::string latency = "2000";
    std::vector<std::string> script;
    bool ignore_capabilities = false;
    double robot_fail = 0.0;
    double robot_scale = 1.0;
};

void add_policy_options(CLI::App* cmd, PolicyOptions& p)
{
    cmd->add_option("--fail-prob", p.fail_probability, "Human fail probability (faulty policy)")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--latency", p.latency, "Acknowledge latency in ms: N or MIN:MAX")->capture_default_str();
    cmd->add_option("--script", p.script, "Scripted responses ACTION=ack|fail|silent, in order");
    cmd->add_flag("--ignore-capabilities", p.ignore_capabilities,
                  "Simulated human answers actions it cannot perform");
    cmd->add_option("--robot-fail", p.robot_fail, "Robot fail probability")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--robot-scale", p.robot_scale, "Factor over nominal robot durations")
        ->check(CLI::PositiveNumber);
}

gbt::Duration parse_ms(const std::string& s)
{
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size() || v < 0) throw gbt::ValidationError("invalid latency '" + s + "'");
    return gbt::Duration{v};
}

gbt::HumanPolicy make_policy(const std::string& mode_text, const PolicyOptions& p)
{
    const auto mode = gbt::parse_policy_mode(mode_text);
    if (!mode) throw gbt::ValidationError("unknown policy '" + mode_text + "'");
    gbt::HumanPolicy policy;
    policy.mode = *mode;
    policy.fail_probability = p.fail_probability;
    policy.respects_capabilities = !p.ignore_capabilities;
    const auto colon = p.latency.find(':');
    if (colon == std::string::npos) {
        policy.ack_latency = gbt::Latency::constant(parse_ms(p.latency));
    } else {
        policy.ack_latency =
            gbt::Latency::uniform(parse_ms(p.latency.substr(0, colon)), parse_ms(p.latency.substr(colon + 1)));
    }
    for (const auto& step : p.script) {
        const auto eq = step.find('=');
        if (eq == std::string::npos) throw gbt::ValidationError("script step must be ACTION=RESPONSE: '" + step + "'");
        const auto r = step.substr(eq + 1);
        gbt::HumanPolicy::Step s{step.substr(0, eq)};
        if (r == "ack") {
            s.response = gbt::HumanPolicy::Response::Ack;
        } else if (r == "fail") {
            s.response = gbt::HumanPolicy::Response::Fail;
        } else if (r == "silent") {
            s.response = gbt::HumanPolicy::Response::Silent;
        } else {
            throw gbt::ValidationError("unknown script response '" + r + "'");
        }
        policy.script.push_back(std::move(s));
    }
    return policy;
}

gbt::RobotModel make_robot(const PolicyOptions& p)
{
    return {p.robot_scale, p.robot_fail};
}

void configure_logging()
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("gbt"));
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("GBT_LOG")) {
        spdlog::set_level(spdlog::level::from_str(lvl));
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Persona-gated behavior trees for assistive human-robot workplaces"};
    app.require_subcommand(1);

    Inputs in;

    auto* validate = app.add_subcommand("validate", "Check a process definition and persona file");
    add_inputs(validate, in);

    auto* compile_cmd = app.add_subcommand("compile", "Print the compiled tree as DOT or JSON");
    add_inputs(compile_cmd, in);
    bool dot = false;
    bool json = false;
    auto* dot_flag = compile_cmd->add_flag("--dot", dot, "Graphviz output");
    compile_cmd->add_flag("--json", json, "Tree JSON output")->excludes(dot_flag);

    auto* simulate = app.add_subcommand("simulate", "Run one simulated episode and print its stats row");
    add_inputs(simulate, in);
    gbt::PersonaId persona = 0;
    std::uint64_t seed = 0;
    std::string trace_path;
    bool header = false;
    PolicyOptions sim_opts;
    simulate->add_option("--persona", persona, "Persona id")->required();
    simulate->add_option("--policy", sim_opts.mode, "responsive, silent, faulty or scripted")->capture_default_str();
    simulate->add_option("--seed", seed, "64-bit seed")->capture_default_str();
    simulate->add_option("--trace", trace_path, "Write the JSONL trace here");
    simulate->add_flag("--header", header, "Print the CSV header first");
    add_policy_options(simulate, sim_opts);

    auto* sweep_cmd = app.add_subcommand("sweep", "Simulate every persona under each policy and seed");
    add_inputs(sweep_cmd, in);
    std::vector<std::string> policies{"responsive"};
    std::vector<std::uint64_t> seeds{0};
    unsigned threads = 0;
    PolicyOptions sweep_opts;
    sweep_cmd->add_option("--policy", policies, "Policies to sweep")->capture_default_str();
    sweep_cmd->add_option("--seeds", seeds, "Seeds to sweep")->capture_default_str();
    sweep_cmd->add_option("--threads", threads, "Worker threads (0: all cores)");
    add_policy_options(sweep_cmd, sweep_opts);

    auto* serve = app.add_subcommand("serve", "Run the session service");
    add_inputs(serve, in);
    std::string bind_text = "127.0.0.1:8080";
    double serve_scale = 1.0;
    serve->add_option("--bind", bind_text, "host:port (GBT_BIND overrides)")->capture_default_str();
    serve->add_option("--robot-scale", serve_scale, "Factor over nominal robot durations")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    configure_logging();
    gbt::LoadedDefinitions defs;
    if (auto rc = load(in, defs)) return *rc;

    try {
        if (*validate) {
            print_diagnostics(defs.diagnostics, std::cout);
            return gbt::has_errors(defs.diagnostics) ? kInvalid : kOk;
        }

        if (*compile_cmd) {
            if (!dot && !json) {
                std::cerr << "error: one of --dot or --json is required\n" << compile_cmd->help();
                return kUsage;
            }
            const auto tree = compile_or_report(defs);
            if (!tree) return kInvalid;
            std::cout << (dot ? gbt::export_dot(*tree) : gbt::export_tree_json(*tree));
            return kOk;
        }

        if (*simulate) {
            const auto tree = compile_or_report(defs);
            if (!tree) return kInvalid;
            bool known = false;
            for (const auto& p : defs.personas) known = known || p.id == persona;
            if (!known) {
                std::cerr << "error: unknown persona " << persona << '\n';
                return kUsage;
            }
            const auto policy = make_policy(sim_opts.mode, sim_opts);
            const auto trace =
                gbt::simulate(*tree, defs.process, defs.personas, persona, policy, make_robot(sim_opts), seed);
            if (!trace_path.empty()) {
                std::ofstream out(trace_path, std::ios::binary);
                out << gbt::to_jsonl(trace);
                if (!out) {
                    std::cerr << "error: cannot write '" << trace_path << "'\n";
                    return kUsage;
                }
            }
            auto stats = gbt::summarize(trace);
            stats.policy = policy.label();
            stats.seed = seed;
            if (header) std::cout << gbt::kStatsCsvHeader << '\n';
            std::cout << gbt::to_csv_row(stats) << '\n';
            return stats.outcome.completed ? kOk : kEpisodeFailed;
        }

        if (*sweep_cmd) {
            if (!compile_or_report(defs)) return kInvalid;
            std::vector<gbt::HumanPolicy> grid;
            for (const auto& p : policies) grid.push_back(make_policy(p, sweep_opts));
            const auto rows = gbt::sweep(defs.process, defs.personas, grid, seeds, make_robot(sweep_opts), threads);
            std::cout << gbt::to_csv(rows);
            return kOk;
        }

        if (*serve) {
            if (const char* env = std::getenv("GBT_BIND")) bind_text = env;
            const auto [host, port] = gbt::parse_bind_address(bind_text);
            if (gbt::has_errors(defs.diagnostics)) {
                print_diagnostics(defs.diagnostics, std::cerr);
                return kInvalid;
            }
            sigset_t signals;
            sigemptyset(&signals);
            sigaddset(&signals, SIGINT);
            sigaddset(&signals, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);
            gbt::ServiceOptions options;
            options.robot_duration_scale = serve_scale;
            gbt::Service service(std::move(defs), options);
            const auto bound = service.bind(host, port);
            if (!bound) {
                spdlog::error("cannot bind {}:{}", host, port);
                return kUsage;
            }
            spdlog::info("listening on {}:{}", host, *bound);
            service.start();
            int sig = 0;
            sigwait(&signals, &sig);
            spdlog::info("shutting down");
            service.stop();
            return kOk;
        }
    } catch (const gbt::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const gbt::LookupError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const gbt::RejectedInput& e) {
        print_diagnostics(e.diagnostics(), std::cerr);
        return kInvalid;
    }
    return kUsage;
}
