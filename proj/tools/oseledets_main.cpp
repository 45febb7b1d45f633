// Command line front end. Everything numerical lives in the headers; this
// file only assembles a RunConfig from a config file plus flag overrides and
// maps failures to exit codes:
//   0 success, 1 numeric failure, 2 bad configuration,
//   3 ambiguous clustering / dimension collapse (longer horizon may help),
//   4 surrogate constants diverging.

#include <clocale>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "oseledets/runner.hpp"

namespace {

oseledets::Json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw oseledets::ConfigError("cannot open config file '" + path + "'");
    try {
        return oseledets::Json::parse(in);
    } catch (const oseledets::Json::parse_error& e) {
        throw oseledets::ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

oseledets::Json parse_params(const std::string& text) {
    try {
        oseledets::Json p = oseledets::Json::parse(text);
        if (!p.is_object()) throw oseledets::ConfigError("--params must be a JSON object");
        return p;
    } catch (const oseledets::Json::parse_error& e) {
        throw oseledets::ConfigError(std::string("--params is not valid JSON: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");

    CLI::App app{"Lyapunov spectra, Oseledets splittings, and structure checks "
                 "for matrix cocycles over invertible base maps"};
    app.set_version_flag("--version", oseledets::kToolVersion);
    app.require_subcommand(1);

    CLI::App* run_cmd = app.add_subcommand(
        "run", "compute one report pipeline into an output directory");
    std::string command_pos, config_path, system_name, matrix_text, params_text;
    std::string epsilon_text, split_text, output_dir;
    long long seed = 0, horizon = 0, samples = 0, threads = 0;
    double delta = 0.0, eps0 = 0.0;
    run_cmd->add_option("command", command_pos,
                        "pipeline: spectrum, splitting, verify, regularity, holder, dichotomy");
    auto* o_config = run_cmd->add_option("--config", config_path, "JSON config file");
    auto* o_system = run_cmd->add_option("--system", system_name, "builtin system name");
    auto* o_matrix = run_cmd->add_option(
        "--A", matrix_text, "constant system matrix, rows ';'-separated, entries ','-separated");
    auto* o_params = run_cmd->add_option("--params", params_text, "system parameters, JSON object");
    auto* o_seed = run_cmd->add_option("--seed", seed, "sampler seed");
    auto* o_horizon = run_cmd->add_option("--horizon", horizon, "growth horizon (>= 10)");
    auto* o_samples = run_cmd->add_option("--samples", samples, "number of sampled base points");
    auto* o_delta = run_cmd->add_option("--delta", delta, "target measure deficit, in (0, 1)");
    auto* o_epsilon =
        run_cmd->add_option("--epsilon", epsilon_text, "tempering rate, or 'auto'");
    auto* o_split =
        run_cmd->add_option("--split-index", split_text, "splitting index, or 'all'");
    auto* o_eps0 = run_cmd->add_option("--eps0", eps0, "pair-distance cutoff for scaling fits");
    auto* o_out = run_cmd->add_option("-o,--output-dir", output_dir, "report directory");
    auto* o_cache = run_cmd->add_flag("--cache", "reuse cached splittings (see "
                                                 "OSELEDETS_CACHE_DIR)");
    auto* o_threads = run_cmd->add_option("--threads", threads,
                                          "worker threads (0 = machine parallelism)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        oseledets::Json doc =
            o_config->count() ? load_config_file(config_path) : oseledets::Json::object();
        if (!doc.is_object())
            throw oseledets::ConfigError("config file must hold a JSON object");

        if (!command_pos.empty()) doc["command"] = command_pos;
        if (o_system->count()) doc["system"] = system_name;
        if (o_params->count()) doc["params"] = parse_params(params_text);
        if (o_matrix->count()) {
            if (!doc.contains("params") || !doc["params"].is_object())
                doc["params"] = oseledets::Json::object();
            doc["params"]["A"] = matrix_text;
            if (!doc.contains("system")) doc["system"] = "constant";
        }
        if (o_seed->count()) doc["seed"] = seed;
        if (o_horizon->count()) doc["horizon"] = horizon;
        if (o_samples->count()) doc["samples"] = samples;
        if (o_delta->count()) doc["delta"] = delta;
        if (o_epsilon->count()) {
            char* end = nullptr;
            const double v = std::strtod(epsilon_text.c_str(), &end);
            if (epsilon_text == "auto")
                doc["epsilon"] = "auto";
            else if (end != epsilon_text.c_str() && *end == '\0')
                doc["epsilon"] = v;
            else
                throw oseledets::ConfigError("--epsilon must be a number or 'auto'");
        }
        if (o_split->count()) {
            if (split_text == "all") {
                doc["split_index"] = "all";
            } else {
                try {
                    std::size_t used = 0;
                    const int v = std::stoi(split_text, &used);
                    if (used != split_text.size()) throw std::invalid_argument(split_text);
                    doc["split_index"] = v;
                } catch (const std::exception&) {
                    throw oseledets::ConfigError("--split-index must be an integer or 'all'");
                }
            }
        }
        if (o_eps0->count()) doc["eps0"] = eps0;
        if (o_out->count()) doc["output_dir"] = output_dir;
        if (o_cache->count()) doc["cache"] = true;
        if (o_threads->count()) doc["threads"] = threads;

        const oseledets::RunConfig cfg = oseledets::config_from_json(doc);
        const oseledets::ReportBundle bundle = oseledets::run(cfg);
        for (const auto& f : bundle.files)
            std::cout << "wrote " << (std::filesystem::path(cfg.output_dir) / f).string() << "\n";
        return 0;
    } catch (const oseledets::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const oseledets::Error& e) {
        std::cerr << "error: " << e.what();
        if (e.code() == oseledets::ErrorCode::ClusterAmbiguity ||
            e.code() == oseledets::ErrorCode::DimensionCollapse) {
            if (std::string(e.what()).find("increase the horizon") == std::string::npos)
                std::cerr << " (hint: increase the horizon)";
            std::cerr << "\n";
            return 3;
        }
        std::cerr << "\n";
        if (e.code() == oseledets::ErrorCode::Unreachable) return 4;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
