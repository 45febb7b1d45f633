#pragma once
// Report pipeline behind the CLI: strict config parsing, stage execution with
// an optional content-addressed splitting cache, deterministic report files.
// Timings and machine-specific data go only into manifest.json and
// config.json, so the numeric reports (spectrum.json, *.csv, verify.json,
// holder.json, dichotomy.json, splitting.json) are byte-identical across
// repeat runs, thread counts, output directories, and cache states.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "oseledets/builtins.hpp"
#include "oseledets/cache.hpp"
#include "oseledets/holder.hpp"
#include "oseledets/io.hpp"
#include "oseledets/met.hpp"
#include "oseledets/regularity.hpp"

namespace oseledets {

struct RunConfig {
    std::string system;
    Json params = Json::object();
    std::uint64_t seed = 0;
    std::string command;
    int horizon = 400;
    int samples = 50;
    double delta = 0.1;
    bool epsilon_auto = true;  // "epsilon": "auto" in the config
    double epsilon = 0.0;
    bool all_indices = true;  // "split_index": "all" in the config
    int split_index = 1;
    double eps0 = 0.05;
    std::string output_dir;
    bool cache = false;
    int threads = 0;  // 0: machine parallelism
};

inline const std::set<std::string>& known_commands() {
    static const std::set<std::string> cmds = {"spectrum",   "splitting", "verify",
                                              "regularity", "holder",    "dichotomy"};
    return cmds;
}

namespace detail {

inline const Json& require_key(const Json& doc, const char* key) {
    if (!doc.contains(key)) throw ConfigError(std::string("config is missing \"") + key + "\"");
    return doc.at(key);
}

inline std::string config_string(const Json& doc, const char* key) {
    const Json& v = require_key(doc, key);
    if (!v.is_string()) throw ConfigError(std::string("\"") + key + "\" must be a string");
    return v.get<std::string>();
}

inline long long config_int(const Json& v, const char* key) {
    if (!v.is_number_integer())
        throw ConfigError(std::string("\"") + key + "\" must be an integer");
    return v.get<long long>();
}

inline double config_real(const Json& v, const char* key) {
    if (!v.is_number()) throw ConfigError(std::string("\"") + key + "\" must be a number");
    return v.get<double>();
}

}  // namespace detail

inline RunConfig config_from_json(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = {
        "system", "params",      "seed", "command",    "horizon", "samples", "delta",
        "epsilon", "split_index", "eps0", "output_dir", "cache",   "threads"};
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown config key \"" + it.key() + "\"");

    RunConfig cfg;
    cfg.system = detail::config_string(doc, "system");
    cfg.command = detail::config_string(doc, "command");
    if (!known_commands().count(cfg.command))
        throw ConfigError("unknown command \"" + cfg.command + "\"");
    cfg.output_dir = detail::config_string(doc, "output_dir");
    if (cfg.output_dir.empty()) throw ConfigError("\"output_dir\" must not be empty");

    if (doc.contains("params")) {
        if (!doc.at("params").is_object()) throw ConfigError("\"params\" must be an object");
        cfg.params = doc.at("params");
    }
    if (doc.contains("seed")) {
        const long long s = detail::config_int(doc.at("seed"), "seed");
        if (s < 0) throw ConfigError("\"seed\" must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (doc.contains("horizon")) {
        const long long h = detail::config_int(doc.at("horizon"), "horizon");
        if (h < 10) throw ConfigError("\"horizon\" must be at least 10");
        cfg.horizon = static_cast<int>(h);
    }
    if (doc.contains("samples")) {
        const long long n = detail::config_int(doc.at("samples"), "samples");
        if (n < 1) throw ConfigError("\"samples\" must be at least 1");
        cfg.samples = static_cast<int>(n);
    }
    if (doc.contains("delta")) {
        cfg.delta = detail::config_real(doc.at("delta"), "delta");
        if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
            throw ConfigError("\"delta\" must lie strictly between 0 and 1");
    }
    if (doc.contains("epsilon")) {
        const Json& e = doc.at("epsilon");
        if (e.is_string()) {
            if (e.get<std::string>() != "auto")
                throw ConfigError("\"epsilon\" must be a positive number or \"auto\"");
            cfg.epsilon_auto = true;
        } else {
            cfg.epsilon = detail::config_real(e, "epsilon");
            if (!(cfg.epsilon > 0.0)) throw ConfigError("\"epsilon\" must be positive");
            cfg.epsilon_auto = false;
        }
    }
    if (doc.contains("split_index")) {
        const Json& s = doc.at("split_index");
        if (s.is_string()) {
            if (s.get<std::string>() != "all")
                throw ConfigError("\"split_index\" must be a positive integer or \"all\"");
            cfg.all_indices = true;
        } else {
            const long long i = detail::config_int(s, "split_index");
            if (i < 1) throw ConfigError("\"split_index\" must be at least 1");
            cfg.split_index = static_cast<int>(i);
            cfg.all_indices = false;
        }
    }
    if (doc.contains("eps0")) {
        cfg.eps0 = detail::config_real(doc.at("eps0"), "eps0");
        if (!(cfg.eps0 > 0.0)) throw ConfigError("\"eps0\" must be positive");
    }
    if (doc.contains("cache")) {
        if (!doc.at("cache").is_boolean()) throw ConfigError("\"cache\" must be a boolean");
        cfg.cache = doc.at("cache").get<bool>();
    }
    if (doc.contains("threads")) {
        const long long t = detail::config_int(doc.at("threads"), "threads");
        if (t < 0) throw ConfigError("\"threads\" must be nonnegative");
        cfg.threads = static_cast<int>(t);
    }
    return cfg;
}

inline Json config_to_json(const RunConfig& cfg) {
    Json doc = Json::object();
    doc["system"] = cfg.system;
    doc["params"] = cfg.params;
    doc["seed"] = cfg.seed;
    doc["command"] = cfg.command;
    doc["horizon"] = cfg.horizon;
    doc["samples"] = cfg.samples;
    doc["delta"] = cfg.delta;
    doc["epsilon"] = cfg.epsilon_auto ? Json("auto") : Json(cfg.epsilon);
    doc["split_index"] = cfg.all_indices ? Json("all") : Json(cfg.split_index);
    doc["eps0"] = cfg.eps0;
    doc["output_dir"] = cfg.output_dir;
    doc["cache"] = cfg.cache;
    doc["threads"] = cfg.threads;
    return doc;
}

// Indexed work distribution over a shared atomic counter. Workers must only
// touch preallocated per-index slots; the first exception wins and is
// rethrown on the calling thread after everyone has stopped.
template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
    if (threads <= 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw ? static_cast<int>(hw) : 1;
    }
    threads = std::min(threads, std::max(n, 1));
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> bail{false};
    std::mutex err_mtx;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            if (bail.load(std::memory_order_relaxed)) return;
            const int i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mtx);
                if (!first_error) first_error = std::current_exception();
                bail.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct SplitContext {
    const CocycleSystem* sys = nullptr;
    const SpectrumReport* spectrum = nullptr;
    std::string system_desc;  // pins name, params, seed (and adjointness)
    int horizon = 0;
    bool use_cache = false;
    std::filesystem::path dir;
};

inline SplittingSample cached_splitting(const SplitContext& ctx, const Point& x) {
    if (!ctx.use_cache) return oseledets_splitting(*ctx.sys, x, *ctx.spectrum, ctx.horizon);
    const std::string key = cache_key(ctx.system_desc, x, ctx.horizon, "splitting");
    if (auto hit = cache_get(ctx.dir, key)) {
        try {
            return parse_splitting(*hit);
        } catch (const Error&) {
            // checksum passed but the payload did not parse; fall through
        }
    }
    SplittingSample s = oseledets_splitting(*ctx.sys, x, *ctx.spectrum, ctx.horizon);
    cache_put(ctx.dir, key, serialize_splitting(s));
    return s;
}

struct ReportBundle {
    Json config_echo;
    Json manifest;
    std::vector<std::string> files;                // file names, in write order
    std::vector<std::pair<std::string, double>> stage_ms;
};

namespace detail {

class StageClock {
public:
    explicit StageClock(ReportBundle& bundle) : bundle_(bundle) {}

    template <typename Fn>
    auto time(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record(name, t0);
        } else {
            auto out = fn();
            record(name, t0);
            return out;
        }
    }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0) {
        const auto dt = std::chrono::steady_clock::now() - t0;
        bundle_.stage_ms.emplace_back(
            name, std::chrono::duration<double, std::milli>(dt).count());
    }

    ReportBundle& bundle_;
};

inline std::vector<std::string> point_cells(const Point& x) {
    std::vector<std::string> cells;
    for (int c = 0; c < x.size(); ++c) cells.push_back(format_double(x(c)));
    return cells;
}

inline void append(std::vector<std::string>& to, std::vector<std::string> extra) {
    for (auto& s : extra) to.push_back(std::move(s));
}

// Splitting indices whose profile should be reported: every block for "all",
// the one configured index otherwise.
inline std::vector<int> report_indices(const RunConfig& cfg, const SpectrumReport& spec) {
    if (!cfg.all_indices) return {cfg.split_index};
    std::vector<int> out;
    for (int i = 1; i <= spec.count(); ++i) out.push_back(i);
    return out;
}

// The split the dichotomy runs across: slow block = everything with a
// negative exponent. Clamped into the valid range so the library's own
// validation produces the error message when no split can work.
inline int dichotomy_index(const RunConfig& cfg, const SpectrumReport& spec) {
    if (!cfg.all_indices) return cfg.split_index;
    int negatives = 0;
    for (double e : spec.exponents)
        if (e < 0.0) ++negatives;
    return std::clamp(negatives, 1, std::max(1, spec.count() - 1));
}

}  // namespace detail

inline ReportBundle run(const RunConfig& cfg) {
    namespace fs = std::filesystem;

    // System construction failures are configuration failures: the inputs
    // were invalid, no numeric work has started yet.
    CocycleSystem sys;
    try {
        sys = make_builtin(cfg.system, cfg.params, cfg.seed);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownSystem || e.code() == ErrorCode::BadParams)
            throw ConfigError(e.what());
        throw;
    }

    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    ReportBundle bundle;
    bundle.config_echo = config_to_json(cfg);
    detail::StageClock clock(bundle);

    const auto emit = [&](const std::string& name, const std::string& content) {
        write_text_atomic(out_dir / name, content);
        bundle.files.push_back(name);
    };
    const auto emit_json = [&](const std::string& name, const Json& doc) {
        emit(name, doc.dump(2) + "\n");
    };

    const std::string desc =
        cfg.system + "|" + cfg.params.dump() + "|seed:" + std::to_string(cfg.seed);
    const fs::path cdir = cache_dir();

    // Every command anchors on the spectrum at the first sampled point; the
    // splitting engine reuses it at every other point of the same system.
    const Point x0 = sys.base.sampler(0);
    const SpectrumReport spec = clock.time("spectrum", [&] {
        return lyapunov_spectrum(sys, x0, cfg.horizon);
    });
    {
        Json sj = spectrum_to_json(spec);
        sj["system"] = cfg.system;
        sj["point"] = point_to_json(x0);
        emit_json("spectrum.json", sj);
    }

    SplitContext ctx{&sys, &spec, desc, cfg.horizon, cfg.cache, cdir};

    const auto resolved_epsilon = [&](int i) {
        return cfg.epsilon_auto ? default_epsilon(spec, i) : cfg.epsilon;
    };
    const auto echo_epsilons = [&](const std::vector<int>& indices) {
        Json res = Json::object();
        for (int i : indices) res[std::to_string(i)] = json_number(resolved_epsilon(i));
        bundle.config_echo["resolved_epsilon"] = std::move(res);
    };

    const auto sample_points = [&] {
        std::vector<Point> pts;
        pts.reserve(static_cast<std::size_t>(cfg.samples));
        for (int j = 0; j < cfg.samples; ++j)
            pts.push_back(sys.base.sampler(static_cast<std::uint64_t>(j)));
        return pts;
    };
    const auto splittings_at = [&](const std::vector<Point>& pts, const SplitContext& c) {
        std::vector<SplittingSample> out(pts.size());
        parallel_for(static_cast<int>(pts.size()), cfg.threads,
                     [&](int j) { out[static_cast<std::size_t>(j)] =
                                      cached_splitting(c, pts[static_cast<std::size_t>(j)]); });
        return out;
    };

    if (cfg.command == "splitting") {
        const auto pts = sample_points();
        const auto splits =
            clock.time("splitting", [&] { return splittings_at(pts, ctx); });

        CsvTable csv;
        csv.header = {"sample"};
        for (int c = 0; c < sys.base.state_dim; ++c)
            csv.header.push_back("x" + std::to_string(c));
        csv.header.push_back("reconstruction");
        Json samples = Json::array();
        for (int j = 0; j < cfg.samples; ++j) {
            const auto& s = splits[static_cast<std::size_t>(j)];
            std::vector<std::string> row = {std::to_string(j)};
            detail::append(row, detail::point_cells(s.point));
            row.push_back(format_double(s.residuals.reconstruction));
            csv.add_row(std::move(row));

            Json spaces = Json::array(), slow = Json::array(), fast = Json::array();
            for (const auto& sp : s.spaces) spaces.push_back(subspace_to_json(sp));
            for (const auto& sp : s.slow_sums) slow.push_back(subspace_to_json(sp));
            for (const auto& sp : s.fast_sums) fast.push_back(subspace_to_json(sp));
            samples.push_back(Json{{"sample", j},
                                   {"point", point_to_json(s.point)},
                                   {"spaces", std::move(spaces)},
                                   {"slow_sums", std::move(slow)},
                                   {"fast_sums", std::move(fast)},
                                   {"reconstruction", json_number(s.residuals.reconstruction)}});
        }
        emit("splitting.csv", csv.to_string());
        emit_json("splitting.json", Json{{"system", cfg.system},
                                         {"horizon", cfg.horizon},
                                         {"exponents", spectrum_to_json(spec)["exponents"]},
                                         {"samples", std::move(samples)}});
    } else if (cfg.command == "verify") {
        const auto pts = sample_points();
        std::vector<Point> fpts;
        fpts.reserve(pts.size());
        for (const auto& p : pts) fpts.push_back(sys.base.forward(p));

        const auto splits = clock.time("splitting", [&] { return splittings_at(pts, ctx); });
        const auto fsplits =
            clock.time("splitting_image", [&] { return splittings_at(fpts, ctx); });

        const CocycleSystem adj = adjoint_cocycle(sys);
        const SpectrumReport adj_spec = clock.time("adjoint_spectrum", [&] {
            return lyapunov_spectrum(adj, x0, cfg.horizon);
        });
        SplitContext actx{&adj, &adj_spec, desc + "|adjoint", cfg.horizon, cfg.cache, cdir};
        const auto asplits =
            clock.time("adjoint_splitting", [&] { return splittings_at(pts, actx); });

        double max_eq = 0.0, max_du = 0.0;
        Json samples = Json::array();
        std::vector<std::vector<double>> eq(pts.size()), du(pts.size());
        clock.time("residuals", [&] {
            parallel_for(cfg.samples, cfg.threads, [&](int j) {
                const auto ju = static_cast<std::size_t>(j);
                eq[ju] = equivariance_residuals(sys, splits[ju], fsplits[ju]);
                du[ju] = adjoint_duality_residuals(splits[ju], asplits[ju]);
            });
        });
        for (int j = 0; j < cfg.samples; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            Json eqj = Json::array(), duj = Json::array();
            for (double v : eq[ju]) {
                max_eq = std::max(max_eq, v);
                eqj.push_back(json_number(v));
            }
            for (double v : du[ju]) {
                max_du = std::max(max_du, v);
                duj.push_back(json_number(v));
            }
            samples.push_back(Json{{"sample", j},
                                   {"point", point_to_json(pts[ju])},
                                   {"equivariance", std::move(eqj)},
                                   {"duality", std::move(duj)}});
        }
        emit_json("verify.json",
                  Json{{"system", cfg.system},
                       {"horizon", cfg.horizon},
                       {"forward_exponents", spectrum_to_json(spec)["exponents"]},
                       {"adjoint_exponents", spectrum_to_json(adj_spec)["exponents"]},
                       {"samples", std::move(samples)},
                       {"max_equivariance_residual", json_number(max_eq)},
                       {"max_duality_residual", json_number(max_du)}});
    } else if (cfg.command == "regularity") {
        const std::vector<int> indices = detail::report_indices(cfg, spec);
        echo_epsilons(indices);
        const auto pts = sample_points();
        const auto splits = clock.time("splitting", [&] { return splittings_at(pts, ctx); });

        std::vector<std::vector<RegularityProfile>> profs(
            pts.size(), std::vector<RegularityProfile>(indices.size()));
        clock.time("profiles", [&] {
            parallel_for(cfg.samples, cfg.threads, [&](int j) {
                const auto ju = static_cast<std::size_t>(j);
                for (std::size_t ii = 0; ii < indices.size(); ++ii)
                    profs[ju][ii] = regularity_profile(sys, splits[ju], indices[ii],
                                                       resolved_epsilon(indices[ii]), cfg.horizon);
            });
        });

        CsvTable csv;
        csv.header = {"sample", "i"};
        for (int c = 0; c < sys.base.state_dim; ++c)
            csv.header.push_back("x" + std::to_string(c));
        detail::append(csv.header, {"epsilon", "C_upper", "C_lower", "C_tilde", "K_direct",
                                    "K_lemma", "n_x"});
        for (int j = 0; j < cfg.samples; ++j)
            for (std::size_t ii = 0; ii < indices.size(); ++ii) {
                const RegularityProfile& p = profs[static_cast<std::size_t>(j)][ii];
                std::vector<std::string> row = {std::to_string(j), std::to_string(indices[ii])};
                detail::append(row, detail::point_cells(p.x));
                detail::append(row, {format_double(p.epsilon), format_double(p.C_upper),
                                     format_double(p.C_lower), format_double(p.C_tilde),
                                     format_double(p.K_direct), format_double(p.K_lemma),
                                     std::to_string(p.n_x)});
                csv.add_row(std::move(row));
            }
        emit("regularity.csv", csv.to_string());
    } else if (cfg.command == "holder") {
        const int pi = cfg.all_indices ? 1 : cfg.split_index;
        const double eps = resolved_epsilon(pi);
        echo_epsilons({pi});
        const auto pts = sample_points();
        const auto splits = clock.time("splitting", [&] { return splittings_at(pts, ctx); });

        std::vector<RegularityProfile> profiles(pts.size());
        clock.time("profiles", [&] {
            parallel_for(cfg.samples, cfg.threads, [&](int j) {
                const auto ju = static_cast<std::size_t>(j);
                profiles[ju] = regularity_profile(sys, splits[ju], pi, eps, cfg.horizon);
            });
        });

        // choose_level raises Unreachable when no level below the divergence
        // guard reaches measure 1 - delta; the CLI maps that to its own exit.
        const double level = choose_level(profiles, cfg.delta);
        const LambdaSet lam = build_lambda_set(profiles, level, cfg.delta);

        // Members back to sample indices by exact point match (profiles carry
        // verbatim copies of the sampled points).
        std::vector<int> member_js;
        for (const auto& m : lam.members)
            for (int j = 0; j < cfg.samples; ++j)
                if (m.x.size() == pts[static_cast<std::size_t>(j)].size() &&
                    (m.x.array() == pts[static_cast<std::size_t>(j)].array()).all()) {
                    member_js.push_back(j);
                    break;
                }

        const int k = spec.count();
        Json fits = Json::array();
        CsvTable hcsv;
        hcsv.header = {"i", "level", "delta", "beta", "L", "r2", "pair_count", "eps0"};
        CsvTable pcsv;
        pcsv.header = {"i"};
        for (int c = 0; c < sys.base.state_dim; ++c)
            pcsv.header.push_back("x" + std::to_string(c));
        for (int c = 0; c < sys.base.state_dim; ++c)
            pcsv.header.push_back("y" + std::to_string(c));
        detail::append(pcsv.header, {"rho", "dist"});

        std::vector<SubspaceSample> primal_samples;  // for the configured index
        clock.time("holder_fit", [&] {
            for (int i = 1; i <= k; ++i) {
                std::vector<SubspaceSample> field;
                field.reserve(member_js.size());
                for (int j : member_js)
                    field.push_back({pts[static_cast<std::size_t>(j)],
                                     splits[static_cast<std::size_t>(j)]
                                         .spaces[static_cast<std::size_t>(i - 1)]});
                if (i == pi) primal_samples = field;
                Json fit = Json{{"i", i}};
                try {
                    std::vector<HolderPair> pairs;
                    const HolderEstimate est =
                        estimate_holder(field, sys.base.metric, cfg.eps0, &pairs);
                    fit["beta"] = json_number(est.beta);
                    fit["L"] = json_number(est.L_const);
                    fit["r2"] = json_number(est.r2);
                    fit["pair_count"] = est.pair_count;
                    fit["zero_distances"] = est.zero_distances;
                    hcsv.add_row({std::to_string(i), format_double(level),
                                  format_double(cfg.delta), format_double(est.beta),
                                  format_double(est.L_const), format_double(est.r2),
                                  std::to_string(est.pair_count), format_double(est.eps0)});
                    for (const auto& p : pairs) {
                        std::vector<std::string> row = {std::to_string(i)};
                        detail::append(
                            row, detail::point_cells(field[static_cast<std::size_t>(p.a)].first));
                        detail::append(
                            row, detail::point_cells(field[static_cast<std::size_t>(p.b)].first));
                        detail::append(row, {format_double(p.rho), format_double(p.dist)});
                        pcsv.add_row(std::move(row));
                    }
                } catch (const Error& e) {
                    fit["error"] = std::string(e.what());
                }
                fits.push_back(std::move(fit));
            }
        });

        Json transfer;
        clock.time("complement_transfer", [&] {
            try {
                const ComplementTransfer ct =
                    complement_transfer_check(primal_samples, sys.base.metric, cfg.eps0);
                transfer = Json{{"worst_distance_gap", json_number(ct.worst_distance_gap)},
                                {"complement_beta", json_number(ct.complement.beta)},
                                {"complement_L", json_number(ct.complement.L_const)},
                                {"complement_r2", json_number(ct.complement.r2)}};
            } catch (const Error& e) {
                transfer = Json{{"error", std::string(e.what())}};
            }
        });

        int brin_tried = 0, brin_ok = 0;
        double brin_worst_ratio = 0.0;
        Json brin_failures = Json::array();
        clock.time("brin", [&] {
            const int m = static_cast<int>(member_js.size());
            for (int a = 0; a < m && brin_tried < 100; ++a) {
                for (int b = a + 1; b < m && brin_tried < 100; ++b) {
                    const auto ja = static_cast<std::size_t>(member_js[static_cast<std::size_t>(a)]);
                    const auto jb = static_cast<std::size_t>(member_js[static_cast<std::size_t>(b)]);
                    const double rho = sys.base.metric(pts[ja], pts[jb]);
                    if (!(rho > 0.0) || rho > 0.1) continue;  // the bound needs close pairs
                    ++brin_tried;
                    try {
                        const BrinReport rep = brin_consistency(sys, splits[ja], splits[jb], pi,
                                                                level, spec);
                        if (rep.ok) ++brin_ok;
                        if (rep.bound > 0.0)
                            brin_worst_ratio =
                                std::max(brin_worst_ratio, rep.observed / (2.0 * rep.bound));
                    } catch (const Error& e) {
                        brin_failures.push_back(std::string(e.what()));
                    }
                }
            }
        });
        Json brin = Json{{"pairs_tested", brin_tried},
                         {"pairs_ok", brin_ok},
                         {"rate", json_number(brin_tried ? static_cast<double>(brin_ok) /
                                                               static_cast<double>(brin_tried)
                                                         : 0.0)},
                         {"max_observed_over_bound", json_number(brin_worst_ratio)}};
        if (!brin_failures.empty()) brin["failures"] = std::move(brin_failures);

        emit("holder.csv", hcsv.to_string());
        emit("pairs.csv", pcsv.to_string());
        emit_json("holder.json", Json{{"system", cfg.system},
                                      {"split_index", pi},
                                      {"epsilon", json_number(eps)},
                                      {"delta", cfg.delta},
                                      {"level", json_number(level)},
                                      {"empirical_measure", json_number(lam.empirical_measure)},
                                      {"member_count", static_cast<int>(lam.members.size())},
                                      {"total_samples", cfg.samples},
                                      {"eps0", cfg.eps0},
                                      {"fits", std::move(fits)},
                                      {"complement_transfer", std::move(transfer)},
                                      {"brin", std::move(brin)}});
    } else if (cfg.command == "dichotomy") {
        const int di = detail::dichotomy_index(cfg, spec);
        const double eps = resolved_epsilon(di);
        echo_epsilons({di});
        bundle.config_echo["resolved_split_index"] = di;
        constexpr int kWindow = 50;

        struct PointResult {
            Point x;
            bool holds = false;
            double worst_margin = 0.0;
            double projector_defect = 0.0;
            double worst_condition = 0.0;
            double D = 1.0;
            double lambda_rate = 0.0;
        };
        std::vector<PointResult> results(static_cast<std::size_t>(cfg.samples));
        std::string not_hyperbolic_message;

        const auto run_point = [&](int j) {
            PointResult& r = results[static_cast<std::size_t>(j)];
            r.x = sys.base.sampler(static_cast<std::uint64_t>(j));
            const auto opts = orbit(sys, r.x, kWindow, kWindow);
            std::vector<SplittingSample> osplits(opts.size());
            for (std::size_t m = 0; m < opts.size(); ++m)
                osplits[m] = cached_splitting(ctx, opts[m]);
            const SplittingSample& center = osplits[kWindow];
            const RegularityProfile prof = regularity_profile(sys, center, di, eps, cfg.horizon);

            DichotomyParams dp;
            dp.window = kWindow;
            dp.epsilon = 2.0 * eps;
            dp.D = std::max(1.0, std::max(prof.C_upper, prof.C_lower) * prof.K_direct);
            const double lam_lo = center.spectrum.exponents[static_cast<std::size_t>(di - 1)];
            const double lam_hi = center.spectrum.exponents[static_cast<std::size_t>(di)];
            double rate = std::min(-lam_lo, lam_hi) - eps;
            if (rate <= 0.0) {
                // A nonpositive derived rate means an exponent sits within eps
                // of zero. When it is inside cluster_tol the system is not
                // hyperbolic, and dichotomy_check owns that verdict, so hand
                // it a positive placeholder instead of tripping its parameter
                // validation first. Otherwise the epsilon really is too large
                // for the gap and the validation error is the right report.
                for (double lam : center.spectrum.exponents)
                    if (std::isfinite(lam) && std::abs(lam) < center.spectrum.cluster_tol) {
                        rate = 1e-9;
                        break;
                    }
            }
            dp.lambda_rate = rate;
            r.D = dp.D;
            r.lambda_rate = dp.lambda_rate;

            const DichotomyReport rep = dichotomy_check(sys, r.x, osplits, dp, di);
            r.holds = rep.holds;
            r.worst_margin = rep.worst_margin;
            r.projector_defect = rep.projector_defect;
            r.worst_condition = rep.worst_condition;
        };

        clock.time("dichotomy", [&] {
            // Hyperbolicity is a property of the spectrum, so the first point
            // settles it before the full sweep spends any more time.
            try {
                run_point(0);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NotHyperbolic) throw;
                not_hyperbolic_message = e.what();
            }
            if (not_hyperbolic_message.empty() && cfg.samples > 1)
                parallel_for(cfg.samples - 1, cfg.threads, [&](int j) { run_point(j + 1); });
        });

        Json doc = Json{{"system", cfg.system},
                        {"split_index", di},
                        {"epsilon", json_number(eps)},
                        {"window", kWindow},
                        {"horizon", cfg.horizon}};
        if (!not_hyperbolic_message.empty()) {
            doc["status"] = "not_hyperbolic";
            doc["message"] = not_hyperbolic_message;
        } else {
            doc["status"] = "ok";
            Json samples = Json::array();
            int held = 0;
            for (int j = 0; j < cfg.samples; ++j) {
                const PointResult& r = results[static_cast<std::size_t>(j)];
                if (r.holds) ++held;
                samples.push_back(Json{{"sample", j},
                                       {"point", point_to_json(r.x)},
                                       {"holds", r.holds},
                                       {"worst_margin", json_number(r.worst_margin)},
                                       {"projector_defect", json_number(r.projector_defect)},
                                       {"worst_condition", json_number(r.worst_condition)},
                                       {"D", json_number(r.D)},
                                       {"lambda_rate", json_number(r.lambda_rate)}});
            }
            doc["samples"] = std::move(samples);
            doc["holds_fraction"] =
                json_number(static_cast<double>(held) / static_cast<double>(cfg.samples));
        }
        emit_json("dichotomy.json", doc);
    } else if (cfg.command != "spectrum") {
        raise(ErrorCode::Unreachable, "run: unhandled command " + cfg.command);
    }

    emit_json("config.json", bundle.config_echo);

    Json timings = Json::object();
    for (const auto& [name, ms] : bundle.stage_ms) timings[name] = ms;
    bundle.manifest = Json{{"tool_version", kToolVersion},
                           {"command", cfg.command},
                           {"system", cfg.system},
                           {"files", Json::array()},
                           {"timings_ms", std::move(timings)}};
    for (const auto& f : bundle.files) bundle.manifest["files"].push_back(f);
    bundle.manifest["files"].push_back("manifest.json");
    emit_json("manifest.json", bundle.manifest);
    return bundle;
}

}  // namespace oseledets
