#pragma once

// Built-in test systems: constant, rotation_triangular, rotation_stochastic,
// cat_rank_deficient, cat_generic. All live on [0,1)^k charts with wraparound
// metrics; samplers are counter-based so parallel sampling is deterministic.

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "oseledets/cocycle.hpp"
#include "oseledets/errors.hpp"

namespace oseledets {

using Json = nlohmann::json;

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double wrap01(double x) { return x - std::floor(x); }

// Built-in bases act on the dyadic lattice k * 2^-53, k in [0, 2^53): every
// lattice point is an exact double, the maps become exact integer bijections
// mod 2^53, and forward/backward are bitwise inverses. Without this, chaotic
// bases amplify one-ulp round-trip errors by the Lipschitz constant per step
// and identities like adjoint(x,n) = compose(f^-n x, n)^T drown in noise.
// Inputs off the lattice are snapped (quantization 2^-53, far below every
// tolerance used anywhere).
constexpr std::uint64_t kLatticeMod = 1ULL << 53;
constexpr std::uint64_t kLatticeMask = kLatticeMod - 1;

inline std::uint64_t lattice_encode(double x) {
    const double w = wrap01(x);
    const auto k = static_cast<std::uint64_t>(std::llround(w * 9007199254740992.0));
    return k & kLatticeMask;
}

inline double lattice_decode(std::uint64_t k) {
    return static_cast<double>(k & kLatticeMask) * 0x1.0p-53;
}

inline double circle_dist(double a, double b) {
    const double t = std::abs(wrap01(a) - wrap01(b));
    return std::min(t, 1.0 - t);
}

inline double torus_metric(const Point& x, const Point& y) {
    double s = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        const double t = circle_dist(x(i), y(i));
        s += t * t;
    }
    return std::sqrt(s);
}

namespace detail {

inline Matrix parse_matrix_string(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find(';', pos), text.size());
        std::vector<double> row;
        std::size_t p = pos;
        while (p <= end) {
            const std::size_t q = std::min(text.find(',', p), end);
            const std::string tok = text.substr(p, q - p);
            try {
                row.push_back(std::stod(tok));
            } catch (const std::exception&) {
                raise(ErrorCode::BadParams, "matrix entry '" + tok + "' is not a number");
            }
            if (q >= end) break;
            p = q + 1;
        }
        rows.push_back(std::move(row));
        if (end >= text.size()) break;
        pos = end + 1;
    }
    const std::size_t d = rows.size();
    Matrix a(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        if (rows[i].size() != d)
            raise(ErrorCode::BadParams, "matrix rows must form a square matrix");
        for (std::size_t j = 0; j < d; ++j) a(i, j) = rows[i][j];
    }
    return a;
}

inline Matrix parse_matrix(const Json& spec) {
    if (spec.is_string()) return parse_matrix_string(spec.get<std::string>());
    if (spec.is_array()) {
        const std::size_t d = spec.size();
        Matrix a(d, d);
        for (std::size_t i = 0; i < d; ++i) {
            if (!spec[i].is_array() || spec[i].size() != d)
                raise(ErrorCode::BadParams, "matrix param must be a square nested array");
            for (std::size_t j = 0; j < d; ++j) {
                if (!spec[i][j].is_number())
                    raise(ErrorCode::BadParams, "matrix entries must be numbers");
                a(i, j) = spec[i][j].get<double>();
            }
        }
        if (d == 0) raise(ErrorCode::BadParams, "matrix param is empty");
        return a;
    }
    raise(ErrorCode::BadParams, "matrix param must be a nested array or 'a,b;c,d' string");
}

inline void require_keys(const Json& params, const std::set<std::string>& allowed,
                         const std::string& name) {
    if (params.is_null()) return;
    if (!params.is_object())
        raise(ErrorCode::BadParams, name + ": params must be a JSON object");
    for (auto it = params.begin(); it != params.end(); ++it)
        if (!allowed.count(it.key()))
            raise(ErrorCode::BadParams, name + ": unknown param '" + it.key() + "'");
}

inline BaseSystem circle_rotation_base(std::uint64_t seed) {
    BaseSystem base;
    base.state_dim = 1;
    // rotation by the lattice representation of (sqrt(5)-1)/2
    const std::uint64_t step = lattice_encode((std::sqrt(5.0) - 1.0) / 2.0);
    base.forward = [step](const Point& x) {
        Point y(1);
        y(0) = lattice_decode(lattice_encode(x(0)) + step);
        return y;
    };
    base.backward = [step](const Point& x) {
        Point y(1);
        y(0) = lattice_decode(lattice_encode(x(0)) + kLatticeMod - step);
        return y;
    };
    base.metric = torus_metric;
    base.lipschitz_const = 1.0;
    base.lipschitz_const_back = 1.0;
    base.sampler = [seed](std::uint64_t idx) { return uniform_torus_point(seed, idx, 1); };
    return base;
}

inline BaseSystem cat_map_base(std::uint64_t seed) {
    BaseSystem base;
    base.state_dim = 2;
    base.forward = [](const Point& x) {
        const std::uint64_t u = lattice_encode(x(0));
        const std::uint64_t v = lattice_encode(x(1));
        Point y(2);
        y(0) = lattice_decode(2 * u + v);
        y(1) = lattice_decode(u + v);
        return y;
    };
    base.backward = [](const Point& x) {
        const std::uint64_t u = lattice_encode(x(0));
        const std::uint64_t v = lattice_encode(x(1));
        Point y(2);
        y(0) = lattice_decode(u + kLatticeMod - (v & kLatticeMask) + kLatticeMod);
        y(1) = lattice_decode(2 * v + 2 * kLatticeMod - (u & kLatticeMask));
        return y;
    };
    base.metric = torus_metric;
    // spectral norm of [[2,1],[1,1]]; the inverse has the same singular values
    base.lipschitz_const = (3.0 + std::sqrt(5.0)) / 2.0;
    base.lipschitz_const_back = base.lipschitz_const;
    base.sampler = [seed](std::uint64_t idx) { return uniform_torus_point(seed, idx, 2); };
    return base;
}

}  // namespace detail

// Mean of log(c + r sin) over a period: log((c + sqrt(c^2 - r^2)) / 2).
inline double mean_log_sinusoid(double c, double r) {
    return std::log((c + std::sqrt(c * c - r * r)) / 2.0);
}

inline CocycleSystem make_builtin(const std::string& name, const Json& params,
                                  std::uint64_t seed) {
    CocycleSystem sys;
    sys.label = name;

    if (name == "constant") {
        detail::require_keys(params, {"A"}, name);
        if (params.is_null() || !params.contains("A"))
            raise(ErrorCode::BadParams, "constant: params must provide \"A\"");
        const Matrix a = detail::parse_matrix(params.at("A"));
        if (!a.allFinite()) raise(ErrorCode::BadParams, "constant: A has non-finite entries");
        const int d = static_cast<int>(a.rows());

        BaseSystem base;
        base.state_dim = 1;
        base.forward = [](const Point& x) { return x; };
        base.backward = [](const Point& x) { return x; };
        base.metric = [](const Point& x, const Point& y) { return std::abs(x(0) - y(0)); };
        base.lipschitz_const = 1.0;
        base.lipschitz_const_back = 1.0;
        base.sampler = [](std::uint64_t) { return Point::Zero(1); };
        sys.base = base;

        sys.gen.matrix_dim = d;
        sys.gen.eval = [a](const Point&) { return a; };
        sys.gen.holder_const = 1.0;
        sys.gen.holder_exp = 1.0;
        return sys;
    }

    if (name == "rotation_triangular") {
        detail::require_keys(params, {"target_rates"}, name);
        double scale_a = 1.0, scale_b = 1.0;
        if (!params.is_null() && params.contains("target_rates")) {
            const Json& tr = params.at("target_rates");
            if (!tr.is_array() || tr.size() != 2 || !tr[0].is_number() || !tr[1].is_number())
                raise(ErrorCode::BadParams,
                      "rotation_triangular: target_rates must be [lambda_lo, lambda_hi]");
            const double lo = tr[0].get<double>();
            const double hi = tr[1].get<double>();
            if (lo >= hi)
                raise(ErrorCode::BadParams, "rotation_triangular: target_rates must increase");
            scale_a = std::exp(hi - mean_log_sinusoid(1.5, 0.4));
            scale_b = std::exp(lo - mean_log_sinusoid(0.5, 0.1));
        }
        sys.base = detail::circle_rotation_base(seed);
        sys.gen.matrix_dim = 2;
        sys.gen.eval = [scale_a, scale_b](const Point& x) {
            const double t = kTwoPi * x(0);
            Matrix a(2, 2);
            a << scale_a * (1.5 + 0.4 * std::sin(t)), 0.3 * std::cos(t),
                 0.0, scale_b * (0.5 + 0.1 * std::cos(t));
            return a;
        };
        // Frobenius bound on dA/dx: 2*pi*sqrt((0.4 sa)^2 + 0.3^2 + (0.1 sb)^2), plus headroom
        sys.gen.holder_const = 1.01 * kTwoPi *
            std::sqrt(0.16 * scale_a * scale_a + 0.09 + 0.01 * scale_b * scale_b);
        sys.gen.holder_exp = 1.0;
        return sys;
    }

    if (name == "rotation_stochastic") {
        detail::require_keys(params, {}, name);
        sys.base = detail::circle_rotation_base(seed);
        sys.gen.matrix_dim = 2;
        sys.gen.eval = [](const Point& x) {
            const double t = kTwoPi * x(0);
            const double p = 0.25 + 0.2 * std::sin(t);
            const double q = 0.35 + 0.2 * std::cos(t);
            Matrix a(2, 2);
            a << 1.0 - p, q, p, 1.0 - q;
            return a;
        };
        // dA/dx has Frobenius norm sqrt(2 p'^2 + 2 q'^2) = 2*pi*0.2*sqrt(2)
        sys.gen.holder_const = 1.01 * kTwoPi * 0.2 * std::sqrt(2.0);
        sys.gen.holder_exp = 1.0;
        return sys;
    }

    if (name == "cat_rank_deficient") {
        detail::require_keys(params, {}, name);
        sys.base = detail::cat_map_base(seed);
        sys.gen.matrix_dim = 2;
        sys.gen.eval = [](const Point& x) {
            const double th = 0.5 * std::sin(kTwoPi * x(0));
            const double c = std::cos(th), s = std::sin(th);
            Matrix r(2, 2);
            r << c, -s, s, c;
            Matrix d(2, 2);
            d << 2.0, 0.0, 0.0, 0.0;
            return Matrix(r * d * r.transpose());
        };
        // ||dA/dtheta|| = 2 and |dtheta/du| <= pi
        sys.gen.holder_const = 1.01 * 2.0 * 0.5 * kTwoPi;
        sys.gen.holder_exp = 1.0;
        return sys;
    }

    if (name == "cat_generic") {
        detail::require_keys(params, {}, name);
        sys.base = detail::cat_map_base(seed);
        sys.gen.matrix_dim = 3;
        sys.gen.eval = [](const Point& x) {
            const double u = kTwoPi * x(0);
            const double v = kTwoPi * x(1);
            Matrix a(3, 3);
            a << 2.0, 0.0, 0.0,
                 0.0, 1.0, 0.0,
                 0.0, 0.0, 0.5;
            Matrix p(3, 3);
            p << std::sin(u), std::cos(v), std::sin(u + v),
                 std::cos(u), std::sin(v), std::cos(u + v),
                 std::sin(u - v), std::cos(u - v), std::sin(v);
            a += 0.1 * p;
            return a;
        };
        // entry wavevectors have |k| <= sqrt(2); sum of |k|^2 over entries is 13
        sys.gen.holder_const = 1.01 * 0.1 * kTwoPi * std::sqrt(13.0);
        sys.gen.holder_exp = 1.0;
        return sys;
    }

    raise(ErrorCode::UnknownSystem, "no built-in system named '" + name + "'");
}

// {"name": ..., "params": {...}, "seed": ...}; params and seed optional.
inline CocycleSystem system_from_json(const Json& doc) {
    if (!doc.is_object() || !doc.contains("name") || !doc.at("name").is_string())
        raise(ErrorCode::BadParams, "system document must be an object with a \"name\" string");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "name" && it.key() != "params" && it.key() != "seed")
            raise(ErrorCode::BadParams, "system document: unknown key '" + it.key() + "'");
    Json params = doc.contains("params") ? doc.at("params") : Json();
    std::uint64_t seed = 0;
    if (doc.contains("seed")) {
        if (!doc.at("seed").is_number_integer())
            raise(ErrorCode::BadParams, "system seed must be an integer");
        seed = doc.at("seed").get<std::uint64_t>();
    }
    return make_builtin(doc.at("name").get<std::string>(), params, seed);
}

}  // namespace oseledets
