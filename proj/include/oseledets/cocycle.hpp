#pragma once

// Driven-system model: invertible Lipschitz base map with metric and measure
// sampler, Holder matrix generator, cocycle composition, adjoint cocycle.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oseledets/errors.hpp"
#include "oseledets/subspace.hpp"

namespace oseledets {

using Point = Eigen::VectorXd;

// Counter-based generator: the n-th draw depends only on (seed, n), so sample
// streams are reproducible no matter how work is split across threads.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Point uniform on [0,1)^k, deterministic in (seed, index).
inline Point uniform_torus_point(std::uint64_t seed, std::uint64_t index, int k) {
    Point p(k);
    std::uint64_t state = splitmix64(seed ^ (0x6a09e667f3bcc909ULL + index * 0x9e3779b97f4a7c15ULL));
    for (int i = 0; i < k; ++i) {
        state = splitmix64(state);
        p(i) = uniform_from_bits(state);
    }
    return p;
}

struct BaseSystem {
    int state_dim = 1;
    std::function<Point(const Point&)> forward;
    std::function<Point(const Point&)> backward;
    std::function<double(const Point&, const Point&)> metric;
    double lipschitz_const = 1.0;       // rho(f x, f y) <= L rho(x, y)
    double lipschitz_const_back = 1.0;  // same for f^-1
    std::function<Point(std::uint64_t)> sampler;  // index -> mu-distributed point
};

struct Generator {
    int matrix_dim = 0;
    std::function<Matrix(const Point&)> eval;
    double holder_const = 1.0;  // ||A(x)-A(y)|| <= C rho(x,y)^nu
    double holder_exp = 1.0;
};

struct CocycleSystem {
    BaseSystem base;
    Generator gen;
    std::string label;
};

inline Matrix generator_at(const CocycleSystem& sys, const Point& x) {
    Matrix a = sys.gen.eval(x);
    if (!a.allFinite())
        raise(ErrorCode::NonFiniteMatrix, "generator returned non-finite matrix at sampled point");
    return a;
}

// A(f^{n-1} x) ... A(f x) A(x); identity for n = 0. Raw product, so expanding
// cocycles overflow near n ~ 1000; the spectrum engine uses rescaled
// accumulation instead.
inline Matrix compose(const CocycleSystem& sys, const Point& x, long n) {
    const int d = sys.gen.matrix_dim;
    Matrix prod = Matrix::Identity(d, d);
    Point p = x;
    for (long j = 0; j < n; ++j) {
        prod = generator_at(sys, p) * prod;
        if (!prod.allFinite() || prod.cwiseAbs().maxCoeff() > 1e300)
            raise(ErrorCode::NonFiniteMatrix,
                  "compose: product overflow at step " + std::to_string(j + 1));
        p = sys.base.forward(p);
    }
    return prod;
}

// The cocycle over f^-1 with generator A^T composed with f^-1; satisfies
// adjoint(x, n) = compose(f^-n x, n)^T.
inline CocycleSystem adjoint_cocycle(const CocycleSystem& sys) {
    CocycleSystem adj;
    adj.base = sys.base;
    adj.base.forward = sys.base.backward;
    adj.base.backward = sys.base.forward;
    adj.base.lipschitz_const = sys.base.lipschitz_const_back;
    adj.base.lipschitz_const_back = sys.base.lipschitz_const;
    const Generator g = sys.gen;
    const auto back = sys.base.backward;
    adj.gen.matrix_dim = g.matrix_dim;
    adj.gen.eval = [g, back](const Point& x) { return Matrix(g.eval(back(x)).transpose()); };
    // one pullback through f^-1 costs a factor L_back^nu in the constant
    adj.gen.holder_const =
        g.holder_const * std::pow(sys.base.lipschitz_const_back, g.holder_exp);
    adj.gen.holder_exp = g.holder_exp;
    adj.label = sys.label + "_adjoint";
    return adj;
}

// f^m(x) for m = -n_back .. n_fwd, in orbit order.
inline std::vector<Point> orbit(const CocycleSystem& sys, const Point& x,
                                long n_back, long n_fwd) {
    std::vector<Point> pts(static_cast<std::size_t>(n_back + n_fwd + 1));
    pts[static_cast<std::size_t>(n_back)] = x;
    Point p = x;
    for (long m = 1; m <= n_back; ++m) {
        p = sys.base.backward(p);
        pts[static_cast<std::size_t>(n_back - m)] = p;
    }
    p = x;
    for (long m = 1; m <= n_fwd; ++m) {
        p = sys.base.forward(p);
        pts[static_cast<std::size_t>(n_back + m)] = p;
    }
    return pts;
}

}  // namespace oseledets
