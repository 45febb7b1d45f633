#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oseledets/builtins.hpp"
#include "oseledets/cocycle.hpp"

using namespace oseledets;

namespace {

const std::vector<std::string> kBuiltinNames = {
    "constant", "rotation_triangular", "rotation_stochastic",
    "cat_rank_deficient", "cat_generic"};

CocycleSystem builtin(const std::string& name, std::uint64_t seed = 42) {
    Json params;
    if (name == "constant") params = Json{{"A", {{2.0, 0.0}, {0.0, 0.5}}}};
    return make_builtin(name, params, seed);
}

double relative_diff(const Matrix& a, const Matrix& b) {
    const double scale = std::max(1e-300, a.cwiseAbs().maxCoeff());
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

TEST_CASE("compose at n=0 is the identity") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        const Point x = sys.base.sampler(0);
        const Matrix m = compose(sys, x, 0);
        REQUIRE((m - Matrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("compose of a constant diagonal generator takes powers") {
    auto sys = builtin("constant");
    const Matrix m = compose(sys, Point::Zero(1), 3);
    REQUIRE(std::abs(m(0, 0) - 8.0) < 1e-14);
    REQUIRE(std::abs(m(1, 1) - 0.125) < 1e-14);
    REQUIRE(std::abs(m(0, 1)) < 1e-14);
    REQUIRE(std::abs(m(1, 0)) < 1e-14);
}

TEST_CASE("compose matches an independent left-to-right product") {
    auto sys = builtin("rotation_triangular");
    Point x = Point::Zero(1);
    // oracle: fetch the five generator values along the orbit and multiply in
    // the opposite association order
    std::vector<Matrix> factors;
    Point p = x;
    for (int j = 0; j < 5; ++j) {
        factors.push_back(sys.gen.eval(p));
        p = sys.base.forward(p);
    }
    Matrix oracle = factors[4];
    for (int j = 3; j >= 0; --j) oracle = oracle * factors[static_cast<std::size_t>(j)];
    REQUIRE(relative_diff(compose(sys, x, 5), oracle) < 1e-12);
}

TEST_CASE("cocycle property on every built-in") {
    std::uint64_t counter = 0;
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        for (int trial = 0; trial < 100; ++trial) {
            const Point x = sys.base.sampler(counter++);
            const long n = 1 + static_cast<long>(splitmix64(counter++) % 20);
            const long m = 1 + static_cast<long>(splitmix64(counter++) % 20);
            const Matrix whole = compose(sys, x, n + m);
            Point fx = x;
            for (long j = 0; j < n; ++j) fx = sys.base.forward(fx);
            const Matrix split = compose(sys, fx, m) * compose(sys, x, n);
            REQUIRE(relative_diff(whole, split) < 1e-8);
        }
    }
}

TEST_CASE("compose flags overflow") {
    Json params{{"A", {{1e200, 0.0}, {0.0, 1.0}}}};
    auto sys = make_builtin("constant", params, 0);
    REQUIRE_THROWS_MATCHES(compose(sys, Point::Zero(1), 3), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::NonFiniteMatrix; }));
}

TEST_CASE("adjoint generator of a constant system is the transpose") {
    Json params{{"A", {{2.0, 1.0}, {0.0, 0.5}}}};
    auto sys = make_builtin("constant", params, 0);
    auto adj = adjoint_cocycle(sys);
    const Matrix at = adj.gen.eval(Point::Zero(1));
    REQUIRE(std::abs(at(0, 0) - 2.0) < 1e-15);
    REQUIRE(std::abs(at(1, 0) - 1.0) < 1e-15);
    REQUIRE(std::abs(at(0, 1)) < 1e-15);
}

TEST_CASE("adjoint at n=1 is the transposed generator at the preimage") {
    auto sys = builtin("rotation_triangular");
    auto adj = adjoint_cocycle(sys);
    Point x(1);
    x << 0.37;
    const Matrix lhs = compose(adj, x, 1);
    const Matrix rhs = sys.gen.eval(sys.base.backward(x)).transpose();
    REQUIRE(relative_diff(lhs, rhs) < 1e-15);
}

TEST_CASE("adjoint identity holds on every built-in") {
    std::uint64_t counter = 1000;
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        auto adj = adjoint_cocycle(sys);
        for (int trial = 0; trial < 60; ++trial) {
            const Point x = sys.base.sampler(counter++);
            const long n = 1 + static_cast<long>(splitmix64(counter++) % 40);
            Point fback = x;
            for (long j = 0; j < n; ++j) fback = sys.base.backward(fback);
            const Matrix lhs = compose(adj, x, n);
            const Matrix rhs = compose(sys, fback, n).transpose();
            REQUIRE(relative_diff(lhs, rhs) < 1e-10);
        }
    }
}

TEST_CASE("adjoint at x=0.3, n=4 on the triangular system") {
    auto sys = builtin("rotation_triangular");
    auto adj = adjoint_cocycle(sys);
    Point x(1);
    x << 0.3;
    Point back = x;
    for (int j = 0; j < 4; ++j) back = sys.base.backward(back);
    REQUIRE(relative_diff(compose(adj, x, 4), compose(sys, back, 4).transpose()) < 1e-12);
}

TEST_CASE("orbit of the rotation base") {
    auto sys = builtin("rotation_triangular");
    const double alpha = (std::sqrt(5.0) - 1.0) / 2.0;
    auto pts = orbit(sys, Point::Zero(1), 0, 2);
    REQUIRE(pts.size() == 3);
    REQUIRE(std::abs(pts[0](0)) < 1e-15);
    REQUIRE(std::abs(pts[1](0) - wrap01(alpha)) < 1e-15);
    REQUIRE(std::abs(pts[2](0) - wrap01(2 * alpha)) < 1e-15);
}

TEST_CASE("orbit backward entries map forward to the start") {
    auto sys = builtin("cat_rank_deficient");
    Point x(2);
    x << 0.2, 0.3;
    auto pts = orbit(sys, x, 1, 0);
    REQUIRE(pts.size() == 2);
    REQUIRE(torus_metric(sys.base.forward(pts[0]), x) < 1e-12);
    auto single = orbit(sys, x, 0, 0);
    REQUIRE(single.size() == 1);
    REQUIRE((single[0] - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("orbit entries chain under forward") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        const Point x = sys.base.sampler(7);
        auto pts = orbit(sys, x, 5, 5);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i)
            REQUIRE(sys.base.metric(sys.base.forward(pts[i]), pts[i + 1]) < 1e-12);
    }
}

TEST_CASE("forward and backward invert each other on sampled points") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        for (std::uint64_t i = 0; i < 1000; ++i) {
            const Point x = sys.base.sampler(i);
            REQUIRE(sys.base.metric(sys.base.backward(sys.base.forward(x)), x) < 1e-12);
            REQUIRE(sys.base.metric(sys.base.forward(sys.base.backward(x)), x) < 1e-12);
        }
    }
}

TEST_CASE("metric is symmetric, vanishes on the diagonal, and satisfies the triangle inequality") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        for (std::uint64_t i = 0; i < 300; ++i) {
            const Point x = sys.base.sampler(3 * i);
            const Point y = sys.base.sampler(3 * i + 1);
            const Point z = sys.base.sampler(3 * i + 2);
            REQUIRE(sys.base.metric(x, x) == 0.0);
            REQUIRE(std::abs(sys.base.metric(x, y) - sys.base.metric(y, x)) < 1e-15);
            REQUIRE(sys.base.metric(x, z) <=
                    sys.base.metric(x, y) + sys.base.metric(y, z) + 1e-12);
        }
    }
}

TEST_CASE("declared Lipschitz constants are honest on sampled pairs") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        for (std::uint64_t i = 0; i < 10000; ++i) {
            const Point x = sys.base.sampler(2 * i);
            const Point y = sys.base.sampler(2 * i + 1);
            const double rho = sys.base.metric(x, y);
            REQUIRE(sys.base.metric(sys.base.forward(x), sys.base.forward(y)) <=
                    sys.base.lipschitz_const * rho * (1.0 + 1e-12) + 1e-15);
            REQUIRE(sys.base.metric(sys.base.backward(x), sys.base.backward(y)) <=
                    sys.base.lipschitz_const_back * rho * (1.0 + 1e-12) + 1e-15);
        }
    }
}

TEST_CASE("declared Holder data is honest on close pairs") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        const int k = sys.base.state_dim;
        for (std::uint64_t i = 0; i < 1000; ++i) {
            Point x = sys.base.sampler(i);
            Point y = x;
            const Point offs = uniform_torus_point(911, i, k);
            for (int c = 0; c < k; ++c) y(c) = wrap01(y(c) + 0.01 * (offs(c) - 0.5));
            const double rho = sys.base.metric(x, y);
            if (rho == 0.0) continue;
            const double diff = spectral_norm(sys.gen.eval(x) - sys.gen.eval(y));
            REQUIRE(diff <= 1.05 * sys.gen.holder_const *
                                std::pow(rho, sys.gen.holder_exp));
        }
    }
}

TEST_CASE("generator evaluation is deterministic per point") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        const Point x = sys.base.sampler(123);
        const Matrix a = sys.gen.eval(x);
        const Matrix b = sys.gen.eval(x);
        REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("log-plus norm integrability proxy is finite and batch stable") {
    for (const auto& name : kBuiltinNames) {
        auto sys = builtin(name);
        auto batch_mean = [&](std::uint64_t offset) {
            double sum = 0.0;
            for (std::uint64_t i = 0; i < 10000; ++i) {
                const double norm = spectral_norm(sys.gen.eval(sys.base.sampler(offset + i)));
                sum += std::log(std::max(1.0, norm));
            }
            return sum / 10000.0;
        };
        const double m1 = batch_mean(0);
        const double m2 = batch_mean(500000);
        REQUIRE(std::isfinite(m1));
        // 1% relative with a small absolute floor for means near zero
        REQUIRE(std::abs(m1 - m2) <= std::max(0.01 * std::abs(m1), 1e-3));
    }
}

TEST_CASE("rotation_stochastic columns sum to one exactly") {
    auto sys = builtin("rotation_stochastic");
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const Matrix a = sys.gen.eval(sys.base.sampler(i));
        REQUIRE(a(0, 0) + a(1, 0) == 1.0);
        REQUIRE(a(0, 1) + a(1, 1) == 1.0);
        REQUIRE(a.minCoeff() > 0.0);
    }
}

TEST_CASE("cat_rank_deficient generator has rank one everywhere") {
    auto sys = builtin("cat_rank_deficient");
    for (std::uint64_t i = 0; i < 1000; ++i) {
        const Matrix a = sys.gen.eval(sys.base.sampler(i));
        Eigen::JacobiSVD<Matrix> svd(a);
        REQUIRE(std::abs(svd.singularValues()(0) - 2.0) < 1e-12);
        REQUIRE(svd.singularValues()(1) < 1e-14);
    }
}

TEST_CASE("constant builtin evaluates to the given matrix everywhere") {
    auto sys = builtin("constant");
    for (std::uint64_t i = 0; i < 10; ++i) {
        const Matrix a = sys.gen.eval(sys.base.sampler(i));
        REQUIRE(a(0, 0) == 2.0);
        REQUIRE(a(1, 1) == 0.5);
    }
}

TEST_CASE("rotation_triangular target_rates rescales the mean log diagonals") {
    Json params{{"target_rates", {-0.4, 0.4}}};
    auto sys = make_builtin("rotation_triangular", params, 1);
    // quadrature over the circle of log a(x) and log b(x)
    double mean_a = 0.0, mean_b = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        Point x(1);
        x << (i + 0.5) / n;
        const Matrix a = sys.gen.eval(x);
        mean_a += std::log(a(0, 0));
        mean_b += std::log(a(1, 1));
    }
    REQUIRE(std::abs(mean_a / n - 0.4) < 1e-6);
    REQUIRE(std::abs(mean_b / n - (-0.4)) < 1e-6);
}

TEST_CASE("make_builtin rejects unknown systems and bad params") {
    REQUIRE_THROWS_MATCHES(make_builtin("no_such", Json(), 0), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::UnknownSystem; }));
    REQUIRE_THROWS_MATCHES(make_builtin("constant", Json(), 0), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::BadParams; }));
    REQUIRE_THROWS_MATCHES(
        make_builtin("rotation_stochastic", Json{{"bogus", 1}}, 0), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::BadParams; }));
    REQUIRE_THROWS_MATCHES(
        make_builtin("constant", Json{{"A", "2,0;0"}}, 0), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::BadParams; }));
}

TEST_CASE("matrix params accept semicolon strings and nested arrays") {
    auto from_string = make_builtin("constant", Json{{"A", "2,0;0,0.5"}}, 0);
    auto from_array = make_builtin("constant", Json{{"A", {{2.0, 0.0}, {0.0, 0.5}}}}, 0);
    const Matrix a = from_string.gen.eval(Point::Zero(1));
    const Matrix b = from_array.gen.eval(Point::Zero(1));
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("system_from_json wires name, params, and seed") {
    Json doc{{"name", "rotation_triangular"}, {"params", Json::object()}, {"seed", 9}};
    auto sys = system_from_json(doc);
    REQUIRE(sys.label == "rotation_triangular");
    REQUIRE(sys.gen.matrix_dim == 2);
    // same seed, same sample stream
    auto sys2 = system_from_json(doc);
    REQUIRE((sys.base.sampler(5) - sys2.base.sampler(5)).cwiseAbs().maxCoeff() == 0.0);

    REQUIRE_THROWS_MATCHES(system_from_json(Json{{"nam", "constant"}}), Error,
        Catch::Matchers::Predicate<Error>(
            [](const Error& e) { return e.code() == ErrorCode::BadParams; }));
}
