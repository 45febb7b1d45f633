#pragma once

// Lyapunov spectrum and Oseledets splitting for semi-invertible cocycles.
// Exponents come from a re-orthonormalized QR sweep along the orbit; slow
// filtrations from the same sweep applied to the transposed factors in
// reverse order; fast sums from the adjoint cocycle run over the backward
// orbit. No generator is ever inverted, so singular A(x) are fine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oseledets/cocycle.hpp"
#include "oseledets/errors.hpp"
#include "oseledets/subspace.hpp"

namespace oseledets {

inline constexpr double kDefaultClusterTol = 0.05;
inline constexpr double kDefaultNegInfFloor = -30.0;
inline constexpr int kSweepBlock = 5;
// Diagonal entries below this fraction of the block's largest are roundoff
// shadows of an exact rank drop; taking their log would report a spurious
// finite rate around -7 per step instead of a dead direction.
inline constexpr double kSweepDropTol = 1e-14;
// Stand-in for log 0, one per block: the log of the smallest positive double.
inline constexpr double kDeadBlockLog = -745.0;

inline double neg_infinity() { return -std::numeric_limits<double>::infinity(); }

struct SpectrumReport {
    std::vector<double> exponents;       // ascending; exponents[0] may be -inf
    std::vector<int> multiplicities;     // positive, sums to the matrix dimension
    int horizon = 0;
    double cluster_gap = std::numeric_limits<double>::infinity();  // smallest adjacent finite gap
    std::vector<double> per_step_rates;  // raw positional rates, fastest position first
    double cluster_tol = kDefaultClusterTol;
    double neg_inf_floor = kDefaultNegInfFloor;

    int count() const { return static_cast<int>(exponents.size()); }
    int dim() const { return std::accumulate(multiplicities.begin(), multiplicities.end(), 0); }
};

struct SplittingResiduals {
    double reconstruction = 0.0;       // distance of E_1 + ... + E_k to the full space
    std::vector<double> equivariance;  // optional, filled by equivariance_residuals
    std::vector<double> duality;       // optional, filled by adjoint_duality_residuals
};

struct SplittingSample {
    Point point;
    int horizon = 0;
    SpectrumReport spectrum;
    std::vector<Subspace> spaces;     // spaces[i] realizes exponents[i]
    std::vector<Subspace> slow_sums;  // slow_sums[i] = spaces[0] + ... + spaces[i], nested
    std::vector<Subspace> fast_sums;  // fast_sums[i] = spaces[i] + ... + spaces[k-1]; [0] is full
    SplittingResiduals residuals;
};

namespace detail {

inline std::string fmt_ints(const std::vector<int>& v) {
    std::string s = "(";
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + ")";
}

struct SweepResult {
    Matrix flags;               // final orthonormal frame
    std::vector<double> rates;  // per-step log growth at each frame position
};

// Discrete QR sweep: left-multiplies the factors in order, re-orthonormalizes
// every kSweepBlock steps, and accumulates log|R_ii| per position. Constant
// triangular factors are reproduced exactly (Q stays diagonal +-1), which the
// constant-system tolerances rely on.
inline SweepResult qr_sweep(const std::function<Matrix(int)>& factor, int dim, int steps) {
    Matrix z = Matrix::Identity(dim, dim);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
    int pending = 0;
    bool annihilated = false;
    auto flush = [&]() {
        Eigen::HouseholderQR<Matrix> qr(z);
        const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        double top = 0.0;
        for (int i = 0; i < dim; ++i) top = std::max(top, std::abs(r(i, i)));
        for (int i = 0; i < dim; ++i) {
            const double ri = std::abs(r(i, i));
            acc(i) += (top == 0.0 || ri < kSweepDropTol * top) ? kDeadBlockLog : std::log(ri);
        }
        if (top == 0.0) annihilated = true;
        z = qr.householderQ() * Matrix::Identity(dim, dim);
        pending = 0;
    };
    for (int j = 0; j < steps; ++j) {
        if (annihilated) {
            // The product is exactly zero; every remaining step is dead for
            // every position.
            acc.array() += kDeadBlockLog * (double(steps - j) / kSweepBlock);
            break;
        }
        z = factor(j) * z;
        if (!z.allFinite())
            raise(ErrorCode::NonFiniteMatrix,
                  "qr_sweep: non-finite accumulation at step " + std::to_string(j));
        ++pending;
        const double mx = z.cwiseAbs().maxCoeff();
        if (pending == kSweepBlock || mx > 1e120 || (mx != 0.0 && mx < 1e-120)) flush();
    }
    if (pending > 0) flush();
    SweepResult out;
    out.flags = std::move(z);
    out.rates.resize(dim);
    for (int i = 0; i < dim; ++i) out.rates[i] = acc(i) / std::max(1, steps);
    return out;
}

struct RateClusters {
    std::vector<double> exponents;          // ascending; [0] may be -inf
    std::vector<int> multiplicities;
    std::vector<std::vector<int>> members;  // positions in the input rate array
    double cluster_gap = std::numeric_limits<double>::infinity();
};

// Single-linkage clustering of finite-time rates. Rates at or below the floor
// form the -inf cluster; the rest merge when adjacent sorted rates differ by
// less than cluster_tol. A gap inside [tol, 2 tol) is too close to call.
inline RateClusters cluster_rates(const std::vector<double>& rates, double cluster_tol,
                                  double neg_inf_floor) {
    const int d = static_cast<int>(rates.size());
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rates[a] < rates[b]; });

    RateClusters out;
    size_t pos = 0;
    std::vector<int> dead;
    while (pos < order.size() && rates[order[pos]] <= neg_inf_floor) dead.push_back(order[pos++]);
    if (!dead.empty()) {
        out.exponents.push_back(neg_infinity());
        out.multiplicities.push_back(static_cast<int>(dead.size()));
        out.members.push_back(dead);
    }

    std::vector<int> cur;
    double sum = 0.0, prev = 0.0;
    auto close = [&]() {
        if (cur.empty()) return;
        out.exponents.push_back(sum / cur.size());
        out.multiplicities.push_back(static_cast<int>(cur.size()));
        out.members.push_back(cur);
        cur.clear();
        sum = 0.0;
    };
    for (; pos < order.size(); ++pos) {
        const double r = rates[order[pos]];
        if (!cur.empty()) {
            const double gap = r - prev;
            if (gap >= cluster_tol && gap < 2.0 * cluster_tol)
                raise(ErrorCode::ClusterAmbiguity,
                      "rate gap " + std::to_string(gap) + " between " + std::to_string(prev) +
                          " and " + std::to_string(r) +
                          " lies in the ambiguity band [tol, 2 tol); increase the horizon");
            if (gap >= 2.0 * cluster_tol) close();
        }
        cur.push_back(order[pos]);
        sum += r;
        prev = r;
    }
    close();

    const size_t first_finite = dead.empty() ? 0 : 1;
    for (size_t i = first_finite; i + 1 < out.exponents.size(); ++i)
        out.cluster_gap = std::min(out.cluster_gap, out.exponents[i + 1] - out.exponents[i]);
    return out;
}

inline std::vector<Point> forward_points(const CocycleSystem& sys, const Point& x, int n) {
    return orbit(sys, x, 0, n - 1);
}

}  // namespace detail

inline SpectrumReport lyapunov_spectrum(const CocycleSystem& sys, const Point& x, int horizon,
                                        double cluster_tol = kDefaultClusterTol,
                                        double neg_inf_floor = kDefaultNegInfFloor) {
    if (horizon < 10)
        raise(ErrorCode::BadParams, "lyapunov_spectrum: horizon must be at least 10");
    const int d = sys.gen.matrix_dim;
    const std::vector<Point> pts = detail::forward_points(sys, x, horizon);
    const detail::SweepResult sweep =
        detail::qr_sweep([&](int j) { return generator_at(sys, pts[j]); }, d, horizon);
    const detail::RateClusters cl = detail::cluster_rates(sweep.rates, cluster_tol, neg_inf_floor);

    SpectrumReport rep;
    rep.exponents = cl.exponents;
    rep.multiplicities = cl.multiplicities;
    rep.horizon = horizon;
    rep.cluster_gap = cl.cluster_gap;
    rep.per_step_rates = sweep.rates;
    rep.cluster_tol = cluster_tol;
    rep.neg_inf_floor = neg_inf_floor;
    return rep;
}

// Nested spans of the final frame of the transposed sweep: processing the
// transposed factors in reverse order makes the frame converge to the
// singular flags on the domain side, so grouping its columns by rate cluster
// yields V_{<=1} subset ... subset V_{<=k} = R^d, nested by construction.
inline std::vector<Subspace> slow_filtration(const CocycleSystem& sys, const Point& x,
                                             const SpectrumReport& spectrum, int horizon) {
    if (horizon < 10)
        raise(ErrorCode::BadParams, "slow_filtration: horizon must be at least 10");
    if (spectrum.horizon < horizon)
        raise(ErrorCode::BadParams,
              "slow_filtration: spectrum was computed at a shorter horizon than requested");
    const int d = sys.gen.matrix_dim;
    const std::vector<Point> pts = detail::forward_points(sys, x, horizon);
    const detail::SweepResult sweep = detail::qr_sweep(
        [&](int j) { return Matrix(generator_at(sys, pts[horizon - 1 - j]).transpose()); }, d,
        horizon);
    const detail::RateClusters cl =
        detail::cluster_rates(sweep.rates, spectrum.cluster_tol, spectrum.neg_inf_floor);
    if (cl.multiplicities != spectrum.multiplicities)
        raise(ErrorCode::ClusterAmbiguity,
              "slow_filtration: transpose-sweep clusters " + detail::fmt_ints(cl.multiplicities) +
                  " disagree with the spectrum " + detail::fmt_ints(spectrum.multiplicities) +
                  "; increase the horizon");

    std::vector<Subspace> out;
    std::vector<int> cols;
    for (const auto& cluster : cl.members) {
        cols.insert(cols.end(), cluster.begin(), cluster.end());
        std::sort(cols.begin(), cols.end());
        Matrix b(d, cols.size());
        for (size_t j = 0; j < cols.size(); ++j) b.col(j) = sweep.flags.col(cols[j]);
        out.push_back(Subspace::from_orthonormal(std::move(b)));
    }
    return out;
}

namespace detail {

inline std::vector<Subspace> adjoint_slow_filtration(const CocycleSystem& sys, const Point& x,
                                                     int horizon, double cluster_tol,
                                                     double neg_inf_floor,
                                                     SpectrumReport* spectrum_out = nullptr) {
    const CocycleSystem adj = adjoint_cocycle(sys);
    SpectrumReport aspec = lyapunov_spectrum(adj, x, horizon, cluster_tol, neg_inf_floor);
    std::vector<Subspace> filt = slow_filtration(adj, x, aspec, horizon);
    if (spectrum_out) *spectrum_out = std::move(aspec);
    return filt;
}

}  // namespace detail

// Sum of the fast blocks: everything at exponent index i and above (i = 0
// gives the whole space). Computed as the orthogonal complement of the
// adjoint system's slow filtration, which only consumes the backward orbit.
inline Subspace fast_sum(const CocycleSystem& sys, const Point& x, int i, int horizon,
                         double cluster_tol = kDefaultClusterTol,
                         double neg_inf_floor = kDefaultNegInfFloor) {
    if (i < 0) raise(ErrorCode::BadParams, "fast_sum: negative index");
    if (i == 0) return Subspace::full(sys.gen.matrix_dim);
    const std::vector<Subspace> filt =
        detail::adjoint_slow_filtration(sys, x, horizon, cluster_tol, neg_inf_floor);
    if (i >= static_cast<int>(filt.size()))
        raise(ErrorCode::BadParams, "fast_sum: index " + std::to_string(i) +
                                        " must be below the exponent count " +
                                        std::to_string(filt.size()));
    return orthogonal_complement(filt[i - 1]);
}

inline SplittingSample oseledets_splitting(const CocycleSystem& sys, const Point& x,
                                           const SpectrumReport& spectrum, int horizon) {
    const int d = sys.gen.matrix_dim;
    const int k = spectrum.count();
    SplittingSample s;
    s.point = x;
    s.horizon = horizon;
    s.spectrum = spectrum;
    s.slow_sums = slow_filtration(sys, x, spectrum, horizon);

    SpectrumReport aspec;
    const std::vector<Subspace> afilt = detail::adjoint_slow_filtration(
        sys, x, horizon, spectrum.cluster_tol, spectrum.neg_inf_floor, &aspec);
    if (aspec.multiplicities != spectrum.multiplicities)
        raise(ErrorCode::DimensionCollapse,
              "oseledets_splitting: adjoint multiplicities " + detail::fmt_ints(aspec.multiplicities) +
                  " disagree with the forward spectrum " +
                  detail::fmt_ints(spectrum.multiplicities) + "; increase the horizon");

    s.fast_sums.resize(k);
    s.fast_sums[0] = Subspace::full(d);
    for (int p = 1; p < k; ++p) s.fast_sums[p] = orthogonal_complement(afilt[p - 1]);

    s.spaces.resize(k);
    s.spaces[0] = s.slow_sums[0];
    for (int p = 1; p < k; ++p) s.spaces[p] = intersect(s.slow_sums[p], s.fast_sums[p]);
    for (int p = 0; p < k; ++p)
        if (s.spaces[p].dim() != spectrum.multiplicities[p])
            raise(ErrorCode::DimensionCollapse,
                  "oseledets_splitting: block " + std::to_string(p) + " has dimension " +
                      std::to_string(s.spaces[p].dim()) + " but multiplicity " +
                      std::to_string(spectrum.multiplicities[p]) + "; increase the horizon");

    // Orthonormalize the concatenation instead of calling direct_sum so a
    // near-degenerate splitting reports a large residual instead of throwing.
    Matrix joint(d, d);
    int c = 0;
    for (const auto& sp : s.spaces) {
        joint.middleCols(c, sp.dim()) = sp.basis;
        c += sp.dim();
    }
    s.residuals.reconstruction = subspace_distance(orthonormalize(joint), Subspace::full(d));
    return s;
}

// Residual of A(x) E_i(x) against E_i(f x) for every block. For a dead block
// (exponent -inf) invariance may be a strict inclusion, so only the
// containment defect counts: images that are numerically zero contribute
// nothing, any surviving image is measured against the target space.
inline std::vector<double> equivariance_residuals(const CocycleSystem& sys,
                                                  const SplittingSample& at_x,
                                                  const SplittingSample& at_fx) {
    const size_t k = at_x.spaces.size();
    if (at_fx.spaces.size() != k)
        raise(ErrorCode::DimensionCollapse,
              "equivariance_residuals: splittings at x and f(x) have different block counts");
    const Matrix a = generator_at(sys, at_x.point);
    const double anorm = spectral_norm(a);
    std::vector<double> out(k);
    for (size_t p = 0; p < k; ++p) {
        const Matrix image = a * at_x.spaces[p].basis;
        if (std::isinf(at_x.spectrum.exponents[p])) {
            double defect = 0.0;
            const ProjectorMatrix proj = projector(at_fx.spaces[p]);
            for (int j = 0; j < image.cols(); ++j) {
                const double n = image.col(j).norm();
                if (n <= 1e-10 * anorm) continue;  // numerically the zero image
                const Vector u = image.col(j) / n;
                defect = std::max(defect, (u - proj * u).norm());
            }
            out[p] = defect;
        } else {
            out[p] = subspace_distance(orthonormalize(image), at_fx.spaces[p]);
        }
    }
    return out;
}

inline double equivariance_residual(const CocycleSystem& sys, const SplittingSample& sample,
                                    int i) {
    const Point fx = sys.base.forward(sample.point);
    const SpectrumReport spec_fx = lyapunov_spectrum(
        sys, fx, sample.horizon, sample.spectrum.cluster_tol, sample.spectrum.neg_inf_floor);
    const SplittingSample at_fx = oseledets_splitting(sys, fx, spec_fx, sample.horizon);
    return equivariance_residuals(sys, sample, at_fx).at(i);
}

// Distance between the adjoint system's i-th space and the orthogonal
// complement of the sum of all other forward spaces, for every i. Zero in
// exact arithmetic: the adjoint splitting consists of exactly those
// complements.
inline std::vector<double> adjoint_duality_residuals(const SplittingSample& at_x,
                                                     const SplittingSample& adjoint_at_x) {
    const size_t k = at_x.spaces.size();
    if (adjoint_at_x.spaces.size() != k)
        raise(ErrorCode::DimensionCollapse,
              "adjoint_duality_residuals: forward and adjoint block counts differ");
    const int d = at_x.spaces.empty() ? 0 : at_x.spaces[0].ambient_dim;
    std::vector<double> out(k);
    for (size_t i = 0; i < k; ++i) {
        Matrix rest(d, d - at_x.spaces[i].dim());
        int c = 0;
        for (size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            rest.middleCols(c, at_x.spaces[j].dim()) = at_x.spaces[j].basis;
            c += at_x.spaces[j].dim();
        }
        const Subspace comp = orthogonal_complement(orthonormalize(rest));
        out[i] = subspace_distance(adjoint_at_x.spaces[i], comp);
    }
    return out;
}

inline double adjoint_duality_residual(const CocycleSystem& sys, const Point& x, int i,
                                       int horizon, double cluster_tol = kDefaultClusterTol,
                                       double neg_inf_floor = kDefaultNegInfFloor) {
    const SpectrumReport fwd = lyapunov_spectrum(sys, x, horizon, cluster_tol, neg_inf_floor);
    const SplittingSample sx = oseledets_splitting(sys, x, fwd, horizon);
    const CocycleSystem adj = adjoint_cocycle(sys);
    const SpectrumReport as = lyapunov_spectrum(adj, x, horizon, cluster_tol, neg_inf_floor);
    const SplittingSample sa = oseledets_splitting(adj, x, as, horizon);
    return adjoint_duality_residuals(sx, sa).at(i);
}

// Top Oseledets space of a column-stochastic cocycle, normalized to a
// probability vector.
inline Vector random_invariant_measure(const CocycleSystem& sys, const Point& x, int horizon,
                                       double cluster_tol = kDefaultClusterTol,
                                       double neg_inf_floor = kDefaultNegInfFloor) {
    const int d = sys.gen.matrix_dim;
    const Matrix a0 = generator_at(sys, x);
    for (int j = 0; j < d; ++j)
        if (std::abs(a0.col(j).sum() - 1.0) > 1e-8)
            raise(ErrorCode::BadParams,
                  "random_invariant_measure: generator is not column-stochastic at x (column " +
                      std::to_string(j) + " sums to " + std::to_string(a0.col(j).sum()) + ")");
    const SpectrumReport spec = lyapunov_spectrum(sys, x, horizon, cluster_tol, neg_inf_floor);
    const int k = spec.count();
    if (spec.multiplicities[k - 1] != 1)
        raise(ErrorCode::ClusterAmbiguity,
              "random_invariant_measure: top exponent has multiplicity " +
                  std::to_string(spec.multiplicities[k - 1]) + "; no one-dimensional top space");
    const Subspace top = fast_sum(sys, x, k - 1, horizon, cluster_tol, neg_inf_floor);
    if (top.dim() != 1)
        raise(ErrorCode::DimensionCollapse, "random_invariant_measure: top space has dimension " +
                                                std::to_string(top.dim()));
    Vector v = top.basis.col(0);
    const double s = v.sum();
    if (std::abs(s) < 1e-8)  // mixed signs cancel; no probability normalization exists
        raise(ErrorCode::SignDefect,
              "random_invariant_measure: top vector entries sum to " + std::to_string(s));
    v /= s;
    if (v.minCoeff() < -1e-8)
        raise(ErrorCode::SignDefect,
              "random_invariant_measure: top vector has mixed signs (min entry " +
                  std::to_string(v.minCoeff()) + ")");
    return v;
}

// (1/n) log ||A(x,n) v|| via stepwise renormalization. A step whose image
// norm falls below dead_tol relative to sigma_max(A) ||w|| is an exact rank
// kill: the true product is zero from there on, so the remaining steps
// contribute the dead-block constant instead of amplifying roundoff back up.
inline double log_growth(const CocycleSystem& sys, const Point& x, int n, const Vector& v,
                         double dead_tol = 1e-12) {
    Vector w = v;
    const double nm = w.norm();
    if (nm == 0.0 || !w.allFinite())
        raise(ErrorCode::NonFiniteInput, "log_growth: zero or non-finite vector");
    w /= nm;
    Point p = x;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        const Matrix a = generator_at(sys, p);
        const Vector img = a * w;
        const double in = img.norm();
        if (in <= dead_tol * spectral_norm(a)) {
            acc += kDeadBlockLog * (double(n - j) / kSweepBlock);
            return acc / n;
        }
        acc += std::log(in);
        w = img / in;
        p = sys.base.forward(p);
    }
    return acc / n;
}

}  // namespace oseledets
