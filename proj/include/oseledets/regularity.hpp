#pragma once
// Per-point regularity data for a fixed splitting index i: growth envelope
// constants on the slow half E1 = E_1 + ... + E_i and the fast half
// E2 = E_{i+1} + ... + E_k, angle constants between them, temperedness and
// determinant-integrability statistics, and a nonuniform exponential
// dichotomy check along finite orbit windows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "oseledets/cocycle.hpp"
#include "oseledets/errors.hpp"
#include "oseledets/met.hpp"
#include "oseledets/subspace.hpp"

namespace oseledets {

// Growth maxima over n are scanned on a finite window. A stored basis of a
// slow subspace carries ~1e-16 of the fastest direction (doubles can't do
// better), and that seed regrows like e^{(lambda_k - lambda_i) n}, eventually
// drowning the genuine restricted norm. The scan therefore stops once the
// spurious part could reach e^{budget} * 1e-16 ~ 1e-6 of the signal. The cap
// ignores epsilon so that the scanned window, and hence monotonicity of the
// constant in epsilon, does not depend on it.
inline constexpr double kRegrowthLogBudget = 23.0;

// Finite rate standing in for a -inf exponent wherever a formula needs a
// number: any value below the next exponent is valid, lambda_2 - 5 is used.
inline constexpr double kNegInfSubstitute = 5.0;

struct RegularityProfile {
    Point x;
    int split_index = 1;  // i: blocks 1..i are slow, i+1..k fast
    double epsilon = 0.0;
    double C_upper = 1.0;  // ||A(x,n)v|| <= C_upper e^{(lambda_i+eps)n} ||v|| on E1
    double C_lower = 1.0;  // ||A(x,n)v|| >= e^{(lambda_{i+1}-eps)n} ||v|| / C_lower on E2
    double C_tilde = 1.0;  // ||A(x,n)|| <= C_tilde e^{(lambda_k+eps)n}
    double K_direct = 1.0;  // 2 / gamma from the measured minimal angle
    double K_lemma = 1.0;   // 2 C_lower C_tilde e^{3 eps n_x}
    long long n_x = 0;
    int horizon = 0;
};

struct DichotomyParams {
    double D = 1.0;
    double lambda_rate = 0.0;  // must be > 0
    double epsilon = 0.0;
    int window = 0;
};

struct DichotomyReport {
    bool holds = false;
    double worst_margin = 0.0;      // max of (measured norm) / (claimed bound)
    double projector_defect = 0.0;  // worst ||A_n P_n - P_{n+1} A_n||
    double worst_condition = 1.0;   // worst cond[B1 | B2] along the orbit
};

struct CertificateReport {
    double worst = 0.0;  // max violation ratio over vectors and steps; <= 1 passes
    int vectors = 0;
    int window = 0;
};

namespace detail {

// The exponent governing E1 growth, with the -inf substitution applied.
inline double slow_rate(const SpectrumReport& spec, int i) {
    const double lam = spec.exponents[static_cast<std::size_t>(i - 1)];
    if (std::isfinite(lam)) return lam;
    // i == 1 here: -inf can only be the bottom cluster
    if (spec.count() >= 2) return spec.exponents[1] - kNegInfSubstitute;
    return -kNegInfSubstitute;
}

inline void check_split_index(const SpectrumReport& spec, int i, bool need_fast) {
    const int k = spec.count();
    if (i < 1 || i > k || (need_fast && i >= k))
        raise(ErrorCode::BadParams, "split index " + std::to_string(i) +
                                        " out of range for " + std::to_string(k) + " blocks" +
                                        (need_fast ? " (fast half must be nonzero)" : ""));
}

inline int regrowth_cap(double regrowth_rate, int horizon) {
    if (!(regrowth_rate > 0.0)) return horizon;
    const auto cap = static_cast<int>(std::floor(kRegrowthLogBudget / regrowth_rate));
    return std::clamp(cap, 2, horizon);
}

inline int upper_scan_window(const SpectrumReport& spec, int i, int horizon) {
    double lam_top = spec.exponents.back();
    if (!std::isfinite(lam_top)) lam_top = slow_rate(spec, i);
    return regrowth_cap(lam_top - slow_rate(spec, i), horizon);
}

}  // namespace detail

// max(1, max_{0<=n<=horizon} ||A(x,n)|E1(x)|| e^{-(lambda_i+eps)n}), the
// finite-window surrogate of the sup defining the upper growth constant. The
// window is additionally capped by the regrowth budget (see above).
inline double upper_constant(const CocycleSystem& sys, const SplittingSample& sample, int i,
                             double epsilon, int horizon) {
    if (!(epsilon > 0.0)) raise(ErrorCode::BadParams, "upper_constant: epsilon must be > 0");
    if (horizon < 1) raise(ErrorCode::BadParams, "upper_constant: horizon must be >= 1");
    detail::check_split_index(sample.spectrum, i, false);
    const double lam = detail::slow_rate(sample.spectrum, i);
    const int window = detail::upper_scan_window(sample.spectrum, i, horizon);

    Matrix m = sample.slow_sums[static_cast<std::size_t>(i - 1)].basis;
    double log_scale = 0.0;
    double best = 0.0;  // n = 0: the basis is orthonormal, sigma_max = 1
    Point pt = sample.point;
    for (int n = 1; n <= window; ++n) {
        m = generator_at(sys, pt) * m;
        pt = sys.base.forward(pt);
        if (!m.allFinite())
            raise(ErrorCode::NonFiniteMatrix, "upper_constant: overflow at step " + std::to_string(n));
        const double s = m.norm();
        if (s == 0.0) break;  // image annihilated; all later terms vanish
        if (s > 1e100 || s < 1e-100) {
            log_scale += std::log(s);
            m /= s;
        }
        const double smax = spectral_norm(m);
        if (smax == 0.0) break;
        best = std::max(best, log_scale + std::log(smax) - (lam + epsilon) * n);
    }
    return std::max(1.0, std::exp(best));
}

// max(1, max_{0<=n<=horizon} e^{(lambda_{i+1}-eps)n} / s_min(A(x,n)|E2(x))).
// The restriction to E2 is tracked by a propagated orthonormal frame: with
// A(x,n) B2 = Q_n R_n ... R_1, the smallest singular value is
// 1 / sigma_max((R_n ... R_1)^-1), accumulated with scalar rescaling. The
// fast frame is self-correcting under pushforward, so no window cap is needed.
inline double lower_constant(const CocycleSystem& sys, const SplittingSample& sample, int i,
                             double epsilon, int horizon) {
    if (!(epsilon > 0.0)) raise(ErrorCode::BadParams, "lower_constant: epsilon must be > 0");
    if (horizon < 1) raise(ErrorCode::BadParams, "lower_constant: horizon must be >= 1");
    detail::check_split_index(sample.spectrum, i, true);
    const double lam_next = sample.spectrum.exponents[static_cast<std::size_t>(i)];
    const int d = sys.gen.matrix_dim;

    Matrix q = sample.fast_sums[static_cast<std::size_t>(i)].basis;
    const int m2 = static_cast<int>(q.cols());
    Matrix z = Matrix::Identity(m2, m2);
    double log_z = 0.0;
    double best = 0.0;  // n = 0: s_min = 1
    Point pt = sample.point;
    for (int n = 1; n <= horizon; ++n) {
        const Matrix y = generator_at(sys, pt) * q;
        pt = sys.base.forward(pt);
        if (!y.allFinite())
            raise(ErrorCode::NonFiniteMatrix, "lower_constant: overflow at step " + std::to_string(n));
        Eigen::HouseholderQR<Matrix> qr(y);
        const Matrix r = qr.matrixQR().topRows(m2).triangularView<Eigen::Upper>();
        if (r.diagonal().cwiseAbs().minCoeff() < 1e-300)
            raise(ErrorCode::SingularRestriction,
                  "lower_constant: generator nearly annihilates a fast direction at step " +
                      std::to_string(n));
        q = qr.householderQ() * Matrix::Identity(d, m2);
        z = z * r.triangularView<Eigen::Upper>().solve(Matrix::Identity(m2, m2));
        const double s = z.norm();
        if (s > 1e100 || s < 1e-100) {
            log_z += std::log(s);
            z /= s;
        }
        best = std::max(best, (lam_next - epsilon) * n + log_z + std::log(spectral_norm(z)));
    }
    return std::max(1.0, std::exp(best));
}

// max(1, max_{0<=n<=horizon} ||A(x,n)|| e^{-(lambda_k+eps)n}), the full-norm
// envelope constant. Stable at any horizon: the top direction dominates.
inline double tilde_constant(const CocycleSystem& sys, const SplittingSample& sample,
                             double epsilon, int horizon) {
    if (!(epsilon > 0.0)) raise(ErrorCode::BadParams, "tilde_constant: epsilon must be > 0");
    if (horizon < 1) raise(ErrorCode::BadParams, "tilde_constant: horizon must be >= 1");
    double lam_top = sample.spectrum.exponents.back();
    if (!std::isfinite(lam_top)) lam_top = -kNegInfSubstitute;
    const int d = sys.gen.matrix_dim;

    Matrix m = Matrix::Identity(d, d);
    double log_scale = 0.0;
    double best = 0.0;
    Point pt = sample.point;
    for (int n = 1; n <= horizon; ++n) {
        m = generator_at(sys, pt) * m;
        pt = sys.base.forward(pt);
        if (!m.allFinite())
            raise(ErrorCode::NonFiniteMatrix, "tilde_constant: overflow at step " + std::to_string(n));
        const double s = m.norm();
        if (s == 0.0) break;
        if (s > 1e100 || s < 1e-100) {
            log_scale += std::log(s);
            m /= s;
        }
        best = std::max(best, log_scale + std::log(spectral_norm(m)) - (lam_top + epsilon) * n);
    }
    return std::max(1.0, std::exp(best));
}

struct AngleConstants {
    double K_direct = 1.0;
    double K_lemma = 1.0;
    long long n_x = 0;
};

// K_direct from the measured minimal angle between the two halves; n_x as the
// smallest n with e^{(hi-eps)n} - C^2 e^{(lo+eps)n} >= e^{(hi-2eps)n} where
// C = max(C_upper, C_lower); K_lemma = max(1, 2 C_lower C_tilde e^{3 eps n_x}).
// lambda_lo may be -inf (its term is then absent for n >= 1).
inline AngleConstants angle_constant(const SplittingSample& sample, int i, double C_upper,
                                     double C_lower, double C_tilde, double epsilon,
                                     double lambda_lo, double lambda_hi) {
    if (!(epsilon > 0.0)) raise(ErrorCode::BadParams, "angle_constant: epsilon must be > 0");
    if (C_upper < 1.0 || C_lower < 1.0 || C_tilde < 1.0)
        raise(ErrorCode::BadParams, "angle_constant: constants must be >= 1");
    detail::check_split_index(sample.spectrum, i, true);
    if (lambda_lo + 3.0 * epsilon > lambda_hi - 2.0 * epsilon)
        raise(ErrorCode::GapTooSmall,
              "angle_constant: need lambda_lo + 3 eps <= lambda_hi - 2 eps, got gap " +
                  std::to_string(lambda_hi - lambda_lo) + " with eps " + std::to_string(epsilon));

    const Subspace& e1 = sample.slow_sums[static_cast<std::size_t>(i - 1)];
    const Subspace& e2 = sample.fast_sums[static_cast<std::size_t>(i)];
    const double gamma = min_sum_gap(e1, e2);

    AngleConstants out;
    out.K_direct = std::max(1.0, 2.0 / gamma);

    const double c = std::max(C_upper, C_lower);
    constexpr long long kCap = 1000000;
    long long n = 0;
    bool found = false;
    for (; n <= kCap; ++n) {
        // compare in units of the leading term to dodge overflow:
        // 1 - C^2 e^{(lo+eps-hi+eps)n} >= e^{-eps n}
        const double dn = static_cast<double>(n);
        const double rel_sub =
            (n == 0) ? c * c
                     : (std::isfinite(lambda_lo)
                            ? c * c * std::exp((lambda_lo + 2.0 * epsilon - lambda_hi) * dn)
                            : 0.0);
        if (1.0 - rel_sub >= std::exp(-epsilon * dn)) {
            found = true;
            break;
        }
    }
    if (!found)
        raise(ErrorCode::NoSuchN, "angle_constant: no admissible n below " + std::to_string(kCap));
    out.n_x = n;
    out.K_lemma =
        std::max(1.0, 2.0 * C_lower * C_tilde * std::exp(3.0 * epsilon * static_cast<double>(n)));
    return out;
}

// Largest epsilon compatible with the angle precondition for split i
// (5 eps <= lambda_{i+1} - lambda_i), also kept at or below a quarter of the
// smallest gap anywhere in the spectrum. A -inf bottom leaves only the
// quarter-gap term; a one-block spectrum gets an arbitrary 0.25.
inline double default_epsilon(const SpectrumReport& spec, int i) {
    detail::check_split_index(spec, i, false);
    double eps = std::isfinite(spec.cluster_gap) ? spec.cluster_gap / 4.0 : 0.25;
    if (i < spec.count()) {
        const double lo = spec.exponents[static_cast<std::size_t>(i - 1)];
        const double hi = spec.exponents[static_cast<std::size_t>(i)];
        if (std::isfinite(lo)) eps = std::min(eps, 0.199 * (hi - lo));
    }
    return eps;
}

// Assembles the full profile at one point. For i = k the fast half is empty:
// C_lower and the angle data degenerate to their floors.
inline RegularityProfile regularity_profile(const CocycleSystem& sys, const SplittingSample& sample,
                                            int i, double epsilon, int horizon) {
    detail::check_split_index(sample.spectrum, i, false);
    RegularityProfile p;
    p.x = sample.point;
    p.split_index = i;
    p.epsilon = epsilon;
    p.horizon = horizon;
    p.C_upper = upper_constant(sys, sample, i, epsilon, horizon);
    p.C_tilde = tilde_constant(sys, sample, epsilon, horizon);
    if (i < sample.spectrum.count()) {
        p.C_lower = lower_constant(sys, sample, i, epsilon, horizon);
        const double lam_lo = sample.spectrum.exponents[static_cast<std::size_t>(i - 1)];
        const double lam_hi = sample.spectrum.exponents[static_cast<std::size_t>(i)];
        const AngleConstants a =
            angle_constant(sample, i, p.C_upper, p.C_lower, p.C_tilde, epsilon, lam_lo, lam_hi);
        p.K_direct = a.K_direct;
        p.K_lemma = a.K_lemma;
        p.n_x = a.n_x;
    }
    return p;
}

// Worst ratio of g(f^m x) against the tempered envelope g(x) e^{eps |m|} over
// |m| <= window; a value <= 1 means the bound holds on the whole window.
inline double temperedness_check(const CocycleSystem& sys,
                                 const std::function<double(const Point&)>& g, const Point& x,
                                 double epsilon_rate, int window) {
    if (window < 0) raise(ErrorCode::BadParams, "temperedness_check: window must be >= 0");
    if (!(epsilon_rate >= 0.0))
        raise(ErrorCode::BadParams, "temperedness_check: epsilon_rate must be >= 0");
    const auto pts = orbit(sys, x, window, window);
    const double g0 = g(pts[static_cast<std::size_t>(window)]);
    if (!std::isfinite(g0) || !(g0 > 0.0))
        raise(ErrorCode::BadParams, "temperedness_check: g(x) must be finite and positive");
    double worst = 0.0;
    for (int j = 0; j < static_cast<int>(pts.size()); ++j) {
        const double m = std::abs(static_cast<double>(j - window));
        const double gm = g(pts[static_cast<std::size_t>(j)]);
        if (!std::isfinite(gm) || gm < 0.0)
            raise(ErrorCode::BadParams, "temperedness_check: g must be finite and nonnegative");
        worst = std::max(worst, gm / (g0 * std::exp(epsilon_rate * m)));
    }
    return worst;
}

struct DetIntegrability {
    double mean = 0.0;
    double half_width = 0.0;  // bootstrap 95% half-width of the mean
    std::vector<double> samples;
};

// Empirical mean of psi(x) = log |det(B2(fx)^T A(x) B2(x))| along one orbit,
// B2 orthonormal. Consecutive points share their splitting computation; the
// half-width comes from 200 bootstrap resamples.
inline DetIntegrability det_integrability_check(const CocycleSystem& sys, int sample_count, int i,
                                                int horizon, std::uint64_t seed = 0) {
    if (sample_count < 2)
        raise(ErrorCode::BadParams, "det_integrability_check: need at least 2 samples");
    Point x = sys.base.sampler(seed);

    auto split_at = [&](const Point& p) {
        const SpectrumReport spec = lyapunov_spectrum(sys, p, horizon);
        return oseledets_splitting(sys, p, spec, horizon);
    };

    DetIntegrability out;
    out.samples.reserve(static_cast<std::size_t>(sample_count));
    SplittingSample cur = split_at(x);
    detail::check_split_index(cur.spectrum, i, true);
    for (int s = 0; s < sample_count; ++s) {
        const Point fx = sys.base.forward(x);
        SplittingSample nxt = split_at(fx);
        if (nxt.spectrum.count() != cur.spectrum.count())
            raise(ErrorCode::DimensionCollapse,
                  "det_integrability_check: block count changed along the orbit");
        const Matrix t = nxt.fast_sums[static_cast<std::size_t>(i)].basis.transpose() *
                         generator_at(sys, x) * cur.fast_sums[static_cast<std::size_t>(i)].basis;
        const double det = std::abs(t.determinant());
        if (!(det > 0.0))
            raise(ErrorCode::SingularRestriction,
                  "det_integrability_check: restricted map singular at sample " + std::to_string(s));
        out.samples.push_back(std::log(det));
        x = fx;
        cur = std::move(nxt);
    }

    const auto cnt = static_cast<double>(out.samples.size());
    for (double v : out.samples) out.mean += v;
    out.mean /= cnt;

    std::mt19937_64 rng(seed * 2654435761ULL + 12345ULL);
    std::uniform_int_distribution<std::size_t> pick(0, out.samples.size() - 1);
    constexpr int kResamples = 200;
    double acc = 0.0, acc2 = 0.0;
    for (int b = 0; b < kResamples; ++b) {
        double m = 0.0;
        for (std::size_t s = 0; s < out.samples.size(); ++s) m += out.samples[pick(rng)];
        m /= cnt;
        acc += m;
        acc2 += m * m;
    }
    acc /= kResamples;
    out.half_width = 1.96 * std::sqrt(std::max(0.0, acc2 / kResamples - acc * acc));
    return out;
}

// Splittings at f^m x for |m| <= window, ready for dichotomy_check.
inline std::vector<SplittingSample> orbit_splittings(const CocycleSystem& sys, const Point& x,
                                                     int window, int horizon,
                                                     double cluster_tol = kDefaultClusterTol,
                                                     double neg_inf_floor = kDefaultNegInfFloor) {
    if (window < 0) raise(ErrorCode::BadParams, "orbit_splittings: window must be >= 0");
    const auto pts = orbit(sys, x, window, window);
    std::vector<SplittingSample> out;
    out.reserve(pts.size());
    for (const Point& p : pts) {
        const SpectrumReport spec = lyapunov_spectrum(sys, p, horizon, cluster_tol, neg_inf_floor);
        out.push_back(oseledets_splitting(sys, p, spec, horizon));
    }
    return out;
}

// Checks the nonuniform exponential dichotomy along a precomputed orbit of
// splittings: P_n projects onto E1(f^n x) along E2(f^n x); forward bounds use
// the raw cocycle, backward bounds invert the restriction to the fast half
// step by step (the matrix of A in the orthonormal frames of consecutive E2).
inline DichotomyReport dichotomy_check(const CocycleSystem& sys, const Point& x,
                                       const std::vector<SplittingSample>& orbit_samples,
                                       const DichotomyParams& params, int split_index) {
    if (params.window < 1) raise(ErrorCode::BadParams, "dichotomy_check: window must be >= 1");
    if (params.D < 1.0) raise(ErrorCode::BadParams, "dichotomy_check: D must be >= 1");
    if (!(params.lambda_rate > 0.0))
        raise(ErrorCode::BadParams, "dichotomy_check: lambda_rate must be > 0");
    if (!(params.epsilon >= 0.0))
        raise(ErrorCode::BadParams, "dichotomy_check: epsilon must be >= 0");
    const int w = params.window;
    const int total = 2 * w + 1;
    if (static_cast<int>(orbit_samples.size()) != total)
        raise(ErrorCode::BadParams, "dichotomy_check: expected " + std::to_string(total) +
                                        " orbit samples, got " +
                                        std::to_string(orbit_samples.size()));
    const SplittingSample& center = orbit_samples[static_cast<std::size_t>(w)];
    if ((center.point - x).norm() > 1e-12)
        raise(ErrorCode::BadParams, "dichotomy_check: center sample does not sit at x");

    for (double lam : center.spectrum.exponents)
        if (std::isfinite(lam) && std::abs(lam) < center.spectrum.cluster_tol)
            raise(ErrorCode::NotHyperbolic,
                  "dichotomy_check: exponent " + std::to_string(lam) + " within cluster_tol of 0");
    const int k = center.spectrum.count();
    detail::check_split_index(center.spectrum, split_index, true);
    const std::size_t i = static_cast<std::size_t>(split_index);
    if (!(center.spectrum.exponents[i - 1] < 0.0 && center.spectrum.exponents[i] > 0.0))
        raise(ErrorCode::BadParams,
              "dichotomy_check: split must separate negative from positive exponents");

    const int d = sys.gen.matrix_dim;
    DichotomyReport rep;
    std::vector<Matrix> b2(static_cast<std::size_t>(total));
    std::vector<Matrix> proj(static_cast<std::size_t>(total));
    for (int j = 0; j < total; ++j) {
        const SplittingSample& s = orbit_samples[static_cast<std::size_t>(j)];
        if (s.spectrum.count() != k)
            raise(ErrorCode::DimensionCollapse,
                  "dichotomy_check: block count changed along the orbit");
        const Matrix& be1 = s.slow_sums[i - 1].basis;
        b2[static_cast<std::size_t>(j)] = s.fast_sums[i].basis;
        const Matrix& be2 = b2[static_cast<std::size_t>(j)];
        if (be1.cols() + be2.cols() != d)
            raise(ErrorCode::DimensionCollapse, "dichotomy_check: halves do not fill the space");
        Matrix frame(d, d);
        frame << be1, be2;
        Eigen::JacobiSVD<Matrix> svd(frame);
        const double smin = svd.singularValues().minCoeff();
        if (smin < 1e-12)
            raise(ErrorCode::DegenerateIntersection,
                  "dichotomy_check: splitting not transverse at orbit index " + std::to_string(j));
        rep.worst_condition = std::max(rep.worst_condition, svd.singularValues()(0) / smin);
        Matrix ext = Matrix::Zero(d, d);
        ext.leftCols(be1.cols()) = be1;
        // P = [B1 | 0] T^-1 with T = [B1 | B2]: solve T^T P^T = [B1 | 0]^T
        proj[static_cast<std::size_t>(j)] =
            frame.transpose().partialPivLu().solve(ext.transpose()).transpose();
    }

    std::vector<Matrix> gen(static_cast<std::size_t>(total - 1));
    std::vector<Eigen::PartialPivLU<Matrix>> step_lu(static_cast<std::size_t>(total - 1));
    for (int j = 0; j + 1 < total; ++j) {
        gen[static_cast<std::size_t>(j)] =
            generator_at(sys, orbit_samples[static_cast<std::size_t>(j)].point);
        const Matrix step = b2[static_cast<std::size_t>(j + 1)].transpose() *
                            gen[static_cast<std::size_t>(j)] * b2[static_cast<std::size_t>(j)];
        Eigen::JacobiSVD<Matrix> svd(step);
        if (svd.singularValues().minCoeff() < 1e-300)
            raise(ErrorCode::SingularRestriction,
                  "dichotomy_check: fast restriction singular at orbit index " + std::to_string(j));
        step_lu[static_cast<std::size_t>(j)] = step.partialPivLu();
    }

    for (int j = 0; j + 1 < total; ++j) {
        const Matrix defect = gen[static_cast<std::size_t>(j)] * proj[static_cast<std::size_t>(j)] -
                              proj[static_cast<std::size_t>(j + 1)] * gen[static_cast<std::size_t>(j)];
        rep.projector_defect = std::max(rep.projector_defect, spectral_norm(defect));
    }

    const double log_d = std::log(params.D);
    // forward: ||A(m,n) P_n|| <= D e^{-lambda (m-n) + eps |n|}, window >= m >= n.
    // The product is accumulated as P_{m} A_{m-1} ... P_{n+1} A_n P_n, equal to
    // A(m,n) P_n exactly since P_{j+1} A_j P_j = A_j P_j; numerically the
    // interleaved projections keep the stored matrix from bottoming out at a
    // rounding floor whose fast component would regrow through the gap and
    // spoil spans beyond ~ -log(1e-16) / gap steps.
    for (int nj = 0; nj < total; ++nj) {
        const double abs_n = std::abs(static_cast<double>(nj - w));
        Matrix prod = proj[static_cast<std::size_t>(nj)];
        double log_scale = 0.0;
        for (int mj = nj; mj < total; ++mj) {
            const double bound =
                log_d - params.lambda_rate * static_cast<double>(mj - nj) + params.epsilon * abs_n;
            const double val = log_scale + std::log(spectral_norm(prod));
            rep.worst_margin = std::max(rep.worst_margin, std::exp(val - bound));
            if (mj + 1 < total) {
                prod = proj[static_cast<std::size_t>(mj + 1)] *
                       (gen[static_cast<std::size_t>(mj)] * prod);
                const double s = prod.norm();
                if (s == 0.0) break;
                if (s > 1e100 || s < 1e-100) {
                    log_scale += std::log(s);
                    prod /= s;
                }
            }
        }
    }
    // backward: ||A(m,n) Q_n|| <= D e^{-lambda (n-m) + eps |n|}, m <= n, via the
    // inverted fast restriction; the operator is B2(m) H_m with H_n = B2(n)^T Q_n
    for (int nj = 0; nj < total; ++nj) {
        const double abs_n = std::abs(static_cast<double>(nj - w));
        Matrix h = b2[static_cast<std::size_t>(nj)].transpose() *
                   (Matrix::Identity(d, d) - proj[static_cast<std::size_t>(nj)]);
        double log_scale = 0.0;
        for (int mj = nj; mj >= 0; --mj) {
            const double bound =
                log_d - params.lambda_rate * static_cast<double>(nj - mj) + params.epsilon * abs_n;
            const double val = log_scale + std::log(spectral_norm(h));
            rep.worst_margin = std::max(rep.worst_margin, std::exp(val - bound));
            if (mj > 0) {
                h = step_lu[static_cast<std::size_t>(mj - 1)].solve(h);
                if (!h.allFinite())
                    raise(ErrorCode::SingularRestriction,
                          "dichotomy_check: fast restriction inversion blew up at orbit index " +
                              std::to_string(mj - 1));
                const double s = h.norm();
                if (s > 1e100 || s < 1e-100) {
                    log_scale += std::log(s);
                    h /= s;
                }
            }
        }
    }

    rep.holds = rep.worst_margin <= 1.0 && rep.projector_defect <= 1e-6;
    return rep;
}

// Certificate for the upper growth bound: worst over random v in E1(x) and
// 0 <= n <= window of ||A(x,n)v|| / (C e^{(lambda_i+eps)n} ||v||). Holds with
// worst <= 1 + rounding slack when C came from upper_constant with the same
// inputs, since the maximum there ranges over the same window.
inline CertificateReport certify_upper(const CocycleSystem& sys, const SplittingSample& sample,
                                       int i, double epsilon, double c, int horizon,
                                       int vector_count = 10, std::uint64_t seed = 2026) {
    if (c < 1.0) raise(ErrorCode::BadParams, "certify_upper: C must be >= 1");
    if (vector_count < 1) raise(ErrorCode::BadParams, "certify_upper: need at least one vector");
    detail::check_split_index(sample.spectrum, i, false);
    const double lam = detail::slow_rate(sample.spectrum, i);
    const int window = detail::upper_scan_window(sample.spectrum, i, horizon);
    const Matrix& basis = sample.slow_sums[static_cast<std::size_t>(i - 1)].basis;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    CertificateReport rep;
    rep.vectors = vector_count;
    rep.window = window;
    const double log_c = std::log(c);
    for (int t = 0; t < vector_count; ++t) {
        Vector coef(basis.cols());
        for (int j = 0; j < coef.size(); ++j) coef(j) = gauss(rng);
        Vector v = basis * coef;
        v /= v.norm();
        double log_scale = 0.0;
        Point pt = sample.point;
        for (int n = 0; n <= window; ++n) {
            const double nv = v.norm();
            if (nv == 0.0) break;
            const double ratio = log_scale + std::log(nv) - log_c - (lam + epsilon) * n;
            rep.worst = std::max(rep.worst, std::exp(ratio));
            if (n < window) {
                v = generator_at(sys, pt) * v;
                pt = sys.base.forward(pt);
                const double s = v.norm();
                if (s > 1e100 || (s > 0.0 && s < 1e-100)) {
                    log_scale += std::log(s);
                    v /= s;
                }
            }
        }
    }
    return rep;
}

// Certificate for the lower bound on the fast half: worst over random v in
// E2(x) of (e^{(lambda_{i+1}-eps)n} / C) / ||A(x,n)v||.
inline CertificateReport certify_lower(const CocycleSystem& sys, const SplittingSample& sample,
                                       int i, double epsilon, double c, int horizon,
                                       int vector_count = 10, std::uint64_t seed = 2026) {
    if (c < 1.0) raise(ErrorCode::BadParams, "certify_lower: C must be >= 1");
    if (vector_count < 1) raise(ErrorCode::BadParams, "certify_lower: need at least one vector");
    detail::check_split_index(sample.spectrum, i, true);
    const double lam_next = sample.spectrum.exponents[static_cast<std::size_t>(i)];
    const Matrix& basis = sample.fast_sums[static_cast<std::size_t>(i)].basis;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    CertificateReport rep;
    rep.vectors = vector_count;
    rep.window = horizon;
    const double log_c = std::log(c);
    for (int t = 0; t < vector_count; ++t) {
        Vector coef(basis.cols());
        for (int j = 0; j < coef.size(); ++j) coef(j) = gauss(rng);
        Vector v = basis * coef;
        v /= v.norm();
        double log_scale = 0.0;
        Point pt = sample.point;
        for (int n = 0; n <= horizon; ++n) {
            const double nv = v.norm();
            if (nv == 0.0)
                raise(ErrorCode::SingularRestriction,
                      "certify_lower: fast vector annihilated at step " + std::to_string(n));
            const double ratio = (lam_next - epsilon) * n - log_c - (log_scale + std::log(nv));
            rep.worst = std::max(rep.worst, std::exp(ratio));
            if (n < horizon) {
                v = generator_at(sys, pt) * v;
                pt = sys.base.forward(pt);
                const double s = v.norm();
                if (s > 1e100 || (s > 0.0 && s < 1e-100)) {
                    log_scale += std::log(s);
                    v /= s;
                }
            }
        }
    }
    return rep;
}

// Certificate for the angle bound: worst over random u in E1, v in E2 of
// max(||u||, ||v||) / (K ||u + v||).
inline CertificateReport certify_angle(const SplittingSample& sample, int i, double k_const,
                                       int pair_count = 100, std::uint64_t seed = 2026) {
    if (k_const < 1.0) raise(ErrorCode::BadParams, "certify_angle: K must be >= 1");
    if (pair_count < 1) raise(ErrorCode::BadParams, "certify_angle: need at least one pair");
    detail::check_split_index(sample.spectrum, i, true);
    const Matrix& be1 = sample.slow_sums[static_cast<std::size_t>(i - 1)].basis;
    const Matrix& be2 = sample.fast_sums[static_cast<std::size_t>(i)].basis;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    CertificateReport rep;
    rep.vectors = pair_count;
    for (int t = 0; t < pair_count; ++t) {
        Vector cu(be1.cols()), cv(be2.cols());
        for (int j = 0; j < cu.size(); ++j) cu(j) = gauss(rng);
        for (int j = 0; j < cv.size(); ++j) cv(j) = gauss(rng);
        const Vector u = be1 * cu;
        const Vector v = be2 * cv;
        const double denom = k_const * (u + v).norm();
        if (denom == 0.0) continue;
        rep.worst = std::max(rep.worst, std::max(u.norm(), v.norm()) / denom);
    }
    return rep;
}

}  // namespace oseledets
