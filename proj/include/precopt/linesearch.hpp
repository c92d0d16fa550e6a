// One-dimensional minimization along a search direction: golden-ratio
// bracketing followed by Brent's parabolic-interpolation method, all in the
// working precision. Failure to find an improving step is an explicit,
// reportable outcome rather than an exception: it is the event that ends a
// conjugate-gradient run when the objective is flat at the current scalar
// width.

#pragma once

#include "precopt/precision.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace precopt {

enum class LineSearchStatus { Improved, NoImprovement, BracketFailed };

constexpr std::string_view to_string(LineSearchStatus status) {
    switch (status) {
        case LineSearchStatus::Improved: return "improved";
        case LineSearchStatus::NoImprovement: return "no_improvement";
        default: return "bracket_failed";
    }
}

/// Triple of step lengths a < b < c whose middle objective value is below
/// both ends, certifying an interior minimum.
template <typename S>
struct Bracket {
    S a, b, c;
    S fa, fb, fc;

    bool valid() const { return a < b && b < c && fb < fa && fb < fc; }
};

template <typename S>
struct LineSearchOutcome {
    S alpha = S(0);
    S f_alpha = S(0);
    long function_evals = 0;
    LineSearchStatus status = LineSearchStatus::NoImprovement;
};

enum class BracketStatus {
    Bracketed,  // valid triple found
    NoDescent,  // every probe was >= phi(0): no improving step visible
    Unbounded,  // phi kept decreasing past the expansion budget
};

template <typename S>
struct BracketResult {
    BracketStatus status = BracketStatus::NoDescent;
    Bracket<S> bracket{};
    S best_alpha = S(0);
    S best_f = S(0);
    long evals = 0;
};

inline constexpr int default_bracket_budget = 50;

/// Brackets a minimum of phi along alpha >= 0, anchored at (0, f0).
/// Downhill start: golden-ratio expansion until the middle point drops below
/// both ends. Uphill start: golden-ratio shrink towards 0 looking for any
/// point below f0 (which immediately yields a bracket against the previous
/// probe). Budgeted on both sides.
template <typename S, typename Phi>
BracketResult<S> bracket_minimum(Phi&& phi, S f0, S alpha0,
                                 int max_expansions = default_bracket_budget) {
    if (!(alpha0 > S(0))) throw std::invalid_argument("bracket_minimum: alpha0 must be > 0");
    constexpr S golden = S(1.618033988749894848L);
    constexpr S inv_golden = S(0.618033988749894848L);

    BracketResult<S> result;
    result.best_alpha = S(0);
    result.best_f = f0;

    S b = alpha0;
    S fb = phi(b);
    ++result.evals;

    if (fb < f0) {
        result.best_alpha = b;
        result.best_f = fb;
        S a = S(0), fa = f0;
        S c = b + golden * (b - a);
        S fc = phi(c);
        ++result.evals;
        for (int round = 0; round < max_expansions; ++round) {
            if (fc > fb) {
                result.status = BracketStatus::Bracketed;
                result.bracket = {a, b, c, fa, fb, fc};
                return result;
            }
            a = b;
            fa = fb;
            b = c;
            fb = fc;
            if (fb < result.best_f) {
                result.best_alpha = b;
                result.best_f = fb;
            }
            c = b + golden * (b - a);
            fc = phi(c);
            ++result.evals;
        }
        if (fc < result.best_f) {
            result.best_alpha = c;
            result.best_f = fc;
        }
        result.status = BracketStatus::Unbounded;
        return result;
    }

    // phi(alpha0) >= f0: shrink towards the origin
    S prev = b, fprev = fb;
    for (int round = 0; round < max_expansions; ++round) {
        const S next = prev * inv_golden;
        const S fnext = phi(next);
        ++result.evals;
        if (fnext < f0) {
            result.status = BracketStatus::Bracketed;
            result.bracket = {S(0), next, prev, f0, fnext, fprev};
            result.best_alpha = next;
            result.best_f = fnext;
            return result;
        }
        prev = next;
        fprev = fnext;
    }
    result.status = BracketStatus::NoDescent;
    return result;
}

template <typename S>
using BrentHook = std::function<void(S a, S b, S x, S fx)>;

/// Brent's method on a valid bracket. The relative tolerance is clamped to
/// sqrt(machine epsilon) of the working precision; requests below that only
/// burn function calls without resolving the objective. Status reports
/// whether the best point strictly improves on f0 in working precision.
template <typename S, typename Phi>
LineSearchOutcome<S> brent_minimize(Phi&& phi, const Bracket<S>& bracket, S tol, S f0,
                                    int max_iterations = 100,
                                    const BrentHook<S>& hook = {}) {
    if (!bracket.valid()) throw std::invalid_argument("brent_minimize: invalid bracket");
    constexpr S cgold = S(0.381966011250105152L);  // 1 - 1/golden
    const S eff_tol =
        std::max(tol, static_cast<S>(tolerance_floor(precision_of<S>)));
    const S tiny = S(10) * static_cast<S>(machine_epsilon(precision_of<S>));

    S a = bracket.a, b = bracket.c;
    // Seed the parabola memory with all three bracket points instead of
    // duplicating the middle: the first probe is then the vertex of the fit
    // through the widest available spacing, which on a locally quadratic
    // slice is exact to round-off where later, narrower fits are not.
    S x = bracket.b;
    S fx = bracket.fb;
    S w = bracket.fa <= bracket.fc ? bracket.a : bracket.c;
    S fw = bracket.fa <= bracket.fc ? bracket.fa : bracket.fc;
    S v = bracket.fa <= bracket.fc ? bracket.c : bracket.a;
    S fv = bracket.fa <= bracket.fc ? bracket.fc : bracket.fa;
    S d = S(0), e = b - a;

    LineSearchOutcome<S> outcome;
    for (int iter = 0; iter < max_iterations; ++iter) {
        if (hook) hook(a, b, x, fx);
        const S xm = (a + b) / S(2);
        const S tol1 = eff_tol * std::abs(x) + tiny;
        const S tol2 = S(2) * tol1;
        if (std::abs(x - xm) <= tol2 - (b - a) / S(2)) break;

        bool use_golden = true;
        if (std::abs(e) > tol1) {
            // parabolic fit through (x,fx), (w,fw), (v,fv)
            const S r = (x - w) * (fx - fv);
            S q = (x - v) * (fx - fw);
            S p = (x - v) * q - (x - w) * r;
            q = S(2) * (q - r);
            if (q > S(0)) p = -p;
            q = std::abs(q);
            const S e_prev = e;
            e = d;
            if (std::abs(p) < std::abs(q * e_prev / S(2)) && p > q * (a - x) &&
                p < q * (b - x)) {
                d = p / q;
                const S u = x + d;
                if (u - a < tol2 || b - u < tol2) d = (xm >= x) ? tol1 : -tol1;
                use_golden = false;
            }
        }
        if (use_golden) {
            e = (x >= xm) ? a - x : b - x;
            d = cgold * e;
        }
        const S u = (std::abs(d) >= tol1) ? x + d : x + ((d >= S(0)) ? tol1 : -tol1);
        const S fu = phi(u);
        ++outcome.function_evals;
        // The best point moves only on a certified improvement: the probe
        // must sit beyond the tolerance resolution around x and beat fx by
        // more than the round-off granularity of the two values. Probes
        // inside that resolution still shrink the interval, but letting a
        // 1-2 ulp flip of the computed objective repoint x would walk it off
        // an exact parabolic-step minimizer, costing the final step several
        // digits of accuracy.
        const S noise = S(4) * static_cast<S>(machine_epsilon(precision_of<S>)) *
                        (std::abs(fx) + std::abs(fu));
        if (std::abs(u - x) > tol1 && fu < fx - noise) {
            if (u >= x)
                a = x;
            else
                b = x;
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if (u < x)
                a = u;
            else
                b = u;
            if (fu <= fw || w == x) {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u;
                fv = fu;
            }
        }
    }
    outcome.alpha = x;
    outcome.f_alpha = fx;
    outcome.status =
        fx < f0 ? LineSearchStatus::Improved : LineSearchStatus::NoImprovement;
    return outcome;
}

/// Bracketing plus Brent. f0 is the (already measured) objective at step 0;
/// every phi invocation made here is counted exactly once in function_evals.
template <typename S, typename Phi>
LineSearchOutcome<S> line_search(Phi&& phi, S f0, S tol, S alpha_init,
                                 int max_expansions = default_bracket_budget) {
    auto bracketing = bracket_minimum(phi, f0, alpha_init, max_expansions);
    if (bracketing.status == BracketStatus::Bracketed) {
        // Brent starts from the bracket middle and only ever moves to points
        // at or below it, so its result is the best point seen overall.
        auto outcome = brent_minimize(phi, bracketing.bracket, tol, f0);
        outcome.function_evals += bracketing.evals;
        return outcome;
    }
    LineSearchOutcome<S> outcome;
    outcome.function_evals = bracketing.evals;
    if (bracketing.status == BracketStatus::NoDescent) {
        outcome.alpha = S(0);
        outcome.f_alpha = f0;
        outcome.status = LineSearchStatus::NoImprovement;
    } else {
        outcome.alpha = bracketing.best_alpha;
        outcome.f_alpha = bracketing.best_f;
        outcome.status = LineSearchStatus::BracketFailed;
    }
    return outcome;
}

/// Overload that measures phi(0) itself (charging one evaluation).
template <typename S, typename Phi>
LineSearchOutcome<S> line_search(Phi&& phi, S tol, S alpha_init,
                                 int max_expansions = default_bracket_budget) {
    const S f0 = phi(S(0));
    auto outcome = line_search(phi, f0, tol, alpha_init, max_expansions);
    ++outcome.function_evals;
    return outcome;
}

}  // namespace precopt
