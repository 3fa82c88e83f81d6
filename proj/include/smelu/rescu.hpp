#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "smelu/activations.hpp"
#include "smelu/error.hpp"
#include "smelu/piecewise.hpp"

// Builders for piecewise C1 activations: SmeLU and its generalized form, the
// special cases derived from it, Sigmoid-RESCU, and a generic joiner that
// bridges linear segments with quadratic pieces.

namespace smelu::rescu {

namespace detail {

inline constexpr double inf = std::numeric_limits<double>::infinity();

inline void require_finite(std::initializer_list<double> values, const char* who)
{
    for (double v : values)
        if (!std::isfinite(v)) throw ParameterError(std::string(who) + ": parameters must be finite");
}

} // namespace detail

/// Zero left of -beta, (x + beta)^2 / (4 beta) on [-beta, beta], identity right of beta.
inline PiecewiseC1 build_smelu(double beta)
{
    detail::require_finite({beta}, "build_smelu");
    if (!(beta > 0.0)) throw ParameterError("build_smelu: beta must be > 0");
    return PiecewiseC1({
        Piece{-detail::inf, -beta, LinearForm{0.0, 0.0}},
        Piece{-beta, beta, QuadraticForm{1.0 / (4.0 * beta), 0.5, beta / 4.0}},
        Piece{beta, detail::inf, LinearForm{1.0, 0.0}},
    });
}

/// Generalized SmeLU. Coefficients of the middle piece in the global frame:
///   a = (g+ - g-) / (2 (alpha + beta))
///   b = (alpha g+ + beta g-) / (alpha + beta)
///   c = t + (alpha^2 (g+ + g-) + 2 alpha beta g-) / (2 (alpha + beta))
inline PiecewiseC1 build_gsmelu(double alpha, double beta, double g_minus, double g_plus, double t)
{
    detail::require_finite({alpha, beta, g_minus, g_plus, t}, "build_gsmelu");
    const double w = alpha + beta;
    if (!(w > 0.0)) throw ParameterError("build_gsmelu: alpha + beta must be > 0");

    const double a = (g_plus - g_minus) / (2.0 * w);
    const double b = (alpha * g_plus + beta * g_minus) / w;
    const double c = t + (alpha * alpha * (g_plus + g_minus) + 2.0 * alpha * beta * g_minus) / (2.0 * w);
    return PiecewiseC1({
        Piece{-detail::inf, -alpha, LinearForm{g_minus, t + g_minus * alpha}},
        Piece{-alpha, beta, QuadraticForm{a, b, c}},
        Piece{beta, detail::inf,
              LinearForm{g_plus, t + 0.5 * w * g_minus + 0.5 * (alpha - beta) * g_plus}},
    });
}

inline PiecewiseC1 build_gsmelu(const GSmeLUParams& p)
{
    return build_gsmelu(p.alpha, p.beta, p.g_minus, p.g_plus, p.t);
}

/// SmeLU with transition region [-alpha, beta].
inline PiecewiseC1 build_asymmetric_smelu(double alpha, double beta)
{
    detail::require_finite({alpha, beta}, "build_asymmetric_smelu");
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("build_asymmetric_smelu: alpha, beta must be >= 0");
    const double w = alpha + beta;
    if (!(w > 0.0)) throw ParameterError("build_asymmetric_smelu: alpha + beta must be > 0");
    // (x + alpha)^2 / (2w) expanded
    return PiecewiseC1({
        Piece{-detail::inf, -alpha, LinearForm{0.0, 0.0}},
        Piece{-alpha, beta, QuadraticForm{1.0 / (2.0 * w), alpha / w, alpha * alpha / (2.0 * w)}},
        Piece{beta, detail::inf, LinearForm{1.0, 0.5 * (alpha - beta)}},
    });
}

/// SmeLU counterpart of a leaky ReLU: slope g_minus on the left, 1 on the right.
inline PiecewiseC1 build_leaky_smelu(double beta, double g_minus)
{
    detail::require_finite({beta, g_minus}, "build_leaky_smelu");
    if (!(beta > 0.0)) throw ParameterError("build_leaky_smelu: beta must be > 0");
    if (!(g_minus < 1.0)) throw ParameterError("build_leaky_smelu: g_minus must be < 1");
    return PiecewiseC1({
        Piece{-detail::inf, -beta, LinearForm{g_minus, g_minus * beta}},
        Piece{-beta, beta,
              QuadraticForm{(1.0 - g_minus) / (4.0 * beta), 0.5 * (1.0 + g_minus), 0.25 * beta * (1.0 + 3.0 * g_minus)}},
        Piece{beta, detail::inf, LinearForm{1.0, g_minus * beta}},
    });
}

/// Generalized SmeLU constrained to pass through the origin instead of (-alpha, t).
inline PiecewiseC1 build_zero_cross_smelu(double alpha, double beta, double g_minus, double g_plus)
{
    detail::require_finite({alpha, beta, g_minus, g_plus}, "build_zero_cross_smelu");
    const double w = alpha + beta;
    if (!(w > 0.0)) throw ParameterError("build_zero_cross_smelu: alpha + beta must be > 0");
    const double d = g_minus - g_plus;
    return PiecewiseC1({
        Piece{-detail::inf, -alpha, LinearForm{g_minus, alpha * alpha * d / (2.0 * w)}},
        Piece{-alpha, beta, QuadraticForm{(g_plus - g_minus) / (2.0 * w), (alpha * g_plus + beta * g_minus) / w, 0.0}},
        Piece{beta, detail::inf, LinearForm{g_plus, beta * beta * d / (2.0 * w)}},
    });
}

/// 2 beta sigmoid(2 (x - beta) / beta) left of beta, identity right of it.
inline PiecewiseC1 build_sig_rescu(double beta)
{
    detail::require_finite({beta}, "build_sig_rescu");
    if (!(beta > 0.0)) throw ParameterError("build_sig_rescu: beta must be > 0");
    return PiecewiseC1({
        Piece{-detail::inf, beta, SigmoidalForm{2.0 * beta, beta, 0.5 * beta, 0.0}},
        Piece{beta, detail::inf, LinearForm{1.0, 0.0}},
    });
}

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/// A linear piece of a multi-segment activation. The first segment must be
/// anchored; later ones may leave the anchor out and inherit their intercept
/// from the bridge on their left.
struct LinearSegment {
    double slope = 0.0;
    std::optional<Point> anchor;
};

/// Joins linear segments with quadratic bridges, left to right.
///
/// Bridge i connects segment i to segment i+1 and has width bridge_widths[i].
/// Placement:
///   - segment i+1 anchored: the bridge is centred on the intersection of the
///     two lines. That parabola meets both lines in value and slope, so both
///     anchors are honoured.
///   - segment i+1 free: the bridge starts at the x of segment i's anchor and
///     segment i+1's intercept follows from continuity. A derived segment's
///     anchor is its left knot, so two free segments in a row leave the
///     middle one with zero length and are rejected.
/// Each bridge is the parabola that matches the left line's value and slope at
/// its left knot and the right slope at its right knot.
inline PiecewiseC1 join_linear_pieces(const std::vector<LinearSegment>& segments,
                                      const std::vector<double>& bridge_widths)
{
    if (segments.empty()) throw ParameterError("join_linear_pieces: need at least one segment");
    if (bridge_widths.size() + 1 != segments.size())
        throw ParameterError("join_linear_pieces: need exactly one bridge width per adjacent segment pair");
    if (!segments.front().anchor) throw GeometryError("first segment must be anchored", 0);
    for (double w : bridge_widths)
        if (!(w > 0.0) || !std::isfinite(w)) throw ParameterError("join_linear_pieces: bridge widths must be > 0");

    std::vector<Piece> pieces;
    double lo = -detail::inf;
    double slope = segments[0].slope;
    double intercept = segments[0].anchor->y - slope * segments[0].anchor->x;
    double anchor_x = segments[0].anchor->x;

    for (std::size_t i = 0; i < bridge_widths.size(); ++i) {
        const auto& next = segments[i + 1];
        const double w = bridge_widths[i];
        double xl = 0.0;
        if (next.anchor) {
            const double next_intercept = next.anchor->y - next.slope * next.anchor->x;
            if (next.slope == slope) {
                // parallel lines never meet; identical ones need no bridge
                throw GeometryError("segments " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                        " are parallel; no bridge can join them",
                                    i);
            }
            const double xc = (next_intercept - intercept) / (slope - next.slope);
            xl = xc - 0.5 * w;
        } else {
            xl = anchor_x;
        }
        if (!(xl > lo)) throw GeometryError("bridge overlaps the previous piece; adjust anchors or widths", i);

        const double xr = xl + w;
        const double yl = slope * xl + intercept;
        const double q = (next.slope - slope) / (2.0 * w);
        pieces.push_back(Piece{lo, xl, LinearForm{slope, intercept}});
        pieces.push_back(Piece{xl, xr, QuadraticForm{q, slope - 2.0 * q * xl, yl - slope * xl + q * xl * xl}});

        const double yr = yl + 0.5 * w * (slope + next.slope);
        slope = next.slope;
        if (next.anchor) {
            intercept = next.anchor->y - slope * next.anchor->x;
            anchor_x = next.anchor->x;
        } else {
            intercept = yr - slope * xr;
            anchor_x = xr;
        }
        lo = xr;
    }
    pieces.push_back(Piece{lo, detail::inf, LinearForm{slope, intercept}});
    return PiecewiseC1(std::move(pieces));
}

} // namespace smelu::rescu
