#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "smelu/error.hpp"

namespace smelu {

namespace detail {

inline double sigmoid(double x) noexcept
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// y = slope * x + intercept
struct LinearForm {
    double slope = 0.0;
    double intercept = 0.0;
};

/// y = a x^2 + b x + c, coefficients in the global x frame.
struct QuadraticForm {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

/// y = scale * sigmoid((x - shift) / width) + offset
struct SigmoidalForm {
    double scale = 1.0;
    double shift = 0.0;
    double width = 1.0;
    double offset = 0.0;
};

using PieceForm = std::variant<LinearForm, QuadraticForm, SigmoidalForm>;

struct Piece {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    PieceForm form;

    double value(double x) const
    {
        return std::visit(
            [x](const auto& f) -> double {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, LinearForm>) {
                    return f.slope * x + f.intercept;
                } else if constexpr (std::is_same_v<F, QuadraticForm>) {
                    return (f.a * x + f.b) * x + f.c;
                } else {
                    return f.scale * detail::sigmoid((x - f.shift) / f.width) + f.offset;
                }
            },
            form);
    }

    double slope(double x) const
    {
        return std::visit(
            [x](const auto& f) -> double {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, LinearForm>) {
                    return f.slope;
                } else if constexpr (std::is_same_v<F, QuadraticForm>) {
                    return 2.0 * f.a * x + f.b;
                } else {
                    const double s = detail::sigmoid((x - f.shift) / f.width);
                    return f.scale / f.width * s * (1.0 - s);
                }
            },
            form);
    }
};

/// Worst value/slope mismatch over all interior knots, each scaled by
/// max(1, |y|, |y'|) at that knot.
struct KnotResiduals {
    double value = 0.0;
    double slope = 0.0;
    std::size_t worst_knot = 0;
};

/// A continuously differentiable function assembled from smooth pieces that
/// tile the real line. Construction validates the tiling and C0/C1 joins.
class PiecewiseC1 {
public:
    static constexpr double default_tolerance = 1e-12;

    PiecewiseC1() : PiecewiseC1(std::vector<Piece>{Piece{}}) {}

    explicit PiecewiseC1(std::vector<Piece> pieces, double tolerance = default_tolerance)
        : pieces_(std::move(pieces))
    {
        check_cover();
        const auto r = residuals();
        if (r.value > tolerance)
            throw GeometryError("value discontinuity " + std::to_string(r.value), r.worst_knot);
        if (r.slope > tolerance)
            throw GeometryError("slope discontinuity " + std::to_string(r.slope), r.worst_knot);
    }

    std::span<const Piece> pieces() const noexcept { return pieces_; }

    /// Interior breakpoints, ascending.
    std::vector<double> knots() const
    {
        std::vector<double> k;
        for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) k.push_back(pieces_[i].hi);
        return k;
    }

    const Piece& piece_at(double x) const
    {
        auto it = std::upper_bound(pieces_.begin(), pieces_.end() - 1, x,
                                   [](double v, const Piece& p) { return v < p.hi; });
        return *it;
    }

    double operator()(double x) const { return piece_at(x).value(x); }
    double slope(double x) const { return piece_at(x).slope(x); }

    KnotResiduals residuals() const
    {
        KnotResiduals out;
        for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) {
            const double k = pieces_[i].hi;
            const double yl = pieces_[i].value(k), yr = pieces_[i + 1].value(k);
            const double dl = pieces_[i].slope(k), dr = pieces_[i + 1].slope(k);
            const double scale = std::max({1.0, std::abs(yl), std::abs(dl)});
            const double rv = std::abs(yl - yr) / scale;
            const double rd = std::abs(dl - dr) / scale;
            if (std::max(rv, rd) > std::max(out.value, out.slope)) out.worst_knot = i;
            out.value = std::max(out.value, rv);
            out.slope = std::max(out.slope, rd);
        }
        return out;
    }

private:
    void check_cover() const
    {
        if (pieces_.empty()) throw GeometryError("no pieces", 0);
        if (pieces_.front().lo != -std::numeric_limits<double>::infinity())
            throw GeometryError("first piece must start at -inf", 0);
        if (pieces_.back().hi != std::numeric_limits<double>::infinity())
            throw GeometryError("last piece must end at +inf", pieces_.size() - 1);
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            const auto& p = pieces_[i];
            if (!(p.lo < p.hi)) throw GeometryError("empty piece", i);
            if (i + 1 < pieces_.size() && p.hi != pieces_[i + 1].lo)
                throw GeometryError("gap or overlap between pieces", i);
            const bool finite = std::visit(
                [](const auto& f) {
                    using F = std::decay_t<decltype(f)>;
                    if constexpr (std::is_same_v<F, LinearForm>)
                        return std::isfinite(f.slope) && std::isfinite(f.intercept);
                    else if constexpr (std::is_same_v<F, QuadraticForm>)
                        return std::isfinite(f.a) && std::isfinite(f.b) && std::isfinite(f.c);
                    else
                        return std::isfinite(f.scale) && std::isfinite(f.shift) && std::isfinite(f.width) &&
                               std::isfinite(f.offset) && f.width != 0.0;
                },
                p.form);
            if (!finite) throw GeometryError("non-finite coefficients", i);
        }
    }

    std::vector<Piece> pieces_;
};

/// z(x) = p(x - horizontal) + vertical
inline PiecewiseC1 shift(const PiecewiseC1& p, double horizontal, double vertical)
{
    std::vector<Piece> out;
    for (const auto& piece : p.pieces()) {
        Piece q{piece.lo + horizontal, piece.hi + horizontal, piece.form};
        std::visit(
            [&](auto& f) {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, LinearForm>) {
                    f.intercept += vertical - f.slope * horizontal;
                } else if constexpr (std::is_same_v<F, QuadraticForm>) {
                    const double h = horizontal;
                    f.c = f.a * h * h - f.b * h + f.c + vertical;
                    f.b = f.b - 2.0 * f.a * h;
                } else {
                    f.shift += horizontal;
                    f.offset += vertical;
                }
            },
            q.form);
        out.push_back(q);
    }
    return PiecewiseC1(std::move(out));
}

// JSON layout: {"pieces": [{"lo": "-inf"|number, "hi": ..., "form": "linear",
// "slope": .., "intercept": ..}, ...], "knots": [...]}. Infinite bounds are
// written as the strings "-inf" / "inf".

namespace detail {

inline nlohmann::json bound_to_json(double v)
{
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    return v;
}

inline double bound_from_json(const nlohmann::json& j)
{
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        throw FormatError("bad bound '" + s + "'");
    }
    return j.get<double>();
}

} // namespace detail

inline nlohmann::json to_json(const PiecewiseC1& p)
{
    nlohmann::json pieces = nlohmann::json::array();
    for (const auto& piece : p.pieces()) {
        nlohmann::json j{{"lo", detail::bound_to_json(piece.lo)}, {"hi", detail::bound_to_json(piece.hi)}};
        std::visit(
            [&j](const auto& f) {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, LinearForm>) {
                    j["form"] = "linear";
                    j["slope"] = f.slope;
                    j["intercept"] = f.intercept;
                } else if constexpr (std::is_same_v<F, QuadraticForm>) {
                    j["form"] = "quadratic";
                    j["a"] = f.a;
                    j["b"] = f.b;
                    j["c"] = f.c;
                } else {
                    j["form"] = "sigmoidal";
                    j["scale"] = f.scale;
                    j["shift"] = f.shift;
                    j["width"] = f.width;
                    j["offset"] = f.offset;
                }
            },
            piece.form);
        pieces.push_back(std::move(j));
    }
    return {{"pieces", pieces}, {"knots", p.knots()}};
}

inline PiecewiseC1 piecewise_from_json(const nlohmann::json& doc)
{
    try {
        std::vector<Piece> pieces;
        for (const auto& j : doc.at("pieces")) {
            Piece p;
            p.lo = detail::bound_from_json(j.at("lo"));
            p.hi = detail::bound_from_json(j.at("hi"));
            const auto form = j.at("form").get<std::string>();
            if (form == "linear")
                p.form = LinearForm{j.at("slope").get<double>(), j.at("intercept").get<double>()};
            else if (form == "quadratic")
                p.form = QuadraticForm{j.at("a").get<double>(), j.at("b").get<double>(), j.at("c").get<double>()};
            else if (form == "sigmoidal")
                p.form = SigmoidalForm{j.at("scale").get<double>(), j.at("shift").get<double>(),
                                       j.at("width").get<double>(), j.value("offset", 0.0)};
            else
                throw FormatError("unknown piece form '" + form + "'");
            pieces.push_back(p);
        }
        return PiecewiseC1(std::move(pieces));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("piecewise json: ") + e.what());
    }
}

} // namespace smelu
