#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smelu/error.hpp"
#include "smelu/piecewise.hpp"

namespace smelu {

enum class ActivationKind {
    ReLU,
    Linear,
    Sigmoid,
    SELU,
    CELU,
    SoftPlus,
    Swish,
    GELU,
    Mish,
    TanhExp,
    SmeLU,
    GeneralizedSmeLU,
    SigRESCU,
    SmoothRelu,
    PiecewiseRESCU,
};

inline constexpr ActivationKind all_activation_kinds[] = {
    ActivationKind::ReLU,     ActivationKind::Linear,     ActivationKind::Sigmoid,
    ActivationKind::SELU,     ActivationKind::CELU,       ActivationKind::SoftPlus,
    ActivationKind::Swish,    ActivationKind::GELU,       ActivationKind::Mish,
    ActivationKind::TanhExp,  ActivationKind::SmeLU,      ActivationKind::GeneralizedSmeLU,
    ActivationKind::SigRESCU, ActivationKind::SmoothRelu, ActivationKind::PiecewiseRESCU,
};

inline std::string_view to_string(ActivationKind k)
{
    switch (k) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::Linear: return "linear";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::SELU: return "selu";
    case ActivationKind::CELU: return "celu";
    case ActivationKind::SoftPlus: return "softplus";
    case ActivationKind::Swish: return "swish";
    case ActivationKind::GELU: return "gelu";
    case ActivationKind::Mish: return "mish";
    case ActivationKind::TanhExp: return "tanhexp";
    case ActivationKind::SmeLU: return "smelu";
    case ActivationKind::GeneralizedSmeLU: return "gsmelu";
    case ActivationKind::SigRESCU: return "sig_rescu";
    case ActivationKind::SmoothRelu: return "smooth_relu";
    case ActivationKind::PiecewiseRESCU: return "rescu";
    }
    return "?";
}

/// Five-parameter smooth ReLU: slope g_minus left of -alpha, slope g_plus
/// right of beta, a quadratic bridge between, passing through (-alpha, t).
struct GSmeLUParams {
    double alpha = 1.0;
    double beta = 1.0;
    double g_minus = 0.0;
    double g_plus = 1.0;
    double t = 0.0;

    double width() const noexcept { return alpha + beta; }
};

/// Standard self-normalizing SELU scale.
inline constexpr double selu_default_lambda = 1.0507;

/// Immutable description of one parameterized activation. Build through the
/// named factories, which validate parameters.
///
/// `beta` is the sharpness for SoftPlus/Swish/GELU/Mish/TanhExp/Sigmoid/
/// SmoothRelu, the negative-side scale for SELU/CELU, and the half-width of
/// the transition region for SmeLU and Sig-RESCU (so larger means smoother
/// for SmeLU and sharper for the others).
class ActivationSpec {
public:
    static ActivationSpec relu() { return ActivationSpec(ActivationKind::ReLU); }
    static ActivationSpec linear() { return ActivationSpec(ActivationKind::Linear); }

    static ActivationSpec sigmoid(double beta = 1.0) { return make(ActivationKind::Sigmoid, beta); }
    static ActivationSpec celu(double beta = 1.0) { return make(ActivationKind::CELU, beta); }
    static ActivationSpec softplus(double beta = 1.0) { return make(ActivationKind::SoftPlus, beta); }
    static ActivationSpec swish(double beta = 1.0) { return make(ActivationKind::Swish, beta); }
    static ActivationSpec gelu(double beta = 1.0) { return make(ActivationKind::GELU, beta); }
    static ActivationSpec mish(double beta = 1.0) { return make(ActivationKind::Mish, beta); }
    static ActivationSpec tanhexp(double beta = 1.0) { return make(ActivationKind::TanhExp, beta); }
    static ActivationSpec sig_rescu(double beta = 1.0) { return make(ActivationKind::SigRESCU, beta); }
    static ActivationSpec smooth_relu(double beta = 1.0) { return make(ActivationKind::SmoothRelu, beta); }

    static ActivationSpec selu(double beta = 1.0, double lambda = selu_default_lambda)
    {
        auto s = make(ActivationKind::SELU, beta);
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ParameterError("selu: lambda must be > 0");
        s.lambda_ = lambda;
        return s;
    }

    /// beta = 0 is exact ReLU.
    static ActivationSpec smelu(double beta = 1.0)
    {
        if (!(beta >= 0.0) || !std::isfinite(beta)) throw ParameterError("smelu: beta must be >= 0");
        ActivationSpec s(ActivationKind::SmeLU);
        s.beta_ = beta;
        return s;
    }

    static ActivationSpec gsmelu(const GSmeLUParams& p)
    {
        if (!std::isfinite(p.alpha) || !std::isfinite(p.beta) || !std::isfinite(p.g_minus) ||
            !std::isfinite(p.g_plus) || !std::isfinite(p.t))
            throw ParameterError("gsmelu: parameters must be finite");
        if (!(p.width() > 0.0)) throw ParameterError("gsmelu: alpha + beta must be > 0");
        if (p.g_plus < p.g_minus) throw ParameterError("gsmelu: g_plus must be >= g_minus");
        ActivationSpec s(ActivationKind::GeneralizedSmeLU);
        s.gsmelu_ = p;
        s.beta_ = p.beta;
        return s;
    }

    static ActivationSpec rescu(PiecewiseC1 pieces)
    {
        ActivationSpec s(ActivationKind::PiecewiseRESCU);
        s.pieces_ = std::move(pieces);
        return s;
    }

    ActivationKind kind() const noexcept { return kind_; }
    double beta() const noexcept { return beta_; }
    double lambda() const noexcept { return lambda_; }
    const GSmeLUParams& gsmelu_params() const noexcept { return gsmelu_; }
    const std::optional<PiecewiseC1>& pieces() const noexcept { return pieces_; }

    /// Copy with a different beta (used by trainable-beta layers).
    ActivationSpec with_beta(double beta) const
    {
        if (kind_ != ActivationKind::SmeLU) throw UnsupportedKindError("with_beta: only smelu has a trainable beta");
        return smelu(beta);
    }

    /// Whether value and first derivative are continuous everywhere.
    bool is_c1() const noexcept
    {
        switch (kind_) {
        case ActivationKind::ReLU: return false;
        case ActivationKind::SELU: return beta_ == 1.0;
        case ActivationKind::SmeLU: return beta_ > 0.0;
        default: return true;
        }
    }

private:
    explicit ActivationSpec(ActivationKind k) : kind_(k) {}

    static ActivationSpec make(ActivationKind k, double beta)
    {
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw ParameterError(std::string(to_string(k)) + ": beta must be > 0");
        ActivationSpec s(k);
        s.beta_ = beta;
        return s;
    }

    ActivationKind kind_;
    double beta_ = 1.0;
    double lambda_ = selu_default_lambda;
    GSmeLUParams gsmelu_{};
    std::optional<PiecewiseC1> pieces_;
};

namespace detail {

// sigmoid() lives in piecewise.hpp

/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Standard normal CDF.
inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) noexcept
{
    return std::exp(-0.5 * z * z) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}

inline double smelu_value(double beta, double x) noexcept
{
    if (beta == 0.0) return x > 0.0 ? x : 0.0;
    if (x <= -beta) return 0.0;
    if (x >= beta) return x;
    return (x + beta) * (x + beta) / (4.0 * beta);
}

inline double hard_sigmoid(double beta, double x) noexcept
{
    if (beta == 0.0) return x >= 0.0 ? 1.0 : 0.0;
    return std::clamp((x + beta) / (2.0 * beta), 0.0, 1.0);
}

// Generalized SmeLU evaluated around the left knot:
//   y = t + g_-(x + alpha) + q (x + alpha)^2,  q = (g_+ - g_-) / (2 (alpha + beta))
inline double gsmelu_value(const GSmeLUParams& p, double x) noexcept
{
    const double q = (p.g_plus - p.g_minus) / (2.0 * p.width());
    if (x <= -p.alpha) return p.t + p.g_minus * (x + p.alpha);
    if (x >= p.beta) {
        const double right_knot_value = p.t + 0.5 * p.width() * (p.g_plus + p.g_minus);
        return right_knot_value + p.g_plus * (x - p.beta);
    }
    const double u = x + p.alpha;
    return p.t + p.g_minus * u + q * u * u;
}

inline double gsmelu_slope(const GSmeLUParams& p, double x) noexcept
{
    if (x <= -p.alpha) return p.g_minus;
    if (x >= p.beta) return p.g_plus;
    return p.g_minus + (p.g_plus - p.g_minus) * (x + p.alpha) / p.width();
}

} // namespace detail

/// Activation value.
inline double eval(const ActivationSpec& spec, double x)
{
    using detail::log1pexp;
    using detail::sigmoid;
    const double b = spec.beta();
    switch (spec.kind()) {
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Linear: return x;
    case ActivationKind::Sigmoid: return sigmoid(b * x);
    case ActivationKind::SELU: return spec.lambda() * (x > 0.0 ? x : b * std::expm1(x));
    case ActivationKind::CELU: return x >= 0.0 ? x : b * std::expm1(x / b);
    case ActivationKind::SoftPlus: return log1pexp(b * x) / b;
    case ActivationKind::Swish: return x * sigmoid(b * x);
    case ActivationKind::GELU: return x * detail::normal_cdf(b * x);
    case ActivationKind::Mish: return x * std::tanh(log1pexp(b * x));
    case ActivationKind::TanhExp: return b * x > 30.0 ? x : x * std::tanh(std::exp(b * x));
    case ActivationKind::SmeLU: return detail::smelu_value(b, x);
    case ActivationKind::GeneralizedSmeLU: return detail::gsmelu_value(spec.gsmelu_params(), x);
    case ActivationKind::SigRESCU: return x >= b ? x : 2.0 * b * sigmoid(2.0 * (x - b) / b);
    case ActivationKind::SmoothRelu: return x >= 0.0 ? x - std::log1p(b * x) / b : 0.0;
    case ActivationKind::PiecewiseRESCU: return (*spec.pieces())(x);
    }
    return x;
}

/// dy/dx. At the kinks of ReLU (x = 0) and SELU with beta != 1 (x = 0) the
/// right-hand derivative is returned.
inline double grad(const ActivationSpec& spec, double x)
{
    using detail::sigmoid;
    const double b = spec.beta();
    switch (spec.kind()) {
    case ActivationKind::ReLU: return x >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::Linear: return 1.0;
    case ActivationKind::Sigmoid: {
        const double s = sigmoid(b * x);
        return b * s * (1.0 - s);
    }
    case ActivationKind::SELU: return spec.lambda() * (x >= 0.0 ? 1.0 : b * std::exp(x));
    case ActivationKind::CELU: return x >= 0.0 ? 1.0 : std::exp(x / b);
    case ActivationKind::SoftPlus: return sigmoid(b * x);
    case ActivationKind::Swish: {
        const double s = sigmoid(b * x);
        return s + b * x * s * (1.0 - s);
    }
    case ActivationKind::GELU: return detail::normal_cdf(b * x) + b * x * detail::normal_pdf(b * x);
    case ActivationKind::Mish: {
        const double th = std::tanh(detail::log1pexp(b * x));
        return th + x * (1.0 - th * th) * b * sigmoid(b * x);
    }
    case ActivationKind::TanhExp: {
        if (b * x > 30.0) return 1.0;
        const double e = std::exp(b * x);
        const double th = std::tanh(e);
        return th + x * (1.0 - th * th) * b * e;
    }
    case ActivationKind::SmeLU: return detail::hard_sigmoid(b, x);
    case ActivationKind::GeneralizedSmeLU: return detail::gsmelu_slope(spec.gsmelu_params(), x);
    case ActivationKind::SigRESCU: {
        if (x >= b) return 1.0;
        const double s = sigmoid(2.0 * (x - b) / b);
        return 4.0 * s * (1.0 - s);
    }
    case ActivationKind::SmoothRelu: return x >= 0.0 ? b * x / (b * x + 1.0) : 0.0;
    case ActivationKind::PiecewiseRESCU: return spec.pieces()->slope(x);
    }
    return 1.0;
}

/// dy/dbeta for SmeLU: (beta^2 - x^2) / (4 beta^2) inside the transition
/// region, 0 outside.
inline double grad_wrt_beta(const ActivationSpec& spec, double x)
{
    if (spec.kind() != ActivationKind::SmeLU)
        throw UnsupportedKindError(std::string("grad_wrt_beta: not defined for ") + std::string(to_string(spec.kind())));
    const double b = spec.beta();
    if (b == 0.0 || std::abs(x) >= b) return 0.0;
    return (b * b - x * x) / (4.0 * b * b);
}

/// Points where the activation switches formula (its derivative may jump
/// there, or higher derivatives do).
inline std::vector<double> breakpoints(const ActivationSpec& spec)
{
    const double b = spec.beta();
    switch (spec.kind()) {
    case ActivationKind::ReLU:
    case ActivationKind::SELU:
    case ActivationKind::CELU:
    case ActivationKind::SmoothRelu: return {0.0};
    case ActivationKind::SmeLU: return b == 0.0 ? std::vector<double>{0.0} : std::vector<double>{-b, b};
    case ActivationKind::GeneralizedSmeLU: return {-spec.gsmelu_params().alpha, spec.gsmelu_params().beta};
    case ActivationKind::SigRESCU: return {b};
    case ActivationKind::PiecewiseRESCU: return spec.pieces()->knots();
    default: return {};
    }
}

/// max over the grid of |GELU_beta(x) - x sigmoid(sqrt(8/pi) beta x)|.
inline double swish_gelu_approx_error(double beta, std::span<const double> grid)
{
    if (!(beta > 0.0)) throw ParameterError("swish_gelu_approx_error: beta must be > 0");
    if (grid.empty()) throw ParameterError("swish_gelu_approx_error: empty grid");
    const auto gelu = ActivationSpec::gelu(beta);
    const double k = std::sqrt(8.0 / std::numbers::pi) * beta;
    double worst = 0.0;
    for (double x : grid) worst = std::max(worst, std::abs(eval(gelu, x) - x * detail::sigmoid(k * x)));
    return worst;
}

} // namespace smelu
