#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "smelu/activations.hpp"
#include "smelu/error.hpp"
#include "smelu/rescu.hpp"

// Text form of an activation: `name` or `name(key=value, ...)`.
//
//   relu  linear
//   sigmoid|celu|softplus|swish|gelu|mish|tanhexp|smelu|sig_rescu|smooth_relu(beta=1)
//   selu(beta=1, lambda=1.0507)
//   gsmelu(a=1, b=1, gm=0, gp=1, t=0)          long keys alpha/beta/g_minus/g_plus work too
//   asym_smelu(a=1, b=1)  leaky_smelu(beta=1, gm=0)  zero_cross_smelu(a=1, b=1, gm=0, gp=1)
//
// The last three build piecewise activations through the rescu builders.

namespace smelu {

namespace detail {

class SpecParser {
public:
    explicit SpecParser(std::string_view text) : s_(text) {}

    ActivationSpec parse()
    {
        skip_ws();
        const std::size_t name_pos = pos_;
        std::string name;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s_[pos_++]))));
        if (name.empty()) throw ParseError("expected activation name", pos_);

        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            ++pos_;
            skip_ws();
            if (peek() != ')') {
                for (;;) {
                    parse_param();
                    skip_ws();
                    if (peek() == ',') {
                        ++pos_;
                        continue;
                    }
                    break;
                }
            }
            if (peek() != ')') throw ParseError("expected ',' or ')'", pos_);
            ++pos_;
        }
        skip_ws();
        if (pos_ != s_.size()) throw ParseError("trailing characters", pos_);
        return build(name, name_pos);
    }

private:
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

    void skip_ws()
    {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    void parse_param()
    {
        const std::size_t key_pos = pos_;
        std::string key;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s_[pos_++]))));
        if (key.empty()) throw ParseError("expected parameter name", pos_);
        skip_ws();
        if (peek() != '=') throw ParseError("expected '='", pos_);
        ++pos_;
        skip_ws();
        double value = 0.0;
        const char* first = s_.data() + pos_;
        const char* last = s_.data() + s_.size();
        if (first != last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc{}) throw ParseError("expected number", pos_);
        if (params_.count(key)) throw ParseError("duplicate parameter '" + key + "'", key_pos);
        params_[key] = {value, key_pos};
        pos_ = static_cast<std::size_t>(ptr - s_.data());
    }

    // Pulls a parameter under any of its spellings, falling back to `fallback`.
    double take(std::initializer_list<const char*> names, double fallback)
    {
        for (const char* n : names) {
            auto it = params_.find(n);
            if (it != params_.end()) {
                const double v = it->second.first;
                params_.erase(it);
                return v;
            }
        }
        return fallback;
    }

    void reject_leftovers() const
    {
        if (!params_.empty()) {
            const auto& [key, entry] = *params_.begin();
            throw ParseError("unknown parameter '" + key + "'", entry.second);
        }
    }

    ActivationSpec build(const std::string& name, std::size_t name_pos)
    {
        try {
            auto spec = build_unchecked(name, name_pos);
            reject_leftovers();
            return spec;
        } catch (const ParameterError& e) {
            throw ParseError(e.what(), name_pos);
        } catch (const GeometryError& e) {
            throw ParseError(e.what(), name_pos);
        }
    }

    ActivationSpec build_unchecked(const std::string& name, std::size_t name_pos)
    {
        if (name == "relu") return ActivationSpec::relu();
        if (name == "linear" || name == "identity") return ActivationSpec::linear();
        if (name == "selu") {
            const double beta = take({"beta"}, 1.0);
            return ActivationSpec::selu(beta, take({"lambda"}, selu_default_lambda));
        }
        if (name == "gsmelu") {
            GSmeLUParams p;
            p.alpha = take({"a", "alpha"}, 1.0);
            p.beta = take({"b", "beta"}, 1.0);
            p.g_minus = take({"gm", "g_minus"}, 0.0);
            p.g_plus = take({"gp", "g_plus"}, 1.0);
            p.t = take({"t"}, 0.0);
            return ActivationSpec::gsmelu(p);
        }
        if (name == "asym_smelu") {
            const double a = take({"a", "alpha"}, 1.0);
            return ActivationSpec::rescu(rescu::build_asymmetric_smelu(a, take({"b", "beta"}, 1.0)));
        }
        if (name == "leaky_smelu") {
            const double b = take({"beta", "b"}, 1.0);
            return ActivationSpec::rescu(rescu::build_leaky_smelu(b, take({"gm", "g_minus"}, 0.0)));
        }
        if (name == "zero_cross_smelu") {
            const double a = take({"a", "alpha"}, 1.0);
            const double b = take({"b", "beta"}, 1.0);
            const double gm = take({"gm", "g_minus"}, 0.0);
            return ActivationSpec::rescu(rescu::build_zero_cross_smelu(a, b, gm, take({"gp", "g_plus"}, 1.0)));
        }

        const double beta = take({"beta"}, 1.0);
        if (name == "sigmoid") return ActivationSpec::sigmoid(beta);
        if (name == "celu") return ActivationSpec::celu(beta);
        if (name == "softplus") return ActivationSpec::softplus(beta);
        if (name == "swish") return ActivationSpec::swish(beta);
        if (name == "gelu") return ActivationSpec::gelu(beta);
        if (name == "mish") return ActivationSpec::mish(beta);
        if (name == "tanhexp") return ActivationSpec::tanhexp(beta);
        if (name == "smelu") return ActivationSpec::smelu(beta);
        if (name == "sig_rescu") return ActivationSpec::sig_rescu(beta);
        if (name == "smooth_relu") return ActivationSpec::smooth_relu(beta);
        throw ParseError("unknown activation '" + name + "'", name_pos);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::map<std::string, std::pair<double, std::size_t>> params_;
};

} // namespace detail

/// Parses the activation grammar; throws ParseError with the offending position.
inline ActivationSpec parse_activation(std::string_view text) { return detail::SpecParser(text).parse(); }

/// Canonical grammar string. Piecewise activations have no grammar form and
/// render as "rescu"; use to_json for a lossless record.
inline std::string format_activation(const ActivationSpec& spec)
{
    auto num = [](double v) {
        std::array<char, 32> buf{};
        auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        return std::string(buf.data(), p);
    };
    const std::string name(to_string(spec.kind()));
    switch (spec.kind()) {
    case ActivationKind::ReLU:
    case ActivationKind::Linear:
    case ActivationKind::PiecewiseRESCU: return name;
    case ActivationKind::SELU: return name + "(beta=" + num(spec.beta()) + ",lambda=" + num(spec.lambda()) + ")";
    case ActivationKind::GeneralizedSmeLU: {
        const auto& p = spec.gsmelu_params();
        return name + "(a=" + num(p.alpha) + ",b=" + num(p.beta) + ",gm=" + num(p.g_minus) + ",gp=" + num(p.g_plus) +
               ",t=" + num(p.t) + ")";
    }
    default: return name + "(beta=" + num(spec.beta()) + ")";
    }
}

inline nlohmann::json to_json(const ActivationSpec& spec)
{
    if (spec.kind() == ActivationKind::PiecewiseRESCU) return {{"kind", "rescu"}, {"pieces", to_json(*spec.pieces())}};
    return {{"kind", std::string(to_string(spec.kind()))}, {"spec", format_activation(spec)}};
}

inline ActivationSpec activation_from_json(const nlohmann::json& j)
{
    try {
        if (j.is_string()) return parse_activation(j.get<std::string>());
        if (j.at("kind").get<std::string>() == "rescu") return ActivationSpec::rescu(piecewise_from_json(j.at("pieces")));
        return parse_activation(j.at("spec").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("activation json: ") + e.what());
    }
}

} // namespace smelu
