#pragma once

// Experiment configuration: flat `key = value` text, one entry per line.
// Blank lines and lines starting with '#' are ignored; lists are
// comma-separated.  See docs/config.md for the full key table.

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "relucert/format.hpp"
#include "relucert/init.hpp"
#include "relucert/linalg.hpp"

namespace relucert {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CSchedule { Ones, LeCunDeep, Explicit };

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::vector<std::size_t> widths;
    std::size_t samples = 0;

    InitKind init = InitKind::LeCunTwoLayer;
    std::optional<double> beta;        // BetaScaled: nullopt means beta_search
    double beta_cap = 1e12;
    double output_variance_exponent = 4.0 / 3.0;

    CSchedule c_schedule = CSchedule::Ones;
    std::vector<double> c_values;      // Explicit only

    std::optional<double> eta;         // nullopt means "auto"
    double eta_safety = 0.9;

    std::size_t max_iters = 10000;
    std::optional<double> target_loss;  // absolute; overrides target_loss_rel
    double target_loss_rel = 1e-10;
    bool audit = true;
    std::size_t audit_stride = 1;
    std::size_t lambda_star_samples = 2000;

    std::string output;
    std::string dataset_file;
    std::string params_file;

    // Sweep grid.
    std::vector<std::size_t> sweep_samples;
    std::vector<std::size_t> sweep_widths;   // values substituted for n_{L-1}
    std::size_t sweep_seeds = 0;

    std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline std::string init_kind_name(InitKind k) {
    switch (k) {
        case InitKind::BetaScaled: return "beta_scaled";
        case InitKind::LeCunTwoLayer: return "lecun";
        case InitKind::LeCunDeep: return "lecun_deep";
    }
    return "?";
}

namespace detail {

inline std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        const auto pos = s.find(',');
        out.push_back(trim(s.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        s.remove_prefix(pos + 1);
    }
    return out;
}

inline std::vector<std::size_t> parse_count_list(std::string_view key, std::string_view v) {
    std::vector<std::size_t> out;
    for (auto t : split_list(v)) {
        try {
            out.push_back(static_cast<std::size_t>(parse_u64(t)));
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
        }
    }
    return out;
}

inline std::vector<double> parse_number_list(std::string_view key, std::string_view v) {
    std::vector<double> out;
    for (auto t : split_list(v)) {
        try {
            out.push_back(parse_double(t));
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
        }
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        if constexpr (std::is_floating_point_v<T>) s += format_double(v[i]);
        else s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    if (c.widths.size() < 2) throw ConfigError("widths: need at least two entries");
    for (std::size_t w : c.widths)
        if (w == 0) throw ConfigError("widths: every width must be positive");
    if (c.samples == 0 && c.dataset_file.empty()) throw ConfigError("samples: must be positive");
    if (c.init == InitKind::BetaScaled && c.depth() < 2) throw ConfigError("init = beta_scaled needs depth >= 2");
    if (c.init == InitKind::LeCunDeep && c.depth() < 2) throw ConfigError("init = lecun_deep needs depth >= 2");
    if (c.beta && !(*c.beta > 0.0)) throw ConfigError("beta: must be positive");
    if (!(c.beta_cap >= 1.0)) throw ConfigError("beta_cap: must be >= 1");
    if (!(c.output_variance_exponent > 1.0)) throw ConfigError("output_variance_exponent: must exceed 1");
    if (c.c_schedule == CSchedule::LeCunDeep && c.depth() < 2) throw ConfigError("c_schedule = lecun_deep needs depth >= 2");
    if (c.c_schedule == CSchedule::Explicit) {
        if (c.c_values.size() != c.depth())
            throw ConfigError("c_schedule: expected " + std::to_string(c.depth()) + " values");
        for (double v : c.c_values)
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("c_schedule: values must be positive");
    }
    if (c.eta && !(*c.eta > 0.0)) throw ConfigError("eta: must be positive or 'auto'");
    if (!(c.eta_safety > 0.0 && c.eta_safety < 1.0)) throw ConfigError("eta_safety: must lie in (0, 1)");
    if (c.target_loss && !(*c.target_loss >= 0.0)) throw ConfigError("target_loss: must be non-negative");
    if (!(c.target_loss_rel >= 0.0)) throw ConfigError("target_loss_rel: must be non-negative");
    if (c.audit_stride == 0) throw ConfigError("audit_stride: must be >= 1");
    for (std::size_t n : c.sweep_samples)
        if (n == 0) throw ConfigError("sweep_samples: values must be positive");
    for (std::size_t n : c.sweep_widths)
        if (n == 0) throw ConfigError("sweep_widths: values must be positive");
}

inline ExperimentConfig parse_config(std::istream& is) {
    ExperimentConfig c;
    std::map<std::string, std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string_view v = trim(line);
        if (v.empty() || v.front() == '#') continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key(trim(v.substr(0, eq)));
        const std::string val(trim(v.substr(eq + 1)));
        if (seen.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        seen[key] = val;
    }

    auto number = [](const std::string& k, const std::string& v) {
        try {
            return parse_double(v);
        } catch (const InvalidArgument& e) {
            throw ConfigError(k + ": " + e.what());
        }
    };
    auto count = [](const std::string& k, const std::string& v) {
        try {
            return static_cast<std::size_t>(parse_u64(v));
        } catch (const InvalidArgument& e) {
            throw ConfigError(k + ": " + e.what());
        }
    };
    auto boolean = [](const std::string& k, const std::string& v) {
        if (v == "true") return true;
        if (v == "false") return false;
        throw ConfigError(k + ": expected true or false");
    };

    if (!seen.count("widths")) throw ConfigError("missing required key 'widths'");

    for (const auto& [k, v] : seen) {
        if (k == "seed") {
            try {
                c.seed = parse_u64(v);
            } catch (const InvalidArgument& e) {
                throw ConfigError("seed: " + std::string(e.what()));
            }
        } else if (k == "widths") c.widths = detail::parse_count_list(k, v);
        else if (k == "samples") c.samples = count(k, v);
        else if (k == "init") {
            if (v == "beta_scaled") c.init = InitKind::BetaScaled;
            else if (v == "lecun") c.init = InitKind::LeCunTwoLayer;
            else if (v == "lecun_deep") c.init = InitKind::LeCunDeep;
            else throw ConfigError("init: expected beta_scaled, lecun or lecun_deep");
        } else if (k == "beta") {
            if (v == "auto") c.beta.reset();
            else c.beta = number(k, v);
        } else if (k == "beta_cap") c.beta_cap = number(k, v);
        else if (k == "output_variance_exponent") c.output_variance_exponent = number(k, v);
        else if (k == "c_schedule") {
            if (v == "ones") c.c_schedule = CSchedule::Ones;
            else if (v == "lecun_deep") c.c_schedule = CSchedule::LeCunDeep;
            else {
                c.c_schedule = CSchedule::Explicit;
                c.c_values = detail::parse_number_list(k, v);
            }
        } else if (k == "eta") {
            if (v == "auto") c.eta.reset();
            else c.eta = number(k, v);
        } else if (k == "eta_safety") c.eta_safety = number(k, v);
        else if (k == "max_iters") c.max_iters = count(k, v);
        else if (k == "target_loss") c.target_loss = number(k, v);
        else if (k == "target_loss_rel") c.target_loss_rel = number(k, v);
        else if (k == "audit") c.audit = boolean(k, v);
        else if (k == "audit_stride") c.audit_stride = count(k, v);
        else if (k == "lambda_star_samples") c.lambda_star_samples = count(k, v);
        else if (k == "output") c.output = v;
        else if (k == "dataset_file") c.dataset_file = v;
        else if (k == "params_file") c.params_file = v;
        else if (k == "sweep_samples") c.sweep_samples = detail::parse_count_list(k, v);
        else if (k == "sweep_widths") c.sweep_widths = detail::parse_count_list(k, v);
        else if (k == "sweep_seeds") c.sweep_seeds = count(k, v);
        else throw ConfigError("unknown key '" + k + "'");
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

/// Canonical form: every key, fixed order.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
    auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
    kv("seed", std::to_string(c.seed));
    kv("widths", detail::join(c.widths));
    kv("samples", std::to_string(c.samples));
    kv("init", init_kind_name(c.init));
    kv("beta", c.beta ? format_double(*c.beta) : "auto");
    kv("beta_cap", format_double(c.beta_cap));
    kv("output_variance_exponent", format_double(c.output_variance_exponent));
    kv("c_schedule", c.c_schedule == CSchedule::Ones        ? std::string("ones")
                     : c.c_schedule == CSchedule::LeCunDeep ? std::string("lecun_deep")
                                                            : detail::join(c.c_values));
    kv("eta", c.eta ? format_double(*c.eta) : "auto");
    kv("eta_safety", format_double(c.eta_safety));
    kv("max_iters", std::to_string(c.max_iters));
    if (c.target_loss) kv("target_loss", format_double(*c.target_loss));
    kv("target_loss_rel", format_double(c.target_loss_rel));
    kv("audit", c.audit ? "true" : "false");
    kv("audit_stride", std::to_string(c.audit_stride));
    kv("lambda_star_samples", std::to_string(c.lambda_star_samples));
    if (!c.output.empty()) kv("output", c.output);
    if (!c.dataset_file.empty()) kv("dataset_file", c.dataset_file);
    if (!c.params_file.empty()) kv("params_file", c.params_file);
    if (!c.sweep_samples.empty()) kv("sweep_samples", detail::join(c.sweep_samples));
    if (!c.sweep_widths.empty()) kv("sweep_widths", detail::join(c.sweep_widths));
    if (c.sweep_seeds) kv("sweep_seeds", std::to_string(c.sweep_seeds));
}

inline std::string config_to_string(const ExperimentConfig& c) {
    std::ostringstream os;
    write_config(os, c);
    return os.str();
}

}  // namespace relucert
