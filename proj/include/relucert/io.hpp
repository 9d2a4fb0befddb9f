#pragma once

// Text formats.
//
// Matrix:
//     relucert-matrix 1
//     <rows> <cols>
//     <row 0: cols space-separated numbers>
//     ...
// Numbers are written in shortest round-trip form, so write → read is exact.
//
// Dataset:  "relucert-dataset 1", "seed <u64>", then the X and Y matrices.
// Params:   "relucert-params 1", "layers <L>", then W_1 .. W_L.
//
// Training traces are JSON Lines: a header object naming the record fields,
// one object per iteration, then one summary object.

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "relucert/format.hpp"
#include "relucert/init.hpp"
#include "relucert/linalg.hpp"
#include "relucert/network.hpp"
#include "relucert/trainer.hpp"

namespace relucert {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_matrix(std::ostream& os, const Matrix& m) {
    os << "relucert-matrix 1\n" << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) os << (j ? " " : "") << format_double(m(i, j));
        os << '\n';
    }
}

namespace detail {

inline std::string next_token(std::istream& is, const char* what) {
    std::string tok;
    if (!(is >> tok)) throw FormatError(std::string("unexpected end of input while reading ") + what);
    return tok;
}

inline void expect_header(std::istream& is, const std::string& magic) {
    const std::string m = next_token(is, "header");
    const std::string v = next_token(is, "header version");
    if (m != magic) throw FormatError("expected '" + magic + "', found '" + m + "'");
    if (v != "1") throw FormatError("unsupported " + magic + " version " + v);
}

inline std::size_t read_count(std::istream& is, const char* what) {
    try {
        return static_cast<std::size_t>(parse_u64(next_token(is, what)));
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("bad ") + what + ": " + e.what());
    }
}

inline void expect_key(std::istream& is, const std::string& key) {
    const std::string k = next_token(is, key.c_str());
    if (k != key) throw FormatError("expected key '" + key + "', found '" + k + "'");
}

}  // namespace detail

inline Matrix read_matrix(std::istream& is) {
    detail::expect_header(is, "relucert-matrix");
    const std::size_t rows = detail::read_count(is, "rows");
    const std::size_t cols = detail::read_count(is, "cols");
    std::vector<double> data(rows * cols);
    for (double& v : data) {
        try {
            v = parse_double(detail::next_token(is, "matrix entry"));
        } catch (const InvalidArgument& e) {
            throw FormatError(e.what());
        }
    }
    try {
        return Matrix(rows, cols, std::move(data));
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
    os << "relucert-dataset 1\nseed " << d.seed << '\n';
    write_matrix(os, d.x);
    write_matrix(os, d.y);
}

inline Dataset read_dataset(std::istream& is) {
    detail::expect_header(is, "relucert-dataset");
    detail::expect_key(is, "seed");
    Dataset d;
    d.seed = detail::read_count(is, "seed");
    d.x = read_matrix(is);
    d.y = read_matrix(is);
    if (d.x.rows() != d.y.rows()) throw FormatError("dataset: X and Y have different sample counts");
    return d;
}

inline void write_params(std::ostream& os, const Params& p) {
    os << "relucert-params 1\nlayers " << p.depth() << '\n';
    for (const Matrix& w : p.weights) write_matrix(os, w);
}

inline Params read_params(std::istream& is) {
    detail::expect_header(is, "relucert-params");
    detail::expect_key(is, "layers");
    const std::size_t L = detail::read_count(is, "layer count");
    Params p;
    for (std::size_t l = 0; l < L; ++l) p.weights.push_back(read_matrix(is));
    return p;
}

template <class T, class Writer>
void save_file(const std::filesystem::path& path, const T& value, Writer write) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
    write(os, value);
    if (!os) throw FormatError("failed writing '" + path.string() + "'");
}

template <class Reader>
auto load_file(const std::filesystem::path& path, Reader read) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path.string() + "'");
    return read(is);
}

// ---------------------------------------------------------------------------
// Trace records
// ---------------------------------------------------------------------------

inline constexpr int kTraceVersion = 1;

namespace detail {

inline nlohmann::ordered_json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

inline nlohmann::ordered_json numbers(const std::vector<double>& v) {
    auto a = nlohmann::ordered_json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

inline nlohmann::ordered_json inequality_json(const Inequality& q) {
    return {{"lhs", number(q.lhs)}, {"rhs", number(q.rhs)}, {"holds", q.holds}};
}

}  // namespace detail

inline const std::vector<std::string>& trace_record_fields() {
    static const std::vector<std::string> f{
        "type", "k", "loss", "envelope", "audited", "sigma_min", "spectral_norms", "displacement", "grad_norms",
        "inv_weights", "inv_sigma", "inv_loss", "inv_displacement", "contraction", "descent"};
    return f;
}

inline const std::vector<std::string>& trace_summary_fields() {
    static const std::vector<std::string> f{
        "type", "iterations", "initial_loss", "final_loss", "target_loss", "reached_target", "eta", "alpha0",
        "decay_factor", "certified", "invariant_violations", "auxiliary_violations", "identity_failures",
        "max_identity_ratio", "stop_reason", "falsified"};
    return f;
}

inline nlohmann::ordered_json record_json(const IterationRecord& r) {
    nlohmann::ordered_json j;
    j["type"] = "iteration";
    j["k"] = r.k;
    j["loss"] = detail::number(r.loss);
    j["envelope"] = detail::number(r.envelope);
    j["audited"] = r.audited;
    j["sigma_min"] = detail::number(r.sigma_min);
    j["spectral_norms"] = detail::numbers(r.spectral_norms);
    j["displacement"] = detail::numbers(r.displacement);
    j["grad_norms"] = detail::numbers(r.grad_norms);
    j["inv_weights"] = r.inv_weights;
    j["inv_sigma"] = r.inv_sigma;
    j["inv_loss"] = r.inv_loss;
    j["inv_displacement"] = r.inv_displacement;
    j["contraction"] = r.contraction;
    if (r.descent) {
        const DescentAudit& d = *r.descent;
        j["descent"] = {{"q1", detail::number(d.q1)},
                        {"q2", detail::number(d.q2)},
                        {"term_move", detail::number(d.term_move)},
                        {"term_cross", detail::number(d.term_cross)},
                        {"term_descent", detail::number(d.term_descent)},
                        {"identity_residual", detail::number(d.identity_residual)},
                        {"identity_ok", d.identity_ok},
                        {"bound_move", detail::inequality_json(d.bound_move)},
                        {"bound_cross", detail::inequality_json(d.bound_cross)},
                        {"bound_descent", detail::inequality_json(d.bound_descent)},
                        {"descent_applicable", d.descent_applicable}};
    } else {
        j["descent"] = nullptr;
    }
    return j;
}

inline nlohmann::ordered_json summary_json(const TrainSummary& s) {
    nlohmann::ordered_json j;
    j["type"] = "summary";
    j["iterations"] = s.iterations;
    j["initial_loss"] = detail::number(s.initial_loss);
    j["final_loss"] = detail::number(s.final_loss);
    j["target_loss"] = detail::number(s.target_loss);
    j["reached_target"] = s.reached_target;
    j["eta"] = detail::number(s.eta);
    j["alpha0"] = detail::number(s.alpha0);
    j["decay_factor"] = detail::number(s.decay_factor);
    j["certified"] = s.certified;
    j["invariant_violations"] = s.invariant_violations;
    j["auxiliary_violations"] = s.auxiliary_violations;
    j["identity_failures"] = s.identity_failures;
    j["max_identity_ratio"] = detail::number(s.max_identity_ratio);
    j["stop_reason"] = s.stop_reason;
    j["falsified"] = s.falsified();
    return j;
}

inline void write_trace(std::ostream& os, const TrainTrace& trace) {
    nlohmann::ordered_json header;
    header["format"] = "relucert-trace";
    header["version"] = kTraceVersion;
    header["record_fields"] = trace_record_fields();
    header["summary_fields"] = trace_summary_fields();
    os << header.dump() << '\n';
    for (const IterationRecord& r : trace.records) os << record_json(r).dump() << '\n';
    os << summary_json(trace.summary).dump() << '\n';
}

}  // namespace relucert
