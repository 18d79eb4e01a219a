#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>
#include <openssl/evp.h>

#include <gnc/error.hpp>
#include <gnc/glasso.hpp>
#include <gnc/graph.hpp>
#include <gnc/pipeline.hpp>

namespace gnc::io {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// 17 significant digits; parsing the text back yields the same double.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline bool try_parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool try_parse_index(std::string_view s, std::size_t& out) {
    s = trim(s);
    if (s.empty()) return false;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line) + ": ";
}

} // namespace detail

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << content;
    if (!out) throw ValidationError("failed writing " + path);
}

// ---- edge lists ----

struct EdgeList {
    std::vector<Edge> edges;
    // One past the largest index seen; 0 when there are no edges.
    std::size_t node_bound = 0;
};

/// One edge per line, two 0-based indices separated by whitespace or a
/// comma. Blank lines and lines starting with '#' are skipped.
inline EdgeList parse_edge_list(std::istream& in, const std::string& source = "<edges>") {
    EdgeList out;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        std::string norm(line);
        for (char& c : norm)
            if (c == ',' || c == '\t') c = ' ';
        std::istringstream fields(norm);
        std::vector<std::string> tokens;
        for (std::string tok; fields >> tok;) tokens.push_back(tok);
        if (tokens.size() != 2) {
            throw ValidationError(detail::where(source, lineno) + "expected two node indices, got " +
                                  std::to_string(tokens.size()) + " fields");
        }
        std::size_t a = 0, b = 0;
        if (!detail::try_parse_index(tokens[0], a) || !detail::try_parse_index(tokens[1], b)) {
            throw ValidationError(detail::where(source, lineno) + "node indices must be nonnegative integers");
        }
        if (a == b) throw ValidationError(detail::where(source, lineno) + "self-loop at node " + std::to_string(a));
        out.edges.emplace_back(a, b);
        out.node_bound = std::max(out.node_bound, std::max(a, b) + 1);
    }
    return out;
}

inline EdgeList read_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return parse_edge_list(in, path);
}

/// n = 0 means "one past the largest index in the file".
inline Network load_network(const std::string& path, std::size_t n = 0) {
    const auto list = read_edge_list(path);
    if (n == 0) n = list.node_bound;
    if (n == 0) throw ValidationError(path + ": edge list is empty");
    return build_network(list.edges, n);
}

inline std::string format_edge_list(const Network& net) {
    std::string out;
    for (const auto& [a, b] : net.edges) out += std::to_string(a) + " " + std::to_string(b) + "\n";
    return out;
}

// ---- dense CSV matrices ----

/// Numeric CSV. The first line is a header when none of its fields is
/// empty or numeric. Empty fields, NA and nan are rejected.
inline Eigen::MatrixXd parse_matrix_csv(std::istream& in, const std::string& source = "<csv>",
                                        std::vector<std::string>* header = nullptr) {
    std::vector<std::vector<double>> rows;
    std::string raw;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool first = true;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (detail::trim(raw).empty()) continue;
        const auto fields = detail::split(raw, ',');
        std::vector<double> row(fields.size());
        bool numeric = true;
        bool all_text = true;
        for (std::size_t k = 0; k < fields.size(); ++k) {
            if (detail::try_parse_double(fields[k], row[k]) || detail::trim(fields[k]).empty()) all_text = false;
            if (!detail::try_parse_double(fields[k], row[k])) numeric = false;
        }
        if (first && all_text) {
            if (header != nullptr)
                for (const auto f : fields) header->emplace_back(detail::trim(f));
            width = fields.size();
            first = false;
            continue;
        }
        first = false;
        if (width == 0) width = fields.size();
        if (fields.size() != width) {
            throw ValidationError(detail::where(source, lineno) + "expected " + std::to_string(width) +
                                  " columns, got " + std::to_string(fields.size()));
        }
        if (!numeric) {
            for (std::size_t k = 0; k < fields.size(); ++k) {
                double v;
                if (!detail::try_parse_double(fields[k], v)) {
                    const auto t = detail::trim(fields[k]);
                    throw ValidationError(detail::where(source, lineno) + "column " + std::to_string(k + 1) +
                                          (t.empty() ? std::string(": missing value")
                                                     : ": not a finite number '" + std::string(t) + "'"));
                }
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError(source + ": no data rows");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < width; ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return X;
}

inline Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    return parse_matrix_csv(in, path, header);
}

inline std::string format_matrix_csv(const Eigen::MatrixXd& A) {
    std::string out;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        for (Eigen::Index j = 0; j < A.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(A(i, j));
        }
        out += '\n';
    }
    return out;
}

// ---- digests ----

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw NumericalError("SHA-256 computation failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

/// Digest of the canonical edge set, independent of file formatting.
inline std::string network_hash(const Network& net) {
    return sha256_hex("n=" + std::to_string(net.n) + "\n" + format_edge_list(net));
}

// ---- precision and model JSON ----

inline json diagnostics_to_json(const GlassoDiagnostics& d) {
    return json{{"objective", d.objective},
                {"kkt_residual", d.kkt_residual},
                {"iterations", d.iterations},
                {"converged", d.converged},
                {"repaired_input", d.repaired_input}};
}

/// Dense diagonal plus upper-triangle nonzeros as [j, j', value].
inline json theta_to_json(const Eigen::MatrixXd& Theta) {
    json diag = json::array();
    json off = json::array();
    for (Eigen::Index j = 0; j < Theta.rows(); ++j) diag.push_back(Theta(j, j));
    for (Eigen::Index i = 0; i < Theta.rows(); ++i)
        for (Eigen::Index j = i + 1; j < Theta.cols(); ++j)
            if (Theta(i, j) != 0.0) off.push_back(json::array({i, j, Theta(i, j)}));
    return json{{"p", Theta.rows()}, {"diagonal", diag}, {"offdiagonal", off}};
}

inline Eigen::MatrixXd theta_from_json(const json& j) {
    try {
        const auto p = j.at("p").get<Eigen::Index>();
        gnc::detail::require(p > 0, "precision dimension must be positive");
        const auto& diag = j.at("diagonal");
        gnc::detail::require(diag.is_array() && static_cast<Eigen::Index>(diag.size()) == p, "diagonal length must equal p");
        Eigen::MatrixXd Theta = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index k = 0; k < p; ++k) Theta(k, k) = diag.at(static_cast<std::size_t>(k)).get<double>();
        for (const auto& t : j.at("offdiagonal")) {
            gnc::detail::require(t.is_array() && t.size() == 3, "off-diagonal entries must be [j, k, value] triplets");
            const auto a = t.at(0).get<Eigen::Index>();
            const auto b = t.at(1).get<Eigen::Index>();
            gnc::detail::require(a >= 0 && b >= 0 && a < p && b < p && a != b, "off-diagonal index out of range");
            Theta(a, b) = Theta(b, a) = t.at(2).get<double>();
        }
        return Theta;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed precision JSON: ") + e.what());
    }
}

inline json precision_to_json(const PrecisionFit& fit) {
    json out = theta_to_json(fit.Theta);
    out["lambda"] = fit.lambda;
    out["support_size"] = fit.support.size();
    out["diagnostics"] = diagnostics_to_json(fit.diagnostics);
    return out;
}

inline Eigen::MatrixXd read_precision_json(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return theta_from_json(j);
}

/// Fields restored from a saved model.
struct ModelRecord {
    std::string network_hash;
    double alpha = 0.0;
    double lambda = 0.0;
    Eigen::MatrixXd M_hat;
    Eigen::MatrixXd Theta;
    json diagnostics;
    json config;
};

inline json model_to_json(const GncModel& model, const std::string& net_hash, const json& config = json::object()) {
    json out;
    out["network_hash"] = net_hash;
    out["alpha"] = model.config.alpha;
    out["lambda"] = model.config.lambda;
    out["alpha_method"] = model.config.alpha_method;
    out["lambda_method"] = model.config.lambda_method;
    out["n"] = model.mean_fit.M_hat.rows();
    out["p"] = model.mean_fit.M_hat.cols();
    out["M_hat_csv"] = format_matrix_csv(model.mean_fit.M_hat);
    out["Theta"] = theta_to_json(model.precision_fit.Theta);
    out["support_size"] = model.precision_fit.support.size();
    out["diagnostics"] = diagnostics_to_json(model.precision_fit.diagnostics);
    out["config"] = config;
    return out;
}

inline ModelRecord model_from_json(const json& j) {
    try {
        ModelRecord rec;
        rec.network_hash = j.at("network_hash").get<std::string>();
        rec.alpha = j.at("alpha").get<double>();
        rec.lambda = j.at("lambda").get<double>();
        std::istringstream csv(j.at("M_hat_csv").get<std::string>());
        rec.M_hat = parse_matrix_csv(csv, "M_hat_csv");
        gnc::detail::require(rec.M_hat.rows() == j.at("n").get<Eigen::Index>() &&
                            rec.M_hat.cols() == j.at("p").get<Eigen::Index>(),
                        "M_hat shape disagrees with n and p");
        rec.Theta = theta_from_json(j.at("Theta"));
        gnc::detail::require(rec.Theta.rows() == rec.M_hat.cols(), "Theta and M_hat widths disagree");
        rec.diagnostics = j.at("diagnostics");
        if (j.contains("config")) rec.config = j.at("config");
        return rec;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model JSON: ") + e.what());
    }
}

inline ModelRecord read_model_json(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return model_from_json(j);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- run manifest ----

/// Command, input digests, config echo and tool version. Wall-clock time
/// is included only on request so that reruns stay byte-identical.
struct Manifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
    json config = json::object();
    std::optional<double> wall_clock_seconds;

    void add_input(const std::string& path) { inputs.emplace_back(path, file_sha256(path)); }

    json to_json() const {
        json in = json::array();
        for (const auto& [path, digest] : inputs) in.push_back(json{{"path", path}, {"sha256", digest}});
        json out{{"command", command}, {"inputs", in}, {"config", config}, {"version", kToolVersion}};
        if (wall_clock_seconds) out["wall_clock_seconds"] = *wall_clock_seconds;
        return out;
    }
};

inline std::string manifest_path_for(const std::string& output) { return output + ".manifest.json"; }

} // namespace gnc::io
