#pragma once
// Report serialization: JSON for structured results, CSV for per-point tables.
// Finite numbers go through the default JSON writer (shortest round-trip
// form); text cells and cache payloads use 17 significant digits, which also
// round-trips doubles exactly. Infinities have no JSON literal, so they are
// written as the strings "inf" / "-inf" wherever they can occur.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oseledets/errors.hpp"
#include "oseledets/met.hpp"

namespace oseledets {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        raise(ErrorCode::BadParams, "not a number: '" + s + "'");
    return v;
}

// JSON value for a double: a number when finite, a string otherwise.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(format_double(v)); }

inline double number_from_json(const Json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_double(j.get<std::string>());
    raise(ErrorCode::BadParams, "expected a number or a numeric string");
}

inline Json point_to_json(const Point& x) {
    Json out = Json::array();
    for (int i = 0; i < x.size(); ++i) out.push_back(json_number(x(i)));
    return out;
}

// Basis vectors as rows: vectors[j] lists the ambient components of the j-th
// orthonormal basis vector.
inline Json subspace_to_json(const Subspace& s) {
    Json vectors = Json::array();
    for (int j = 0; j < s.dim(); ++j) {
        Json row = Json::array();
        for (int c = 0; c < s.ambient_dim; ++c) row.push_back(json_number(s.basis(c, j)));
        vectors.push_back(std::move(row));
    }
    return Json{{"ambient_dim", s.ambient_dim}, {"dim", s.dim()}, {"vectors", std::move(vectors)}};
}

inline Json spectrum_to_json(const SpectrumReport& spec) {
    Json exps = Json::array();
    for (double e : spec.exponents) exps.push_back(json_number(e));
    return Json{{"exponents", std::move(exps)},
                {"multiplicities", spec.multiplicities},
                {"horizon", spec.horizon},
                {"cluster_gap", json_number(spec.cluster_gap)},
                {"cluster_tol", spec.cluster_tol},
                {"neg_inf_floor", spec.neg_inf_floor}};
}

// One header row, '.' decimal separator, rows as preformatted cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header.size())
            raise(ErrorCode::BadParams, "csv row width does not match the header");
        rows.push_back(std::move(cells));
    }

    std::string to_string() const {
        std::ostringstream out;
        for (std::size_t c = 0; c < header.size(); ++c)
            out << (c ? "," : "") << header[c];
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
            out << "\n";
        }
        return out.str();
    }
};

// Write through a temp file plus rename so readers never observe a torn file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) raise(ErrorCode::BadParams, "cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out.flush()) raise(ErrorCode::BadParams, "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        raise(ErrorCode::BadParams, "cannot move report into place at '" + path.string() + "'");
    }
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::BadParams, "cannot read '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace detail {

// Line-oriented splitting payload for the cache. Every double prints at 17
// significant digits, so parsing restores the exact bits.
inline void emit_doubles(std::ostringstream& out, const char* tag, const double* v, int n) {
    out << tag << ' ' << n;
    for (int i = 0; i < n; ++i) out << ' ' << format_double(v[i]);
    out << '\n';
}

class LineReader {
public:
    explicit LineReader(const std::string& text) : in_(text) {}

    std::vector<std::string> next(const std::string& tag) {
        std::string line;
        if (!std::getline(in_, line))
            raise(ErrorCode::BadParams, "cache payload truncated before '" + tag + "'");
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head != tag)
            raise(ErrorCode::BadParams, "cache payload expected '" + tag + "', got '" + head + "'");
        std::vector<std::string> fields;
        std::string f;
        while (ls >> f) fields.push_back(f);
        return fields;
    }

    std::vector<double> next_doubles(const std::string& tag) {
        const auto fields = next(tag);
        if (fields.empty()) raise(ErrorCode::BadParams, "cache payload: empty '" + tag + "' line");
        const int n = std::stoi(fields[0]);
        if (static_cast<int>(fields.size()) != n + 1)
            raise(ErrorCode::BadParams, "cache payload: bad count on '" + tag + "'");
        std::vector<double> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = parse_double(fields[i + 1]);
        return out;
    }

private:
    std::istringstream in_;
};

inline void emit_subspace(std::ostringstream& out, const Subspace& s) {
    out << "space " << s.ambient_dim << ' ' << s.dim();
    for (int j = 0; j < s.dim(); ++j)
        for (int c = 0; c < s.ambient_dim; ++c) out << ' ' << format_double(s.basis(c, j));
    out << '\n';
}

inline Subspace read_subspace(LineReader& lr) {
    const auto fields = lr.next("space");
    if (fields.size() < 2) raise(ErrorCode::BadParams, "cache payload: bad space line");
    const int ambient = std::stoi(fields[0]);
    const int dim = std::stoi(fields[1]);
    if (ambient < 0 || dim < 0 || static_cast<int>(fields.size()) != 2 + ambient * dim)
        raise(ErrorCode::BadParams, "cache payload: bad space payload");
    Matrix basis(ambient, dim);
    int f = 2;
    for (int j = 0; j < dim; ++j)
        for (int c = 0; c < ambient; ++c) basis(c, j) = parse_double(fields[f++]);
    return Subspace::from_orthonormal(std::move(basis));
}

}  // namespace detail

inline std::string serialize_splitting(const SplittingSample& s) {
    std::ostringstream out;
    out << "splitting 1\n";
    detail::emit_doubles(out, "point", s.point.data(), static_cast<int>(s.point.size()));
    out << "horizon " << s.horizon << '\n';
    detail::emit_doubles(out, "exponents", s.spectrum.exponents.data(),
                         static_cast<int>(s.spectrum.exponents.size()));
    out << "multiplicities " << s.spectrum.multiplicities.size();
    for (int m : s.spectrum.multiplicities) out << ' ' << m;
    out << '\n';
    out << "spectrum_horizon " << s.spectrum.horizon << '\n';
    out << "cluster_gap " << format_double(s.spectrum.cluster_gap) << '\n';
    out << "cluster_tol " << format_double(s.spectrum.cluster_tol) << '\n';
    out << "neg_inf_floor " << format_double(s.spectrum.neg_inf_floor) << '\n';
    detail::emit_doubles(out, "per_step_rates", s.spectrum.per_step_rates.data(),
                         static_cast<int>(s.spectrum.per_step_rates.size()));
    out << "spaces " << s.spaces.size() << '\n';
    for (const auto& sp : s.spaces) detail::emit_subspace(out, sp);
    out << "slow_sums " << s.slow_sums.size() << '\n';
    for (const auto& sp : s.slow_sums) detail::emit_subspace(out, sp);
    out << "fast_sums " << s.fast_sums.size() << '\n';
    for (const auto& sp : s.fast_sums) detail::emit_subspace(out, sp);
    out << "reconstruction " << format_double(s.residuals.reconstruction) << '\n';
    return out.str();
}

inline SplittingSample parse_splitting(const std::string& text) {
    detail::LineReader lr(text);
    const auto head = lr.next("splitting");
    if (head.size() != 1 || head[0] != "1")
        raise(ErrorCode::BadParams, "cache payload: unsupported splitting format");
    SplittingSample s;
    const auto pt = lr.next_doubles("point");
    s.point = Point(static_cast<Eigen::Index>(pt.size()));
    for (std::size_t i = 0; i < pt.size(); ++i) s.point(static_cast<Eigen::Index>(i)) = pt[i];
    s.horizon = std::stoi(lr.next("horizon").at(0));
    s.spectrum.exponents = lr.next_doubles("exponents");
    {
        const auto fields = lr.next("multiplicities");
        const int n = std::stoi(fields.at(0));
        if (static_cast<int>(fields.size()) != n + 1)
            raise(ErrorCode::BadParams, "cache payload: bad multiplicities");
        s.spectrum.multiplicities.clear();
        for (int i = 0; i < n; ++i) s.spectrum.multiplicities.push_back(std::stoi(fields[i + 1]));
    }
    s.spectrum.horizon = std::stoi(lr.next("spectrum_horizon").at(0));
    s.spectrum.cluster_gap = parse_double(lr.next("cluster_gap").at(0));
    s.spectrum.cluster_tol = parse_double(lr.next("cluster_tol").at(0));
    s.spectrum.neg_inf_floor = parse_double(lr.next("neg_inf_floor").at(0));
    s.spectrum.per_step_rates = lr.next_doubles("per_step_rates");
    const auto read_list = [&lr](const char* tag) {
        std::vector<Subspace> out;
        detail::LineReader* p = &lr;
        const int n = std::stoi(p->next(tag).at(0));
        for (int i = 0; i < n; ++i) out.push_back(detail::read_subspace(*p));
        return out;
    };
    s.spaces = read_list("spaces");
    s.slow_sums = read_list("slow_sums");
    s.fast_sums = read_list("fast_sums");
    s.residuals.reconstruction = parse_double(lr.next("reconstruction").at(0));
    if (s.spectrum.exponents.empty() || s.spaces.size() != s.spectrum.exponents.size())
        raise(ErrorCode::BadParams, "cache payload: inconsistent splitting");
    return s;
}

}  // namespace oseledets
