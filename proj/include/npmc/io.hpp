#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <type_traits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "npmc/errors.hpp"
#include "npmc/gene_network.hpp"
#include "npmc/parameters.hpp"

namespace npmc {

using json = nlohmann::json;

/// Shortest round-trip decimal representation; identical bytes for identical doubles.
inline std::string format_double(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw NumericalRangeError("cannot format double", 0);
    }
    return std::string(buf, end);
}

inline double parse_double(std::string_view s)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        // from_chars does not accept "inf"/"-inf" spellings written by other tools.
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        throw ValidationError("cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

/// Minimal CSV writer; a header row is mandatory.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc), columns_(header.size())
    {
        if (!out_) {
            throw std::runtime_error("cannot open " + path.string() + " for writing");
        }
        write_row(header);
    }

    template <class... Ts>
    void row(const Ts&... values)
    {
        std::string line;
        std::size_t n = 0;
        ((append(line, values, n++)), ...);
        if (n != columns_) {
            throw std::logic_error("CSV row width does not match header of " + path_.string());
        }
        out_ << line << '\n';
    }

    void row_values(const std::vector<double>& values)
    {
        if (values.size() != columns_) {
            throw std::logic_error("CSV row width does not match header of " + path_.string());
        }
        std::string line;
        for (std::size_t i = 0; i < values.size(); ++i) {
            append(line, values[i], i);
        }
        out_ << line << '\n';
    }

    const std::filesystem::path& path() const { return path_; }

private:
    void write_row(const std::vector<std::string>& cells)
    {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            append(line, cells[i], i);
        }
        out_ << line << '\n';
    }

    static void append(std::string& line, double v, std::size_t i)
    {
        if (i > 0) line += ',';
        line += format_double(v);
    }
    static void append(std::string& line, const std::string& v, std::size_t i)
    {
        if (i > 0) line += ',';
        line += v;
    }
    static void append(std::string& line, const char* v, std::size_t i) { append(line, std::string(v), i); }
    template <class I>
        requires std::is_integral_v<I>
    static void append(std::string& line, I v, std::size_t i)
    {
        if (i > 0) line += ',';
        line += std::to_string(v);
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw ValidationError("CSV has no column '" + std::string(name) + "'");
    }

    std::vector<double> numeric_column(std::string_view name) const
    {
        const std::size_t c = column(name);
        std::vector<double> v;
        v.reserve(rows.size());
        for (const auto& r : rows) v.push_back(parse_double(r.at(c)));
        return v;
    }
};

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError(path.string() + " is empty");
    }
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size()) {
            throw ValidationError(path.string() + ": ragged CSV row");
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

/// 64-bit FNV-1a, used for reproducible config hashes.
inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// JSON conversions ----------------------------------------------------------

inline void to_json(json& j, const ModelParams& p)
{
    j = json{{"Q", p.Q},         {"m", p.m},         {"alpha", p.alpha}, {"beta_a", p.beta_a},
             {"beta_b", p.beta_b}, {"beta_c", p.beta_c}, {"eta", p.eta},     {"kappa", p.kappa},
             {"ks0", p.ks0},     {"ks1", p.ks1}};
}

inline void to_json(json& j, const NoiseScales& n)
{
    j = json{{"sigma_a", n.sigma_a}, {"sigma_b", n.sigma_b}, {"sigma_c", n.sigma_c}, {"sigma_A", n.sigma_A},
             {"sigma_B", n.sigma_B}, {"sigma_C", n.sigma_C}, {"sigma_S", n.sigma_S}};
}

inline void to_json(json& j, const ThetaVector& t)
{
    j = json{{"Q", t.Q}, {"m", t.m}, {"alpha", t.alpha}, {"beta_a", t.beta_a}};
}

inline void to_json(json& j, const SystemState& s) { j = s.x; }

inline void from_json(const json& j, SystemState& s)
{
    if (!j.is_array() || j.size() != kStateDim) {
        throw ValidationError("a system state needs 14 numbers");
    }
    for (std::size_t i = 0; i < kStateDim; ++i) s[i] = j[i].get<double>();
}

inline json to_json_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json_matrix(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

/// Column names of a full state: a1,b1,...,S1,a2,...,S2.
inline std::vector<std::string> state_column_names()
{
    std::vector<std::string> names;
    for (std::size_t cell = 1; cell <= 2; ++cell) {
        for (const char* v : kVarNames) names.push_back(std::string(v) + std::to_string(cell));
    }
    return names;
}

/// t, then the 14 state components, every `stride`-th state.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj, std::size_t stride = 1)
{
    auto header = state_column_names();
    header.insert(header.begin(), "t");
    CsvWriter w(path, header);
    std::vector<double> row(kStateDim + 1);
    for (std::size_t m = 0; m < traj.size(); m += stride) {
        row[0] = traj.time(m);
        for (std::size_t i = 0; i < kStateDim; ++i) row[i + 1] = traj.states[m][i];
        w.row_values(row);
    }
}

/// n, t, y1, y2.
inline void write_observations_csv(const std::filesystem::path& path, const ObservationSequence& obs,
                                   double tick_duration)
{
    CsvWriter w(path, {"n", "t", "y1", "y2"});
    for (const auto& o : obs) {
        w.row(o.n, static_cast<double>(o.n) * tick_duration, o.y[0], o.y[1]);
    }
}

inline ObservationSequence read_observations_csv(const std::filesystem::path& path)
{
    const CsvTable t = read_csv(path);
    const std::size_t cn = t.column("n"), c1 = t.column("y1"), c2 = t.column("y2");
    ObservationSequence obs;
    obs.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        Observation o;
        o.n = static_cast<std::size_t>(std::stoull(r[cn]));
        o.y = {parse_double(r[c1]), parse_double(r[c2])};
        obs.push_back(o);
    }
    return obs;
}

} // namespace npmc
