#include "ecgi/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "ecgi/errors.hpp"

namespace ecgi {

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ValidationError("cannot open file for writing: " + path);
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open file for reading: " + path);
    return is;
}

double parse_double(const std::string& s, const std::string& path, int line) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError(path + ":" + std::to_string(line) +
                              ": cannot parse number '" + s + "'");
    return v;
}

long parse_long(const std::string& s, const std::string& path, int line) {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError(path + ":" + std::to_string(line) +
                              ": cannot parse integer '" + s + "'");
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            std::string f = line.substr(start, i - start);
            if (!f.empty() && f.back() == '\r') f.pop_back();
            out.push_back(std::move(f));
            start = i + 1;
        }
    }
    return out;
}

} // namespace

void write_series_csv(const std::string& path, const TimeSeriesField& series) {
    std::ofstream os = open_out(path);
    os << "node,time_ms,value\n";
    for (int k = 0; k < series.sample_count(); ++k) {
        const std::string t = format_double(series.time_at(k));
        for (int i = 0; i < series.node_count(); ++i) {
            os << i << ',' << t << ',' << format_double(series.values(i, k)) << '\n';
        }
    }
    if (!os) throw ValidationError("failed writing " + path);
}

TimeSeriesField read_series_csv(const std::string& path) {
    std::ifstream is = open_in(path);
    std::string line;
    if (!std::getline(is, line))
        throw ValidationError(path + ": empty series file");

    struct Row {
        int node;
        double time;
        double value;
    };
    std::vector<Row> rows;
    std::vector<double> times;
    int max_node = -1;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 3)
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": expected 3 columns");
        Row r{static_cast<int>(parse_long(fields[0], path, line_no)),
              parse_double(fields[1], path, line_no),
              parse_double(fields[2], path, line_no)};
        if (r.node < 0)
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": negative node index");
        max_node = std::max(max_node, r.node);
        if (times.empty() || times.back() != r.time) times.push_back(r.time);
        rows.push_back(r);
    }
    if (rows.empty()) throw ValidationError(path + ": no data rows");

    std::vector<double> sorted_times = times;
    std::sort(sorted_times.begin(), sorted_times.end());
    sorted_times.erase(std::unique(sorted_times.begin(), sorted_times.end()),
                       sorted_times.end());
    const int m = static_cast<int>(sorted_times.size());
    const int n = max_node + 1;
    const double t0 = sorted_times.front();
    const double dt = m > 1 ? (sorted_times.back() - t0) / (m - 1) : 1.0;
    for (int k = 0; k < m; ++k) {
        if (std::abs(sorted_times[k] - (t0 + k * dt)) > 1e-9 * std::max(1.0, dt))
            throw ValidationError(path + ": time samples are not uniform");
    }

    Eigen::MatrixXd values(n, m);
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n, m);
    for (const Row& r : rows) {
        const int k = static_cast<int>(std::llround((r.time - t0) / dt));
        values(r.node, k) = r.value;
        seen(r.node, k) += 1;
    }
    if ((seen.array() != 1).any())
        throw ValidationError(path + ": series is missing entries or has duplicates");
    return TimeSeriesField(std::move(values), dt, t0);
}

void write_activation_csv(const std::string& path, const ActivationMap& map) {
    std::ofstream os = open_out(path);
    os << "node,time_ms,activated,method,params\n";
    for (int i = 0; i < map.node_count(); ++i) {
        os << i << ',' << format_double(map.times_ms[i]) << ','
           << (map.activated[i] ? 1 : 0) << ',' << map.method << ',' << map.params
           << '\n';
    }
    if (!os) throw ValidationError("failed writing " + path);
}

ActivationMap read_activation_csv(const std::string& path) {
    std::ifstream is = open_in(path);
    std::string line;
    if (!std::getline(is, line)) throw ValidationError(path + ": empty activation file");

    std::vector<double> times;
    std::vector<bool> act;
    std::string method, params;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 5)
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": expected 5 columns");
        const int node = static_cast<int>(parse_long(fields[0], path, line_no));
        if (node != static_cast<int>(times.size()))
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": nodes must appear in order");
        times.push_back(parse_double(fields[1], path, line_no));
        act.push_back(parse_long(fields[2], path, line_no) != 0);
        if (times.size() == 1) {
            method = fields[3];
            params = fields[4];
        }
    }
    ActivationMap map;
    map.times_ms = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<int>(times.size()));
    map.activated = std::move(act);
    map.method = std::move(method);
    map.params = std::move(params);
    return map;
}

void write_vtk_snapshot(const std::string& path, const Mesh2D& mesh,
                        const std::map<std::string, Eigen::VectorXd>& point_fields) {
    std::ofstream os = open_out(path);
    os << "# vtk DataFile Version 3.0\n";
    os << "ecgi snapshot\n";
    os << "ASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.node_count() << " double\n";
    for (int i = 0; i < mesh.node_count(); ++i) {
        os << format_double(mesh.node(i).x()) << ' ' << format_double(mesh.node(i).y())
           << " 0\n";
    }
    os << "CELLS " << mesh.triangle_count() << ' ' << 4 * mesh.triangle_count() << '\n';
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    os << "CELL_TYPES " << mesh.triangle_count() << '\n';
    for (int e = 0; e < mesh.triangle_count(); ++e) os << "5\n";
    os << "POINT_DATA " << mesh.node_count() << '\n';
    for (const auto& [name, values] : point_fields) {
        if (values.size() != mesh.node_count())
            throw ValidationError("VTK field '" + name + "' has wrong size");
        os << "SCALARS " << name << " double 1\n";
        os << "LOOKUP_TABLE default\n";
        for (int i = 0; i < mesh.node_count(); ++i) os << format_double(values[i]) << '\n';
    }
    if (!os) throw ValidationError("failed writing " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& doc) {
    std::ofstream os = open_out(path);
    os << doc.dump(2) << '\n';
    if (!os) throw ValidationError("failed writing " + path);
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is = open_in(path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("JSON parse error in " + path + ": " + e.what());
    }
}

} // namespace ecgi
