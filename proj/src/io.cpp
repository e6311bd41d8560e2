#include "kthin/io.hpp"

#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace kthin {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    const bool csv = line.find(',') != std::string::npos;
    auto flush = [&]() {
        // Trim surrounding whitespace.
        std::size_t b = 0, e = cur.size();
        while (b < e && std::isspace(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b || csv) fields.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (const char c : line) {
        if (csv ? (c == ',') : std::isspace(static_cast<unsigned char>(c)) != 0) {
            if (csv || !cur.empty()) flush();
        } else {
            cur += c;
        }
    }
    if (csv || !cur.empty()) flush();
    return fields;
}

bool parse_number(const std::string& token, double* out) {
    if (token.empty()) return false;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || errno == ERANGE) return false;
    *out = v;
    return true;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

PointSet read_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open points file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool first_content_line = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        // Skip blank and comment lines.
        std::size_t b = 0;
        while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
        if (b == line.size() || line[b] == '#') continue;

        const std::vector<std::string> fields = split_fields(line);
        std::vector<double> row;
        row.reserve(fields.size());
        bool all_numeric = true;
        for (const std::string& f : fields) {
            double v = 0.0;
            if (!parse_number(f, &v)) {
                all_numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!all_numeric) {
            if (first_content_line) {
                first_content_line = false;  // header row
                continue;
            }
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": non-numeric field");
        }
        first_content_line = false;
        if (row.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty row");
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": inconsistent field count");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": no data rows");
    PointMatrix pts(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    PointSet out(std::move(pts));
    out.require_finite();
    return out;
}

void write_points(const std::string& path, const PointSet& pts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    for (Eigen::Index i = 0; i < pts.size(); ++i) {
        for (Eigen::Index j = 0; j < pts.dim(); ++j) {
            if (j > 0) out << ',';
            out << format_double(pts(i, j));
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_coreset(const std::string& path, const Coreset& coreset,
                   const std::string& meta) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "# meta: " << meta << '\n';
    for (const Eigen::Index idx : coreset.indices) out << idx << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << "method,n,coreset_size,mean_mmd,stderr_mmd,wall_time_s\n";
    for (const ResultRow& r : rows) {
        out << r.method << ',' << r.n << ',' << r.coreset_size << ','
            << format_double(r.mean_mmd) << ',' << format_double(r.stderr_mmd) << ','
            << format_double(r.wall_time_s) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace kthin
