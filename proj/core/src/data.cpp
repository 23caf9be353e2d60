#include "contrastad/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace contrastad::data {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value))
        throw DataError("non-numeric cell '" + cell + "' at row " + std::to_string(row) +
                        ", column " + std::to_string(col + 1));
    return value;
}

}  // namespace

CsvTable load_csv(const std::string& path, const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    strip_cr(line);
    std::vector<std::string> header = split_line(line);
    if (header.empty()) throw DataError("missing header row: " + path);

    std::ptrdiff_t label_idx = -1;
    if (label_column) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == *label_column) label_idx = static_cast<std::ptrdiff_t>(i);
        if (label_idx < 0) throw DataError("unknown label column '" + *label_column + "' in " + path);
    }

    CsvTable table;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (static_cast<std::ptrdiff_t>(i) != label_idx) table.feature_names.push_back(header[i]);
    if (label_column) table.labels.emplace();

    std::vector<double> values;
    std::size_t n_rows = 0;
    // data rows are 1-based in error messages, counting from the first row
    // after the header
    while (std::getline(in, line)) {
        strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        ++n_rows;
        if (cells.size() != header.size())
            throw DataError("ragged row " + std::to_string(n_rows) + " in " + path + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = parse_cell(cells[c], n_rows, c);
            if (static_cast<std::ptrdiff_t>(c) == label_idx) {
                if (v != 0.0 && v != 1.0)
                    throw DataError("label column value " + cells[c] + " at row " +
                                    std::to_string(n_rows) + " is not 0/1");
                table.labels->push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
        }
    }
    if (n_rows == 0) throw DataError("no data rows in " + path);

    table.values.rows = n_rows;
    table.values.cols = table.feature_names.size();
    table.values.v = std::move(values);
    return table;
}

NormStats fit_normalizer(const Matrix& train, NormMode mode) {
    NormStats stats;
    stats.mode = mode;
    stats.offset.assign(train.cols, 0.0);
    stats.span.assign(train.cols, 0.0);
    for (std::size_t c = 0; c < train.cols; ++c) {
        if (mode == NormMode::MinMax) {
            double lo = train.at(0, c), hi = train.at(0, c);
            for (std::size_t r = 1; r < train.rows; ++r) {
                lo = std::min(lo, train.at(r, c));
                hi = std::max(hi, train.at(r, c));
            }
            stats.offset[c] = lo;
            stats.span[c] = hi - lo;
        } else {
            double mean = 0.0;
            for (std::size_t r = 0; r < train.rows; ++r) mean += train.at(r, c);
            mean /= static_cast<double>(train.rows);
            double var = 0.0;
            for (std::size_t r = 0; r < train.rows; ++r) {
                double d = train.at(r, c) - mean;
                var += d * d;
            }
            var /= static_cast<double>(train.rows);
            stats.offset[c] = mean;
            stats.span[c] = std::sqrt(var);
        }
    }
    return stats;
}

Matrix apply_normalizer(const Matrix& m, const NormStats& stats) {
    if (m.cols != stats.offset.size())
        throw DataError("normalizer fitted for " + std::to_string(stats.offset.size()) +
                        " features, matrix has " + std::to_string(m.cols));
    Matrix out(m.rows, m.cols);
    for (std::size_t c = 0; c < m.cols; ++c) {
        double off = stats.offset[c], span = stats.span[c];
        for (std::size_t r = 0; r < m.rows; ++r)
            out.at(r, c) = span > 0.0 ? (m.at(r, c) - off) / span : 0.0;
    }
    return out;
}

std::vector<Window> make_windows(const Matrix& m, std::size_t window, std::size_t stride) {
    if (window < 2) throw DataError("window length must be >= 2");
    if (stride < 1) throw DataError("stride must be >= 1");
    if (m.rows < window + 1)
        throw DataError("series too short: " + std::to_string(m.rows) + " rows for window " +
                        std::to_string(window) + " (need window + 1)");
    std::vector<Window> out;
    for (std::size_t start = 0; start + window < m.rows; start += stride) {
        Window w;
        w.start = start;
        w.n_features = m.cols;
        w.length = window;
        w.values.resize(m.cols * window);
        for (std::size_t f = 0; f < m.cols; ++f)
            for (std::size_t t = 0; t < window; ++t) w.values[f * window + t] = m.at(start + t, f);
        w.forecast_target.resize(m.cols);
        for (std::size_t f = 0; f < m.cols; ++f) w.forecast_target[f] = m.at(start + window, f);
        out.push_back(std::move(w));
    }
    return out;
}

std::pair<Matrix, Matrix> split_train_val(const Matrix& m, double ratio, std::size_t window) {
    if (ratio <= 0.0 || ratio >= 1.0) throw DataError("split ratio must be in (0, 1)");
    std::size_t head = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(m.rows)));
    std::size_t tail = m.rows - head;
    if (head < window + 1 || tail < window + 1)
        throw DataError("split parts of " + std::to_string(head) + "/" + std::to_string(tail) +
                        " rows cannot host a window of " + std::to_string(window) + " + target");
    Matrix a(head, m.cols), b(tail, m.cols);
    std::copy(m.v.begin(), m.v.begin() + static_cast<std::ptrdiff_t>(head * m.cols), a.v.begin());
    std::copy(m.v.begin() + static_cast<std::ptrdiff_t>(head * m.cols), m.v.end(), b.v.begin());
    return {std::move(a), std::move(b)};
}

void write_csv(const std::string& path, const std::vector<std::string>& feature_names,
               const Matrix& m, const std::vector<int>* labels, const std::string& label_name) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (std::size_t c = 0; c < feature_names.size(); ++c) {
        if (c) out << ',';
        out << feature_names[c];
    }
    if (labels) out << ',' << label_name;
    out << '\n';
    char buf[64];
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (c) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(r, c));
            out << buf;
        }
        if (labels) out << ',' << (*labels)[r];
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace contrastad::data
