#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace contrastad::data {

// thrown for any unreadable or malformed input file; the CLI maps it to exit 2
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// row-major (timesteps x features) matrix
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

enum class NormMode { MinMax, ZScore };

// per-feature affine transform v -> (v - offset) / span; span 0 means the
// feature was constant and maps to 0
struct NormStats {
    NormMode mode = NormMode::MinMax;
    std::vector<double> offset;
    std::vector<double> span;
};

struct Dataset {
    std::vector<std::string> feature_names;
    Matrix train;
    Matrix test;
    std::optional<std::vector<int>> test_labels;
    NormStats norm_stats;
};

// one sliding-window slice: values are (features x window) and the forecast
// target is the observation one step past the window
struct Window {
    std::size_t start = 0;
    std::size_t n_features = 0;
    std::size_t length = 0;
    std::vector<double> values;  // row-major, features x length
    std::vector<double> forecast_target;
};

struct CsvTable {
    std::vector<std::string> feature_names;
    Matrix values;
    std::optional<std::vector<int>> labels;
};

CsvTable load_csv(const std::string& path, const std::optional<std::string>& label_column = {});

NormStats fit_normalizer(const Matrix& train, NormMode mode = NormMode::MinMax);
Matrix apply_normalizer(const Matrix& m, const NormStats& stats);

std::vector<Window> make_windows(const Matrix& m, std::size_t window, std::size_t stride = 1);

// chronological split: first floor(ratio * rows) rows vs the remainder; both
// parts must be able to host at least one window of length `window`
std::pair<Matrix, Matrix> split_train_val(const Matrix& m, double ratio, std::size_t window);

void write_csv(const std::string& path, const std::vector<std::string>& feature_names,
               const Matrix& m, const std::vector<int>* labels = nullptr,
               const std::string& label_name = "label");

}  // namespace contrastad::data
