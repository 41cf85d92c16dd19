#pragma once

#include <cstddef>
#include <vector>

namespace forge::dpo {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough here that hand-rolled loops beat the
// overhead of pulling in a BLAS, and keep evaluation order fixed for
// bit-stable results.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }
};

// y = M x
inline void matvec(const Mat& m, const Vec& x, Vec& y) {
    y.assign(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            acc += row[c] * x[c];
        }
        y[r] = acc;
    }
}

// y += M x
inline void matvec_acc(const Mat& m, const Vec& x, Vec& y) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            acc += row[c] * x[c];
        }
        y[r] += acc;
    }
}

// y = Mᵀ x
inline void matvec_t(const Mat& m, const Vec& x, Vec& y) {
    y.assign(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) {
            y[c] += xr * row[c];
        }
    }
}

// y += s · Mᵀ x
inline void matvec_t_acc(const Mat& m, const Vec& x, Vec& y, double s) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        const double xr = s * x[r];
        for (std::size_t c = 0; c < m.cols; ++c) {
            y[c] += xr * row[c];
        }
    }
}

// y += s · x
inline void axpy(Vec& y, const Vec& x, double s) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += s * x[i];
    }
}

// M += s · u vᵀ
inline void add_outer(Mat& m, const Vec& u, const Vec& v, double s) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const double ur = s * u[r];
        for (std::size_t c = 0; c < m.cols; ++c) {
            row[c] += ur * v[c];
        }
    }
}

}  // namespace forge::dpo
