#pragma once

#include <cstddef>
#include <vector>

#include "hdms/errors.hpp"

namespace hdms {

// Dense row-major matrix. Vectors are stored as 1 x n.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, T(0)) {}

    T& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    T operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    T* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
    std::size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// C = A * B
template <class T>
void matmul(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    if (A.cols != B.rows) throw ShapeMismatch("matmul: inner dimensions differ");
    C = Mat<T>(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        T* ci = C.row(i);
        const T* ai = A.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const T aik = ai[k];
            const T* bk = B.row(k);
            for (int j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C += A^T * B (accumulating form used for weight gradients)
template <class T>
void matmul_tA_add(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    if (A.rows != B.rows) throw ShapeMismatch("matmul_tA: outer dimensions differ");
    if (C.rows != A.cols || C.cols != B.cols) throw ShapeMismatch("matmul_tA: bad output shape");
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        const T* bi = B.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const T aik = ai[k];
            T* ck = C.row(k);
            for (int j = 0; j < B.cols; ++j) ck[j] += aik * bi[j];
        }
    }
}

// C = A * B^T
template <class T>
void matmul_tB(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
    if (A.cols != B.cols) throw ShapeMismatch("matmul_tB: inner dimensions differ");
    C = Mat<T>(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i) {
        const T* ai = A.row(i);
        T* ci = C.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const T* bj = B.row(j);
            T acc = T(0);
            for (int k = 0; k < A.cols; ++k) acc += ai[k] * bj[k];
            ci[j] = acc;
        }
    }
}

template <class T>
void add_row_bias(Mat<T>& m, const Mat<T>& bias) {
    if (bias.rows != 1 || bias.cols != m.cols) throw ShapeMismatch("bias shape mismatch");
    for (int i = 0; i < m.rows; ++i) {
        T* mi = m.row(i);
        for (int j = 0; j < m.cols; ++j) mi[j] += bias.a[j];
    }
}

// bias_grad += column sums of dY
template <class T>
void add_col_sums(const Mat<T>& dy, Mat<T>& bias_grad) {
    for (int i = 0; i < dy.rows; ++i) {
        const T* di = dy.row(i);
        for (int j = 0; j < dy.cols; ++j) bias_grad.a[j] += di[j];
    }
}

template <class T>
void add_inplace(Mat<T>& dst, const Mat<T>& src) {
    if (!dst.same_shape(src)) throw ShapeMismatch("add_inplace shape mismatch");
    for (std::size_t i = 0; i < dst.a.size(); ++i) dst.a[i] += src.a[i];
}

} // namespace hdms
