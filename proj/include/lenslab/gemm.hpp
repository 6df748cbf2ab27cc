#pragma once

// Thin Eigen-backed matrix products over the flat Mat<S> storage.
// Single-threaded; all model math funnels through these three entry points.

#include <stdexcept>

#include <Eigen/Core>

#include "lenslab/common.hpp"

namespace lenslab {

namespace detail {

template <typename S>
using EMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using CEMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
void shape_out(Mat<S>& c, int rows, int cols, bool accumulate) {
    if (accumulate) {
        if (c.rows != rows || c.cols != cols)
            throw std::invalid_argument("gemm: accumulate target has wrong shape");
    } else {
        c.rows = rows;
        c.cols = cols;
        c.data.resize(static_cast<size_t>(rows) * cols);
    }
}

}  // namespace detail

// C = A * B  (C += when accumulate)
template <typename S>
void gemm(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    if (a.cols != b.rows) throw std::invalid_argument("gemm: inner dimensions differ");
    detail::shape_out(c, a.rows, b.cols, accumulate);
    detail::CEMap<S> ma(a.data.data(), a.rows, a.cols);
    detail::CEMap<S> mb(b.data.data(), b.rows, b.cols);
    detail::EMap<S> mc(c.data.data(), c.rows, c.cols);
    if (accumulate)
        mc.noalias() += ma * mb;
    else
        mc.noalias() = ma * mb;
}

// C = A * B^T
template <typename S>
void gemm_nt(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    if (a.cols != b.cols) throw std::invalid_argument("gemm_nt: inner dimensions differ");
    detail::shape_out(c, a.rows, b.rows, accumulate);
    detail::CEMap<S> ma(a.data.data(), a.rows, a.cols);
    detail::CEMap<S> mb(b.data.data(), b.rows, b.cols);
    detail::EMap<S> mc(c.data.data(), c.rows, c.cols);
    if (accumulate)
        mc.noalias() += ma * mb.transpose();
    else
        mc.noalias() = ma * mb.transpose();
}

// C = A^T * B
template <typename S>
void gemm_tn(const Mat<S>& a, const Mat<S>& b, Mat<S>& c, bool accumulate = false) {
    if (a.rows != b.rows) throw std::invalid_argument("gemm_tn: inner dimensions differ");
    detail::shape_out(c, a.cols, b.cols, accumulate);
    detail::CEMap<S> ma(a.data.data(), a.rows, a.cols);
    detail::CEMap<S> mb(b.data.data(), b.rows, b.cols);
    detail::EMap<S> mc(c.data.data(), c.rows, c.cols);
    if (accumulate)
        mc.noalias() += ma.transpose() * mb;
    else
        mc.noalias() = ma.transpose() * mb;
}

}  // namespace lenslab
