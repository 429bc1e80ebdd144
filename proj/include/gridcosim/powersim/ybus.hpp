#pragma once

#include <complex>

#include <Eigen/Sparse>

#include "gridcosim/powersim/grid_case.hpp"

namespace gridcosim::powersim {

using Complex = std::complex<double>;
using ComplexSparse = Eigen::SparseMatrix<Complex>;

/// Bus admittance matrix, indexed by bus position in the case.
struct AdmittanceMatrix {
    ComplexSparse y;

    Eigen::Index dimension() const noexcept { return y.rows(); }
};

/// The four pi-model entries a branch contributes to its two buses.
///
/// With series admittance y_s, tap t on the from side and total charging b:
/// ff = (y_s + jb/2)/t^2, ft = tf = -y_s/t, tt = y_s + jb/2.
template <typename Scalar>
struct BranchStamp {
    std::complex<Scalar> ff, ft, tf, tt;
};

template <typename Scalar = double>
BranchStamp<Scalar> branch_stamp(const Branch& br)
{
    using C = std::complex<Scalar>;
    const C ys = C(1) / C(Scalar(br.r), Scalar(br.x));
    const C half_b(0, Scalar(br.b_shunt) / 2);
    const Scalar t = Scalar(br.tap_ratio);
    return {(ys + half_b) / (t * t), -ys / t, -ys / t, ys + half_b};
}

/// Standard pi-model assembly over in-service branches.
AdmittanceMatrix build_ybus(const GridCase& grid);

/// Adds `sign` times the branch stamp into an assembled matrix.
void stamp_branch(ComplexSparse& y, const GridCase& grid, const Branch& br, double sign);

}  // namespace gridcosim::powersim
