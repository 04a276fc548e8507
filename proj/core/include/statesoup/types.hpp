#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace statesoup {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecF = Vec<float>;
using VecD = Vec<double>;

}  // namespace statesoup
