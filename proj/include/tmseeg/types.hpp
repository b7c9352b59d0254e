#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace tmseeg {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <class Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;
using RowVectorXd = RowVec<double>;
using Vector3d = Vec3<double>;

using ConstRefMat = const Eigen::Ref<const MatrixXd>&;
using ConstRefVec = const Eigen::Ref<const VectorXd>&;

using Index = Eigen::Index;

/// Neighbor lists over sources; entry i lists the sources adjacent to i.
using Adjacency = std::vector<std::vector<Index>>;

}  // namespace tmseeg
