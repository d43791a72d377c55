#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace handfit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;

// Row-per-point storage for vertex sets and joint sets.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Pixels = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3>;

enum class Hand : int { Left = 0, Right = 1 };

inline Hand other_hand(Hand h) { return h == Hand::Left ? Hand::Right : Hand::Left; }
inline int hand_index(Hand h) { return static_cast<int>(h); }

// Per-pixel class labels of the segmentation raster.
enum class PixelLabel : std::uint8_t { Background = 0, Left = 1, Right = 2 };

inline PixelLabel hand_label(Hand h) {
  return h == Hand::Left ? PixelLabel::Left : PixelLabel::Right;
}

}  // namespace handfit
