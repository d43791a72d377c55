#pragma once

#include "handfit/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace handfit {

constexpr int kJointsPerHand = 16;  // wrist + 3 joints per finger
constexpr int kFingerCount = 5;     // thumb, index, middle, ring, pinky
constexpr int kShapeModes = 10;
constexpr int kShapeDof = 2 * kShapeModes;                  // 20, both hands
constexpr int kArticulationDof = 45;                        // 15 joints x axis-angle
constexpr int kPoseDofPerHand = 6 + kArticulationDof;       // 51
constexpr int kPoseDof = 2 * kPoseDofPerHand;               // 102
constexpr int kParamCount = kShapeDof + kPoseDof;           // 122
constexpr int kBonesPerHand = 16;                           // palm bone + 15 phalanges

// Fingers are indexed thumb=0 .. pinky=4 throughout.
enum class Finger : int { Thumb = 0, Index = 1, Middle = 2, Ring = 3, Pinky = 4 };

/// Where a collision Gaussian sits on its bone and how wide it is
/// relative to the bone length.
struct CollisionGaussianSpec {
  int bone = 0;
  double fraction = 0.5;
  double radius_coeff = 0.1;
};

/// Bone i runs from joint `start_joint` to either joint `end_joint` or, for
/// the distal phalanges, to the designated fingertip vertex of `end_finger`.
struct BoneSpec {
  int start_joint = 0;
  int end_joint = -1;
  int end_finger = -1;
};

/// Procedural two-hand surface model. The stored template is the right hand
/// in its rest pose (wrist joint at the origin, fingers along +y, palm
/// normal along z); the left hand is its x-mirror.
struct HandModel {
  Points template_vertices;  // N x 3, meters
  Triangles triangles;       // F x 3, outward-oriented

  MatX joint_regressor;   // 16 x N, rows sum to 1, nonnegative
  MatX skinning_weights;  // N x 16, rows sum to 1, nonnegative
  MatX shape_basis;       // N x (3*kShapeModes): columns [3m..3m+2] = mode m displacement
  Points match_features;  // N x 3, geodesic MDS embedding in [0,1]^3

  std::array<int, kJointsPerHand> joint_parent{};  // -1 for the wrist
  std::array<BoneSpec, kBonesPerHand> bones{};
  std::vector<CollisionGaussianSpec> gaussian_layout;    // one per bone
  std::array<int, kFingerCount> fingertip_vertex{};      // apex vertex per finger
  std::array<std::array<int, 3>, kFingerCount> finger_joints{};  // MCP, PIP, DIP

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int triangle_count() const { return static_cast<int>(triangles.rows()); }
};

/// Stacked parameters of both hands: beta = (beta_left, beta_right),
/// theta = (theta_left, theta_right) with per-hand layout
/// [global rotation axis-angle (3), global translation (3), articulation (45)].
struct HandParams {
  VecX beta = VecX::Zero(kShapeDof);
  VecX theta = VecX::Zero(kPoseDof);

  Eigen::VectorBlock<VecX> beta_h(Hand h) { return beta.segment(kShapeModes * hand_index(h), kShapeModes); }
  Eigen::VectorBlock<const VecX> beta_h(Hand h) const {
    return beta.segment(kShapeModes * hand_index(h), kShapeModes);
  }
  Eigen::VectorBlock<VecX> theta_h(Hand h) {
    return theta.segment(kPoseDofPerHand * hand_index(h), kPoseDofPerHand);
  }
  Eigen::VectorBlock<const VecX> theta_h(Hand h) const {
    return theta.segment(kPoseDofPerHand * hand_index(h), kPoseDofPerHand);
  }
  Eigen::VectorBlock<VecX> rotation(Hand h) { return theta.segment(kPoseDofPerHand * hand_index(h), 3); }
  Eigen::VectorBlock<const VecX> rotation(Hand h) const {
    return theta.segment(kPoseDofPerHand * hand_index(h), 3);
  }
  Eigen::VectorBlock<VecX> translation(Hand h) {
    return theta.segment(kPoseDofPerHand * hand_index(h) + 3, 3);
  }
  Eigen::VectorBlock<const VecX> translation(Hand h) const {
    return theta.segment(kPoseDofPerHand * hand_index(h) + 3, 3);
  }
  Eigen::VectorBlock<VecX> articulation(Hand h) {
    return theta.segment(kPoseDofPerHand * hand_index(h) + 6, kArticulationDof);
  }
  Eigen::VectorBlock<const VecX> articulation(Hand h) const {
    return theta.segment(kPoseDofPerHand * hand_index(h) + 6, kArticulationDof);
  }

  bool all_finite() const { return beta.allFinite() && theta.allFinite(); }

  VecX pack() const;
  static HandParams unpack(const VecX& packed);
};

/// Posed surface of both hands in the camera frame. Vertex rows [0, N) carry
/// the left hand, [N, 2N) the right hand.
struct PosedHands {
  Points vertices;  // 2N x 3
  std::array<Eigen::Matrix<double, kJointsPerHand, 3>, 2> joints;

  Vec3 root(Hand h) const { return joints[hand_index(h)].row(0); }
  Vec3 joint(Hand h, int j) const { return joints[hand_index(h)].row(j); }
};

inline Hand hand_of_vertex(int global_vertex, int vertices_per_hand) {
  return global_vertex < vertices_per_hand ? Hand::Left : Hand::Right;
}

/// Builds the canonical model. Construction is fully procedural and
/// deterministic; the seed is kept in the interface for forward
/// compatibility and does not alter the canonical template.
HandModel build_model(unsigned seed);

/// Rest-pose template of one hand after applying the shape blendshapes.
Points shaped_template(const HandModel& model, const Eigen::Ref<const VecX>& beta_h, Hand hand);

/// Joint positions regressed from a (shaped) rest template.
Eigen::Matrix<double, kJointsPerHand, 3> regress_joints(const HandModel& model, const Points& rest);

PosedHands pose_hands(const HandModel& model, const HandParams& params);

/// Wrist to middle-finger-MCP distance of the shaped rest template.
double palm_length(const HandModel& model, const Eigen::Ref<const VecX>& beta_h);

struct CollisionGaussian {
  Vec3 mean;
  double std_dev = 0.0;
  Hand hand = Hand::Left;
  int bone = 0;
};

std::vector<CollisionGaussian> collision_gaussians(const HandModel& model, const HandParams& params);

/// Axis-angle to rotation matrix (Rodrigues).
Mat3 axis_angle_to_matrix(const Vec3& axis_angle);

/// Area-weighted per-vertex normals of a posed two-hand surface, outward.
Points vertex_normals(const HandModel& model, const Points& posed_vertices);

void write_obj(const std::filesystem::path& path, const Points& vertices, const Triangles& triangles);
void write_obj_two_hands(const std::filesystem::path& path, const HandModel& model, const PosedHands& posed);

// Versioned binary blob in the same container style as the map format
// (magic + version + dtype-tagged sections).
void save_model(const std::filesystem::path& path, const HandModel& model);
HandModel load_model(const std::filesystem::path& path);

}  // namespace handfit
