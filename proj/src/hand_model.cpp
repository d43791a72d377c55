#include "handfit/hand_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace handfit {
namespace {

// Template measurements in meters (right hand, rest pose).
constexpr double kPalmHalfThickness = 0.010;
constexpr double kPalmYMax = 0.090;
constexpr double kSkinBlendRadius = 0.006;
constexpr double kTipDome = 0.003;

// Grid lines of the palm slab. The x grid is laid out so that each finger
// socket on the knuckle face occupies exactly one column; the y grid places
// the thumb socket on one column of the thumb-side face.
const std::vector<double>& palm_x_lines() {
  static const std::vector<double> x = {-0.045, -0.040, -0.026, -0.018, -0.004,
                                        0.004,  0.018,  0.026,  0.040,  0.045};
  return x;
}
const std::vector<double>& palm_y_lines() {
  static const std::vector<double> y = {0.0,   0.010, 0.020, 0.028, 0.044,
                                        0.054, 0.064, 0.072, 0.081, 0.090};
  return y;
}
const std::vector<double>& palm_z_lines() {
  static const std::vector<double> z = {-kPalmHalfThickness, -kPalmHalfThickness / 3.0,
                                        kPalmHalfThickness / 3.0, kPalmHalfThickness};
  return z;
}

// Knuckle-face socket column per non-thumb finger (index into x columns).
constexpr int kSocketColumn[4] = {1, 3, 5, 7};  // index, middle, ring, pinky
constexpr int kThumbSocketRow = 3;              // y column [0.028, 0.044]

struct FingerDims {
  double prox, mid, dist;  // phalanx lengths
  double base_radius;
};

const std::array<FingerDims, kFingerCount>& finger_dims() {
  static const std::array<FingerDims, kFingerCount> d = {{
      {0.040, 0.030, 0.024, 0.0080},  // thumb
      {0.036, 0.022, 0.019, 0.0066},  // index
      {0.040, 0.025, 0.021, 0.0068},  // middle
      {0.036, 0.023, 0.019, 0.0064},  // ring
      {0.030, 0.018, 0.016, 0.0056},  // pinky
  }};
  return d;
}

constexpr double kRingTaper[7] = {1.0, 0.97, 0.93, 0.89, 0.86, 0.81, 0.77};

struct VertexMeta {
  int finger = -1;       // -1 = palm slab
  double arc = 0.0;      // distance along the finger centerline
  Vec3 axis = Vec3::Zero();
  int socket_finger = -1;  // set on socket-ring vertices (which are palm vertices)
};

struct MeshBuilder {
  std::vector<Vec3> verts;
  std::vector<VertexMeta> meta;
  std::vector<std::array<int, 3>> tris;
  std::map<std::tuple<int, int, int>, int> grid;

  int grid_vertex(int xi, int yi, int zi) {
    const auto key = std::make_tuple(xi, yi, zi);
    auto it = grid.find(key);
    if (it != grid.end()) return it->second;
    const Vec3 p(palm_x_lines()[xi], palm_y_lines()[yi], palm_z_lines()[zi]);
    verts.push_back(p);
    meta.emplace_back();
    const int id = static_cast<int>(verts.size()) - 1;
    grid.emplace(key, id);
    return id;
  }

  int add_vertex(const Vec3& p, const VertexMeta& m) {
    verts.push_back(p);
    meta.push_back(m);
    return static_cast<int>(verts.size()) - 1;
  }

  void add_quad(int a, int b, int c, int d) {
    tris.push_back({a, b, c});
    tris.push_back({a, c, d});
  }
};

struct FingerFrame {
  Vec3 base;   // socket center
  Vec3 axis;   // unit centerline direction
  Vec3 p_hat;  // ring basis, (p_hat, q_hat, axis) right-handed
  Vec3 q_hat;
  std::array<double, 8> angles{};  // ring vertex angles, matching the socket rectangle
};

FingerFrame make_finger_frame(int finger) {
  FingerFrame fr;
  const auto& X = palm_x_lines();
  const auto& Y = palm_y_lines();
  const double t = kPalmHalfThickness;
  if (finger == 0) {
    const double ya = Y[kThumbSocketRow], yb = Y[kThumbSocketRow + 1];
    fr.base = Vec3(X.front(), 0.5 * (ya + yb), 0.0);
    fr.axis = Vec3(-0.77, 0.64, 0.0).normalized();
    fr.p_hat = Vec3(0, 0, 1);
    fr.q_hat = fr.axis.cross(fr.p_hat);  // keeps (p,q,axis) right-handed
    const double qw = 0.5 * (yb - ya) * fr.q_hat.y();
    const double q[8] = {qw, qw, qw, qw, -qw, -qw, -qw, -qw};
    const double p[8] = {t, t / 3, -t / 3, -t, -t, -t / 3, t / 3, t};
    for (int m = 0; m < 8; ++m) fr.angles[m] = std::atan2(q[m], p[m]);
  } else {
    const int col = kSocketColumn[finger - 1];
    const double xa = X[col], xb = X[col + 1];
    fr.base = Vec3(0.5 * (xa + xb), kPalmYMax, 0.0);
    fr.axis = Vec3(0, 1, 0);
    fr.p_hat = Vec3(0, 0, 1);
    fr.q_hat = Vec3(1, 0, 0);  // z cross x = y
    const double qw = 0.5 * (xb - xa);
    const double q[8] = {qw, qw, qw, qw, -qw, -qw, -qw, -qw};
    const double p[8] = {t, t / 3, -t / 3, -t, -t, -t / 3, t / 3, t};
    for (int m = 0; m < 8; ++m) fr.angles[m] = std::atan2(q[m], p[m]);
  }
  return fr;
}

// Socket boundary on the box, ordered by ascending ring angle so the first
// tube band can reuse these vertices directly.
std::array<int, 8> socket_ring(MeshBuilder& mb, int finger) {
  std::array<int, 8> ring{};
  if (finger == 0) {
    const int cj = kThumbSocketRow;
    const int yid[8] = {cj + 1, cj + 1, cj + 1, cj + 1, cj, cj, cj, cj};
    const int zid[8] = {3, 2, 1, 0, 0, 1, 2, 3};
    for (int m = 0; m < 8; ++m) ring[m] = mb.grid_vertex(0, yid[m], zid[m]);
  } else {
    const int ci = kSocketColumn[finger - 1];
    const int ny = static_cast<int>(palm_y_lines().size());
    const int xid[8] = {ci + 1, ci + 1, ci + 1, ci + 1, ci, ci, ci, ci};
    const int zid[8] = {3, 2, 1, 0, 0, 1, 2, 3};
    for (int m = 0; m < 8; ++m) ring[m] = mb.grid_vertex(xid[m], ny - 1, zid[m]);
  }
  return ring;
}

struct FingerRecord {
  std::array<int, 8> socket;         // base ring (palm vertices)
  std::array<std::array<int, 8>, 7> rings;  // station rings
  int apex = -1;
  std::array<double, 7> stations{};
  double total_len = 0.0;
};

FingerRecord build_finger(MeshBuilder& mb, int finger) {
  const FingerDims& dims = finger_dims()[finger];
  const FingerFrame fr = make_finger_frame(finger);
  FingerRecord rec;
  rec.socket = socket_ring(mb, finger);
  for (int m = 0; m < 8; ++m) {
    mb.meta[rec.socket[m]].socket_finger = finger;
  }
  const double lp = dims.prox, lm = dims.mid, ld = dims.dist;
  rec.stations = {0.35 * lp, 0.70 * lp, lp, lp + 0.5 * lm, lp + lm, lp + lm + 0.5 * ld,
                  lp + lm + 0.9 * ld};
  rec.total_len = lp + lm + ld;

  for (int s = 0; s < 7; ++s) {
    const double arc = rec.stations[s];
    const double radius = dims.base_radius * kRingTaper[s];
    const Vec3 center = fr.base + arc * fr.axis;
    for (int m = 0; m < 8; ++m) {
      const Vec3 p = center + radius * (std::cos(fr.angles[m]) * fr.p_hat +
                                        std::sin(fr.angles[m]) * fr.q_hat);
      VertexMeta meta;
      meta.finger = finger;
      meta.arc = arc;
      meta.axis = fr.axis;
      rec.rings[s][m] = mb.add_vertex(p, meta);
    }
  }
  {
    VertexMeta meta;
    meta.finger = finger;
    meta.arc = rec.total_len + kTipDome;
    meta.axis = fr.axis;
    rec.apex = mb.add_vertex(fr.base + (rec.total_len + kTipDome) * fr.axis, meta);
  }

  // Bands (outward winding: ring vertices are ordered by ascending angle in a
  // right-handed frame whose third axis points toward the tip).
  const auto band = [&mb](const std::array<int, 8>& a, const std::array<int, 8>& b) {
    for (int m = 0; m < 8; ++m) {
      const int n = (m + 1) % 8;
      mb.add_quad(a[m], a[n], b[n], b[m]);
    }
  };
  band(rec.socket, rec.rings[0]);
  for (int s = 0; s + 1 < 7; ++s) band(rec.rings[s], rec.rings[s + 1]);
  for (int m = 0; m < 8; ++m) {
    const int n = (m + 1) % 8;
    mb.tris.push_back({rec.rings[6][m], rec.rings[6][n], rec.apex});
  }
  return rec;
}

void build_palm_box(MeshBuilder& mb) {
  const int nx = static_cast<int>(palm_x_lines().size());
  const int ny = static_cast<int>(palm_y_lines().size());
  const int nz = static_cast<int>(palm_z_lines().size());

  // Top (z max) and bottom (z min) faces.
  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j) {
      mb.add_quad(mb.grid_vertex(i, j, nz - 1), mb.grid_vertex(i + 1, j, nz - 1),
                  mb.grid_vertex(i + 1, j + 1, nz - 1), mb.grid_vertex(i, j + 1, nz - 1));
      mb.add_quad(mb.grid_vertex(i, j, 0), mb.grid_vertex(i, j + 1, 0),
                  mb.grid_vertex(i + 1, j + 1, 0), mb.grid_vertex(i + 1, j, 0));
    }
  // Wrist face (y = 0, outward -y) and knuckle face (y max, outward +y,
  // finger socket columns left open).
  for (int i = 0; i + 1 < nx; ++i) {
    const bool socket =
        std::find(std::begin(kSocketColumn), std::end(kSocketColumn), i) != std::end(kSocketColumn);
    for (int k = 0; k + 1 < nz; ++k) {
      mb.add_quad(mb.grid_vertex(i, 0, k), mb.grid_vertex(i + 1, 0, k),
                  mb.grid_vertex(i + 1, 0, k + 1), mb.grid_vertex(i, 0, k + 1));
      if (!socket)
        mb.add_quad(mb.grid_vertex(i, ny - 1, k), mb.grid_vertex(i, ny - 1, k + 1),
                    mb.grid_vertex(i + 1, ny - 1, k + 1), mb.grid_vertex(i + 1, ny - 1, k));
    }
  }
  // Side faces (x min carries the thumb socket, outward -x; x max outward +x).
  for (int j = 0; j + 1 < ny; ++j) {
    const bool socket = j == kThumbSocketRow;
    for (int k = 0; k + 1 < nz; ++k) {
      if (!socket)
        mb.add_quad(mb.grid_vertex(0, j, k), mb.grid_vertex(0, j, k + 1),
                    mb.grid_vertex(0, j + 1, k + 1), mb.grid_vertex(0, j + 1, k));
      mb.add_quad(mb.grid_vertex(nx - 1, j, k), mb.grid_vertex(nx - 1, j + 1, k),
                  mb.grid_vertex(nx - 1, j + 1, k + 1), mb.grid_vertex(nx - 1, j, k + 1));
    }
  }
}

int joint_id(int finger, int k) { return 1 + 3 * finger + k; }  // k: 0=MCP 1=PIP 2=DIP

MatX compute_skinning(const MeshBuilder& mb) {
  const int n = static_cast<int>(mb.verts.size());
  MatX w = MatX::Zero(n, kJointsPerHand);
  for (int v = 0; v < n; ++v) {
    const VertexMeta& m = mb.meta[v];
    if (m.finger < 0 && m.socket_finger < 0) {
      w(v, 0) = 1.0;
      continue;
    }
    const int f = m.finger >= 0 ? m.finger : m.socket_finger;
    const FingerDims& dims = finger_dims()[f];
    const double s = m.finger >= 0 ? m.arc : 0.0;
    const double pip = dims.prox, dip = dims.prox + dims.mid;
    const double rho = kSkinBlendRadius;
    // Piecewise-linear blend along the centerline: wrist->MCP at the socket,
    // then MCP/PIP/DIP transitions of width 2*rho centered on each joint.
    double wr = 0, wm = 0, wp = 0, wd = 0;
    if (s < rho) {
      wr = 0.5 * (1.0 - s / rho);
      wm = 1.0 - wr;
    } else if (s < pip - rho) {
      wm = 1.0;
    } else if (s < pip + rho) {
      const double u = (s - (pip - rho)) / (2.0 * rho);
      wm = 1.0 - u;
      wp = u;
    } else if (s < dip - rho) {
      wp = 1.0;
    } else if (s < dip + rho) {
      const double u = (s - (dip - rho)) / (2.0 * rho);
      wp = 1.0 - u;
      wd = u;
    } else {
      wd = 1.0;
    }
    w(v, 0) = wr;
    w(v, joint_id(f, 0)) = wm;
    w(v, joint_id(f, 1)) = wp;
    w(v, joint_id(f, 2)) = wd;
    w.row(v) /= w.row(v).sum();
  }
  return w;
}

MatX compute_regressor(const MeshBuilder& mb, const std::array<FingerRecord, kFingerCount>& fingers) {
  const int n = static_cast<int>(mb.verts.size());
  MatX reg = MatX::Zero(kJointsPerHand, n);
  // Wrist: centroid of the wrist-face grid vertices.
  std::vector<int> wrist_ring;
  for (int v = 0; v < n; ++v)
    if (mb.meta[v].finger < 0 && std::abs(mb.verts[v].y()) < 1e-12) wrist_ring.push_back(v);
  for (int v : wrist_ring) reg(0, v) = 1.0 / wrist_ring.size();
  for (int f = 0; f < kFingerCount; ++f) {
    for (int m = 0; m < 8; ++m) {
      reg(joint_id(f, 0), fingers[f].socket[m]) = 1.0 / 8.0;
      reg(joint_id(f, 1), fingers[f].rings[2][m]) = 1.0 / 8.0;  // ring at s = prox length
      reg(joint_id(f, 2), fingers[f].rings[4][m]) = 1.0 / 8.0;  // ring at s = prox + mid
    }
  }
  return reg;
}

MatX compute_shape_basis(const MeshBuilder& mb) {
  const int n = static_cast<int>(mb.verts.size());
  MatX basis = MatX::Zero(n, 3 * kShapeModes);
  const auto set = [&basis](int v, int mode, const Vec3& d) {
    basis.block<1, 3>(v, 3 * mode) = d.transpose();
  };
  for (int v = 0; v < n; ++v) {
    const Vec3& p = mb.verts[v];
    const VertexMeta& m = mb.meta[v];
    set(v, 0, 0.06 * p);  // global scale (about the wrist at the origin)
    if (m.finger >= 0) {
      set(v, 1, 0.08 * m.arc * m.axis);              // common finger length
      set(v, 5 + m.finger, 0.10 * m.arc * m.axis);   // per-finger length
    }
    const double width_x = m.finger >= 0 ? make_finger_frame(m.finger).base.x() : p.x();
    set(v, 2, Vec3(0.10 * width_x, 0, 0));                          // palm width
    set(v, 3, Vec3(0, 0.08 * std::clamp(p.y(), 0.0, kPalmYMax), 0));  // palm length
    set(v, 4, Vec3(0, 0, 0.15 * p.z()));                            // thickness
  }
  return basis;
}

// Geodesic distances on the edge graph, one Dijkstra per source.
MatX geodesic_matrix(const Points& verts, const Triangles& tris) {
  const int n = static_cast<int>(verts.rows());
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  std::map<std::pair<int, int>, bool> seen;
  for (int t = 0; t < tris.rows(); ++t) {
    for (int e = 0; e < 3; ++e) {
      int a = tris(t, e), b = tris(t, (e + 1) % 3);
      if (a > b) std::swap(a, b);
      if (seen.emplace(std::make_pair(a, b), true).second) {
        const double len = (verts.row(a) - verts.row(b)).norm();
        adj[a].emplace_back(b, len);
        adj[b].emplace_back(a, len);
      }
    }
  }
  MatX dist(n, n);
  std::vector<double> d(n);
  using Entry = std::pair<double, int>;
  for (int src = 0; src < n; ++src) {
    std::fill(d.begin(), d.end(), std::numeric_limits<double>::infinity());
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
    d[src] = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      const auto [dist_u, u] = pq.top();
      pq.pop();
      if (dist_u > d[u]) continue;
      for (const auto& [v, len] : adj[u]) {
        const double cand = dist_u + len;
        if (cand < d[v]) {
          d[v] = cand;
          pq.emplace(cand, v);
        }
      }
    }
    for (int v = 0; v < n; ++v) dist(src, v) = d[v];
  }
  if (!dist.allFinite()) throw std::logic_error("hand model mesh is not connected");
  return dist;
}

// Classical multidimensional scaling to 3 dimensions, min-max normalized.
Points mds_embedding(const MatX& geo) {
  const int n = static_cast<int>(geo.rows());
  const MatX d2 = geo.array().square();
  const VecX row_mean = d2.rowwise().mean();
  const double total_mean = d2.mean();
  // b = -0.5 * J d2 J with J = I - 11^T/n.
  MatX b = d2;
  b.colwise() -= row_mean;
  b.rowwise() -= row_mean.transpose();
  b.array() += total_mean;
  b *= -0.5;
  Eigen::SelfAdjointEigenSolver<MatX> eig(b);
  if (eig.info() != Eigen::Success) throw std::runtime_error("MDS eigendecomposition failed");
  Points coord(n, 3);
  for (int k = 0; k < 3; ++k) {
    const int idx = n - 1 - k;  // eigenvalues ascend
    const double lambda = std::max(eig.eigenvalues()(idx), 0.0);
    VecX axis = eig.eigenvectors().col(idx) * std::sqrt(lambda);
    int arg_max = 0;
    axis.cwiseAbs().maxCoeff(&arg_max);
    if (axis(arg_max) < 0) axis = -axis;  // deterministic sign
    const double lo = axis.minCoeff(), hi = axis.maxCoeff();
    coord.col(k) = (hi > lo) ? ((axis.array() - lo) / (hi - lo)).matrix() : VecX::Zero(n);
  }
  return coord;
}

struct RigidTransform {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return rot * p + trans; }
};

}  // namespace

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) {
    // Second-order expansion keeps the map smooth near zero for finite
    // differencing.
    Mat3 k;
    k << 0, -aa.z(), aa.y(), aa.z(), 0, -aa.x(), -aa.y(), aa.x(), 0;
    return Mat3::Identity() + k + 0.5 * (k * k);
  }
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

VecX HandParams::pack() const {
  VecX packed(kParamCount);
  packed.head(kShapeDof) = beta;
  packed.tail(kPoseDof) = theta;
  return packed;
}

HandParams HandParams::unpack(const VecX& packed) {
  if (packed.size() != kParamCount) throw std::invalid_argument("parameter vector must have 122 entries");
  HandParams p;
  p.beta = packed.head(kShapeDof);
  p.theta = packed.tail(kPoseDof);
  return p;
}

HandModel build_model(unsigned /*seed*/) {
  MeshBuilder mb;
  build_palm_box(mb);
  std::array<FingerRecord, kFingerCount> fingers;
  for (int f = 0; f < kFingerCount; ++f) fingers[f] = build_finger(mb, f);

  HandModel model;
  const int n = static_cast<int>(mb.verts.size());
  model.template_vertices.resize(n, 3);
  for (int v = 0; v < n; ++v) model.template_vertices.row(v) = mb.verts[v].transpose();
  model.triangles.resize(static_cast<int>(mb.tris.size()), 3);
  for (size_t t = 0; t < mb.tris.size(); ++t)
    model.triangles.row(static_cast<int>(t)) << mb.tris[t][0], mb.tris[t][1], mb.tris[t][2];

  model.skinning_weights = compute_skinning(mb);
  model.joint_regressor = compute_regressor(mb, fingers);
  model.shape_basis = compute_shape_basis(mb);
  model.match_features = mds_embedding(geodesic_matrix(model.template_vertices, model.triangles));

  model.joint_parent[0] = -1;
  for (int f = 0; f < kFingerCount; ++f) {
    model.joint_parent[joint_id(f, 0)] = 0;
    model.joint_parent[joint_id(f, 1)] = joint_id(f, 0);
    model.joint_parent[joint_id(f, 2)] = joint_id(f, 1);
    model.fingertip_vertex[f] = fingers[f].apex;
    model.finger_joints[f] = {joint_id(f, 0), joint_id(f, 1), joint_id(f, 2)};
  }

  model.bones[0] = {0, joint_id(2, 0), -1};  // wrist -> middle MCP
  for (int f = 0; f < kFingerCount; ++f) {
    model.bones[joint_id(f, 0)] = {joint_id(f, 0), joint_id(f, 1), -1};
    model.bones[joint_id(f, 1)] = {joint_id(f, 1), joint_id(f, 2), -1};
    model.bones[joint_id(f, 2)] = {joint_id(f, 2), -1, f};
  }
  model.gaussian_layout.resize(kBonesPerHand);
  for (int b = 0; b < kBonesPerHand; ++b) {
    double coeff = 0.050;  // palm bone
    if (b > 0) {
      const int k = (b - 1) % 3;
      coeff = k == 0 ? 0.060 : (k == 1 ? 0.095 : 0.110);
    }
    model.gaussian_layout[b] = {b, 0.5, coeff};
  }
  return model;
}

Points shaped_template(const HandModel& model, const Eigen::Ref<const VecX>& beta_h, Hand hand) {
  if (beta_h.size() != kShapeModes) throw std::invalid_argument("beta_h must have 10 entries");
  Points rest = model.template_vertices;
  for (int m = 0; m < kShapeModes; ++m)
    rest += beta_h(m) * model.shape_basis.middleCols(3 * m, 3);
  if (hand == Hand::Left) rest.col(0) = -rest.col(0);
  return rest;
}

Eigen::Matrix<double, kJointsPerHand, 3> regress_joints(const HandModel& model, const Points& rest) {
  return model.joint_regressor * rest;
}

PosedHands pose_hands(const HandModel& model, const HandParams& params) {
  if (!params.all_finite()) throw std::invalid_argument("pose_hands: non-finite parameters");
  const int n = model.vertex_count();
  PosedHands out;
  out.vertices.resize(2 * n, 3);

  for (Hand hand : {Hand::Left, Hand::Right}) {
    const int h = hand_index(hand);
    const Points rest = shaped_template(model, params.beta_h(hand), hand);
    const Eigen::Matrix<double, kJointsPerHand, 3> joints_rest = regress_joints(model, rest);
    const auto artic = params.articulation(hand);

    std::array<RigidTransform, kJointsPerHand> global;
    global[0].rot = Mat3::Identity();
    global[0].trans = joints_rest.row(0);
    for (int j = 1; j < kJointsPerHand; ++j) {
      const int parent = model.joint_parent[j];
      const Mat3 local = axis_angle_to_matrix(artic.segment<3>(3 * (j - 1)));
      const Vec3 offset = joints_rest.row(j) - joints_rest.row(parent);
      global[j].rot = global[parent].rot * local;
      global[j].trans = global[parent].rot * offset + global[parent].trans;
    }

    const Mat3 rg = axis_angle_to_matrix(params.rotation(hand));
    const Vec3 tg = params.translation(hand);

    Eigen::Matrix<double, kJointsPerHand, 3>& joints_out = out.joints[h];
    for (int j = 0; j < kJointsPerHand; ++j)
      joints_out.row(j) = (rg * global[j].trans + tg).transpose();

    // Linear blend skinning relative to the rest joints, then the global rigid.
    std::array<Mat3, kJointsPerHand> rot;
    std::array<Vec3, kJointsPerHand> trans;
    for (int j = 0; j < kJointsPerHand; ++j) {
      rot[j] = global[j].rot;
      trans[j] = global[j].trans - global[j].rot * Vec3(joints_rest.row(j));
    }
    for (int v = 0; v < n; ++v) {
      const Vec3 p = rest.row(v);
      Vec3 acc = Vec3::Zero();
      for (int j = 0; j < kJointsPerHand; ++j) {
        const double w = model.skinning_weights(v, j);
        if (w != 0.0) acc += w * (rot[j] * p + trans[j]);
      }
      out.vertices.row(h * n + v) = (rg * acc + tg).transpose();
    }
  }
  return out;
}

double palm_length(const HandModel& model, const Eigen::Ref<const VecX>& beta_h) {
  const Points rest = shaped_template(model, beta_h, Hand::Right);
  const auto joints = regress_joints(model, rest);
  return (joints.row(model.bones[0].end_joint) - joints.row(0)).norm();
}

std::vector<CollisionGaussian> collision_gaussians(const HandModel& model, const HandParams& params) {
  const PosedHands posed = pose_hands(model, params);
  const int n = model.vertex_count();
  std::vector<CollisionGaussian> out;
  out.reserve(2 * kBonesPerHand);
  for (Hand hand : {Hand::Left, Hand::Right}) {
    const int h = hand_index(hand);
    for (const CollisionGaussianSpec& spec : model.gaussian_layout) {
      const BoneSpec& bone = model.bones[spec.bone];
      const Vec3 p0 = posed.joint(hand, bone.start_joint);
      const Vec3 p1 = bone.end_joint >= 0
                          ? posed.joint(hand, bone.end_joint)
                          : Vec3(posed.vertices.row(h * n + model.fingertip_vertex[bone.end_finger]));
      CollisionGaussian g;
      g.mean = p0 + spec.fraction * (p1 - p0);
      g.std_dev = spec.radius_coeff * (p1 - p0).norm();
      g.hand = hand;
      g.bone = spec.bone;
      out.push_back(g);
    }
  }
  return out;
}

Points vertex_normals(const HandModel& model, const Points& posed_vertices) {
  const int n = model.vertex_count();
  if (posed_vertices.rows() != 2 * n)
    throw std::invalid_argument("vertex_normals: expected a two-hand vertex set");
  Points normals = Points::Zero(2 * n, 3);
  for (int h = 0; h < 2; ++h) {
    const int off = h * n;
    const bool mirrored = h == hand_index(Hand::Left);
    for (int t = 0; t < model.triangles.rows(); ++t) {
      int a = model.triangles(t, 0), b = model.triangles(t, 1), c = model.triangles(t, 2);
      if (mirrored) std::swap(b, c);  // mirroring flips orientation
      const Vec3 pa = posed_vertices.row(off + a);
      const Vec3 area = (Vec3(posed_vertices.row(off + b)) - pa)
                            .cross(Vec3(posed_vertices.row(off + c)) - pa);
      normals.row(off + a) += area.transpose();
      normals.row(off + b) += area.transpose();
      normals.row(off + c) += area.transpose();
    }
  }
  for (int v = 0; v < normals.rows(); ++v) {
    const double len = normals.row(v).norm();
    if (len > 1e-20) normals.row(v) /= len;
  }
  return normals;
}

void write_obj(const std::filesystem::path& path, const Points& vertices, const Triangles& triangles) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open OBJ for writing: " + path.string());
  char line[128];
  for (int v = 0; v < vertices.rows(); ++v) {
    std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", vertices(v, 0), vertices(v, 1),
                  vertices(v, 2));
    os << line;
  }
  for (int t = 0; t < triangles.rows(); ++t) {
    std::snprintf(line, sizeof line, "f %d %d %d\n", triangles(t, 0) + 1, triangles(t, 1) + 1,
                  triangles(t, 2) + 1);
    os << line;
  }
}

void write_obj_two_hands(const std::filesystem::path& path, const HandModel& model,
                         const PosedHands& posed) {
  const int n = model.vertex_count();
  Triangles tris(2 * model.triangle_count(), 3);
  for (int t = 0; t < model.triangle_count(); ++t) {
    tris.row(t) << model.triangles(t, 0), model.triangles(t, 2), model.triangles(t, 1);
    tris.row(model.triangle_count() + t) = model.triangles.row(t).array() + n;
  }
  write_obj(path, posed.vertices, tris);
}

namespace {

constexpr char kMagic[4] = {'R', '2', 'H', 'M'};
constexpr std::uint32_t kModelVersion = 2;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw std::runtime_error("model blob write failed");
}

std::uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw std::runtime_error("truncated model blob");
  return b[0] | b[1] << 8 | b[2] << 16 | std::uint32_t(b[3]) << 24;
}

void write_section_f64(std::FILE* f, const std::string& name, const MatX& m) {
  const std::uint8_t len = static_cast<std::uint8_t>(name.size());
  std::fwrite(&len, 1, 1, f);
  std::fwrite(name.data(), 1, name.size(), f);
  put_u32(f, static_cast<std::uint32_t>(m.rows()));
  put_u32(f, static_cast<std::uint32_t>(m.cols()));
  const std::uint8_t dtype = 3;
  std::fwrite(&dtype, 1, 1, f);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::fwrite(&v, sizeof(double), 1, f);
    }
}

void write_section_i32(std::FILE* f, const std::string& name, const Eigen::MatrixXi& m) {
  const std::uint8_t len = static_cast<std::uint8_t>(name.size());
  std::fwrite(&len, 1, 1, f);
  std::fwrite(name.data(), 1, name.size(), f);
  put_u32(f, static_cast<std::uint32_t>(m.rows()));
  put_u32(f, static_cast<std::uint32_t>(m.cols()));
  const std::uint8_t dtype = 2;
  std::fwrite(&dtype, 1, 1, f);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) {
      const std::int32_t v = m(r, c);
      std::fwrite(&v, sizeof(std::int32_t), 1, f);
    }
}

struct Section {
  MatX f64;
  Eigen::MatrixXi i32;
  std::uint8_t dtype = 0;
};

std::map<std::string, Section> read_sections(std::FILE* f) {
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("model blob: bad magic");
  if (get_u32(f) != kModelVersion) throw std::runtime_error("model blob: unsupported version");
  const std::uint32_t count = get_u32(f);
  std::map<std::string, Section> sections;
  for (std::uint32_t s = 0; s < count; ++s) {
    std::uint8_t len = 0;
    if (std::fread(&len, 1, 1, f) != 1) throw std::runtime_error("truncated model blob");
    std::string name(len, '\0');
    if (std::fread(name.data(), 1, len, f) != len) throw std::runtime_error("truncated model blob");
    const int rows = static_cast<int>(get_u32(f));
    const int cols = static_cast<int>(get_u32(f));
    std::uint8_t dtype = 0;
    if (std::fread(&dtype, 1, 1, f) != 1) throw std::runtime_error("truncated model blob");
    Section sec;
    sec.dtype = dtype;
    if (dtype == 3) {
      sec.f64.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          double v;
          if (std::fread(&v, sizeof v, 1, f) != 1) throw std::runtime_error("truncated model blob");
          sec.f64(r, c) = v;
        }
    } else if (dtype == 2) {
      sec.i32.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
          std::int32_t v;
          if (std::fread(&v, sizeof v, 1, f) != 1) throw std::runtime_error("truncated model blob");
          sec.i32(r, c) = v;
        }
    } else {
      throw std::runtime_error("model blob: unknown section dtype");
    }
    sections.emplace(std::move(name), std::move(sec));
  }
  return sections;
}

}  // namespace

void save_model(const std::filesystem::path& path, const HandModel& model) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open model blob for writing: " + path.string());
  std::fwrite(kMagic, 1, 4, f.get());
  put_u32(f.get(), kModelVersion);
  put_u32(f.get(), 11);

  write_section_f64(f.get(), "vertices", model.template_vertices);
  write_section_i32(f.get(), "triangles", model.triangles);
  write_section_f64(f.get(), "regressor", model.joint_regressor);
  write_section_f64(f.get(), "skinning", model.skinning_weights);
  write_section_f64(f.get(), "shape_basis", model.shape_basis);
  write_section_f64(f.get(), "features", model.match_features);

  Eigen::MatrixXi parents(kJointsPerHand, 1);
  for (int j = 0; j < kJointsPerHand; ++j) parents(j, 0) = model.joint_parent[j];
  write_section_i32(f.get(), "parents", parents);

  Eigen::MatrixXi bones(kBonesPerHand, 3);
  for (int b = 0; b < kBonesPerHand; ++b)
    bones.row(b) << model.bones[b].start_joint, model.bones[b].end_joint, model.bones[b].end_finger;
  write_section_i32(f.get(), "bones", bones);

  MatX gauss(kBonesPerHand, 3);
  for (int b = 0; b < kBonesPerHand; ++b)
    gauss.row(b) << model.gaussian_layout[b].bone, model.gaussian_layout[b].fraction,
        model.gaussian_layout[b].radius_coeff;
  write_section_f64(f.get(), "gaussians", gauss);

  Eigen::MatrixXi tips(kFingerCount, 1);
  for (int k = 0; k < kFingerCount; ++k) tips(k, 0) = model.fingertip_vertex[k];
  write_section_i32(f.get(), "fingertips", tips);

  Eigen::MatrixXi fj(kFingerCount, 3);
  for (int k = 0; k < kFingerCount; ++k)
    fj.row(k) << model.finger_joints[k][0], model.finger_joints[k][1], model.finger_joints[k][2];
  write_section_i32(f.get(), "finger_joints", fj);
}

HandModel load_model(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open model blob: " + path.string());
  auto sections = read_sections(f.get());
  const auto need = [&sections](const std::string& name) -> Section& {
    auto it = sections.find(name);
    if (it == sections.end()) throw std::runtime_error("model blob: missing section " + name);
    return it->second;
  };
  HandModel model;
  model.template_vertices = need("vertices").f64;
  model.triangles = need("triangles").i32;
  model.joint_regressor = need("regressor").f64;
  model.skinning_weights = need("skinning").f64;
  model.shape_basis = need("shape_basis").f64;
  model.match_features = need("features").f64;
  const Eigen::MatrixXi parents = need("parents").i32;
  for (int j = 0; j < kJointsPerHand; ++j) model.joint_parent[j] = parents(j, 0);
  const Eigen::MatrixXi bones = need("bones").i32;
  for (int b = 0; b < kBonesPerHand; ++b)
    model.bones[b] = {bones(b, 0), bones(b, 1), bones(b, 2)};
  const MatX gauss = need("gaussians").f64;
  model.gaussian_layout.resize(kBonesPerHand);
  for (int b = 0; b < kBonesPerHand; ++b)
    model.gaussian_layout[b] = {static_cast<int>(gauss(b, 0)), gauss(b, 1), gauss(b, 2)};
  const Eigen::MatrixXi tips = need("fingertips").i32;
  for (int k = 0; k < kFingerCount; ++k) model.fingertip_vertex[k] = tips(k, 0);
  const Eigen::MatrixXi fj = need("finger_joints").i32;
  for (int k = 0; k < kFingerCount; ++k)
    model.finger_joints[k] = {fj(k, 0), fj(k, 1), fj(k, 2)};
  return model;
}

}  // namespace handfit
