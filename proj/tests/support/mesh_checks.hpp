#pragma once

#include "handfit/types.hpp"

#include <map>
#include <set>
#include <utility>
#include <vector>

namespace handfit::testing {

struct MeshReport {
  bool closed = true;        // every directed edge matched by its reverse
  bool manifold = true;      // no edge shared by more than two triangles
  bool connected = true;
  int euler = 0;             // V - E + F
  double signed_volume = 0;  // positive for outward orientation
};

inline MeshReport check_mesh(const Points& verts, const Triangles& tris) {
  MeshReport rep;
  std::map<std::pair<int, int>, int> directed;
  for (int t = 0; t < tris.rows(); ++t) {
    for (int e = 0; e < 3; ++e) {
      const int a = tris(t, e), b = tris(t, (e + 1) % 3);
      directed[{a, b}] += 1;
    }
  }
  std::set<std::pair<int, int>> undirected;
  for (const auto& [edge, count] : directed) {
    if (count != 1) rep.manifold = false;
    if (!directed.count({edge.second, edge.first})) rep.closed = false;
    undirected.insert({std::min(edge.first, edge.second), std::max(edge.first, edge.second)});
  }

  std::vector<std::vector<int>> adj(verts.rows());
  for (const auto& e : undirected) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }
  std::vector<char> seen(verts.rows(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        stack.push_back(v);
      }
  }
  rep.connected = reached == verts.rows();
  rep.euler = static_cast<int>(verts.rows()) - static_cast<int>(undirected.size()) +
              static_cast<int>(tris.rows());
  for (int t = 0; t < tris.rows(); ++t) {
    const Vec3 a = verts.row(tris(t, 0)), b = verts.row(tris(t, 1)), c = verts.row(tris(t, 2));
    rep.signed_volume += a.dot(b.cross(c)) / 6.0;
  }
  return rep;
}

}  // namespace handfit::testing
