// Independent reference implementations used only by tests. None of these
// share code paths with the library routines they check.
#ifndef UNA_TESTS_ORACLES_HPP
#define UNA_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <vector>

#include "una/vision.hpp"

namespace oracle {

struct Blob {
  std::size_t area = 0;
  double cu = 0, cv = 0;
};

/// 8-connected flood fill; blobs sorted the same way find_contours sorts.
inline std::vector<Blob> flood_fill(const una::BinaryMask& m) {
  const int w = m.width(), h = m.height();
  std::vector<int> seen(std::size_t(w) * h, 0);
  std::vector<Blob> blobs;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!m.get(u, v) || seen[std::size_t(v) * w + u]) continue;
      Blob b;
      long su = 0, sv = 0;
      std::deque<std::pair<int, int>> queue{{u, v}};
      seen[std::size_t(v) * w + u] = 1;
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        ++b.area;
        su += x;
        sv += y;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            if (!m.get(nx, ny) || seen[std::size_t(ny) * w + nx]) continue;
            seen[std::size_t(ny) * w + nx] = 1;
            queue.emplace_back(nx, ny);
          }
      }
      b.cu = double(su) / double(b.area);
      b.cv = double(sv) / double(b.area);
      blobs.push_back(b);
    }
  }
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.cv != b.cv) return a.cv < b.cv;
    return a.cu < b.cu;
  });
  return blobs;
}

/// Direct 3x3 AND at every pixel; outside the image counts as unset.
inline una::BinaryMask erode_and(const una::BinaryMask& m) {
  una::BinaryMask out(m.width(), m.height());
  for (int v = 0; v < m.height(); ++v)
    for (int u = 0; u < m.width(); ++u) {
      bool all = true;
      for (int dv = -1; dv <= 1 && all; ++dv)
        for (int du = -1; du <= 1 && all; ++du) {
          const int x = u + du, y = v + dv;
          all = x >= 0 && y >= 0 && x < m.width() && y < m.height() && m.get(x, y);
        }
      out.set(u, v, all);
    }
  return out;
}

/// Random mask built from a few rectangles, disks and speckle.
inline una::BinaryMask random_mask(std::mt19937& rng, int w, int h) {
  una::BinaryMask m(w, h);
  std::uniform_int_distribution<int> shapes(1, 8);
  std::uniform_int_distribution<int> pu(0, w - 1), pv(0, h - 1), size(1, 14);
  std::bernoulli_distribution coin(0.5);
  const int n = shapes(rng);
  for (int s = 0; s < n; ++s) {
    const int u0 = pu(rng), v0 = pv(rng), a = size(rng), b = size(rng);
    const bool disk = coin(rng);
    for (int v = std::max(0, v0 - b); v <= std::min(h - 1, v0 + b); ++v)
      for (int u = std::max(0, u0 - a); u <= std::min(w - 1, u0 + a); ++u) {
        if (disk) {
          const double du = double(u - u0) / a, dv = double(v - v0) / b;
          if (du * du + dv * dv > 1) continue;
        }
        m.set(u, v);
      }
  }
  std::bernoulli_distribution speckle(0.04), hole(0.08);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      if (speckle(rng)) m.set(u, v, true);
      else if (m.get(u, v) && hole(rng)) m.set(u, v, false);
    }
  return m;
}

/// Breadth-first hop distances from `source` on an adjacency matrix.
inline std::vector<int> bfs(const std::vector<std::vector<bool>>& adj, int source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const int a = q.front();
    q.pop();
    for (std::size_t b = 0; b < adj.size(); ++b)
      if (adj[a][b] && dist[b] < 0) {
        dist[b] = dist[a] + 1;
        q.push(int(b));
      }
  }
  return dist;
}

/// Coverage predicate through dot products instead of angles.
inline bool covered_dot(double tx, double ty, double px, double py, double yaw, double fov,
                        double r_min, double r_max) {
  const double dx = tx - px, dy = ty - py;
  const double d2 = dx * dx + dy * dy;
  if (d2 < r_min * r_min || d2 > r_max * r_max) return false;
  if (d2 == 0) return false;
  const double cos_between = (dx * std::cos(yaw) + dy * std::sin(yaw)) / std::sqrt(d2);
  return cos_between >= std::cos(fov / 2);
}

}  // namespace oracle

#endif  // UNA_TESTS_ORACLES_HPP
