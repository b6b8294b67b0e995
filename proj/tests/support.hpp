// Independent reference implementations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "sfmot/geometry.hpp"
#include "sfmot/metrics.hpp"

namespace sfmot::testing {

inline constexpr double kPi = 3.14159265358979323846;

/// Rotate the point into the box frame and compare against half extents.
inline bool inside_reference(const Box3D& b, double px, double py, double pz) {
  const double dx = px - b.x, dy = py - b.y;
  const double ct = std::cos(-b.theta), st = std::sin(-b.theta);
  const double u = ct * dx - st * dy;
  const double v = st * dx + ct * dy;
  return 2 * std::abs(u) <= b.l && 2 * std::abs(v) <= b.w && 2 * std::abs(pz - b.z) <= b.h;
}

/// Monte-Carlo IoU: uniform samples over the axis-aligned region enclosing both boxes.
inline double monte_carlo_iou(const Box3D& a, const Box3D& b, int samples, std::mt19937_64& rng) {
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (const Box3D* bx : {&a, &b}) {
    const double r = 0.5 * std::hypot(bx->l, bx->w);
    lo[0] = std::min(lo[0], bx->x - r);
    hi[0] = std::max(hi[0], bx->x + r);
    lo[1] = std::min(lo[1], bx->y - r);
    hi[1] = std::max(hi[1], bx->y + r);
    lo[2] = std::min(lo[2], bx->z - bx->h / 2);
    hi[2] = std::max(hi[2], bx->z + bx->h / 2);
  }
  std::uniform_real_distribution<double> ux(lo[0], hi[0]), uy(lo[1], hi[1]), uz(lo[2], hi[2]);
  long in_a = 0, in_b = 0, both = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    const bool ia = inside_reference(a, x, y, z), ib = inside_reference(b, x, y, z);
    in_a += ia;
    in_b += ib;
    both += ia && ib;
  }
  const long uni = in_a + in_b - both;
  return uni ? static_cast<double>(both) / static_cast<double>(uni) : 0.0;
}

inline Box3D random_box(std::mt19937_64& rng, double spread = 5.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), dim(0.5, 5.0), yaw(-kPi, kPi), zz(-1.0, 1.0);
  return {pos(rng), pos(rng), zz(rng), dim(rng), dim(rng), dim(rng), yaw(rng)};
}

/// Second box placed near the first so that most pairs overlap.
inline Box3D nearby_box(const Box3D& a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-0.6, 0.6), scale(0.5, 1.5), yaw(-kPi, kPi);
  const double r = 0.5 * std::hypot(a.l, a.w);
  return {a.x + off(rng) * r, a.y + off(rng) * r, a.z + off(rng) * a.h, a.l * scale(rng), a.w * scale(rng), a.h * scale(rng),
          yaw(rng)};
}

/// Exhaustive maximum of sum S[i][perm(i)] over all one-to-one partial assignments
/// (zero padding to square, so unassigned rows contribute 0).
inline double brute_force_max_total(const Eigen::MatrixXd& s) {
  const int n = static_cast<int>(std::max(s.rows(), s.cols()));
  if (n == 0) return 0.0;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double tot = 0;
    for (int i = 0; i < n; ++i)
      if (i < s.rows() && perm[static_cast<std::size_t>(i)] < s.cols()) tot += s(i, perm[static_cast<std::size_t>(i)]);
    best = std::max(best, tot);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct ReferenceCounts {
  std::size_t fp = 0, fn = 0, ids = 0, frag = 0;
};

/// Definition-chasing evaluator. Per frame: carry over last frame's gt->pred
/// pairs that still reach the threshold, then try every injective pairing of
/// the rest and keep the one with the largest total IoU. Identity switches and
/// fragmentations are counted afterwards from the full per-gt history.
inline ReferenceCounts reference_evaluate(const EvalSequence& seq, double thres) {
  ReferenceCounts rc;
  std::map<int, std::vector<std::pair<bool, int>>> history;  // gt id -> (matched, pred id) per present frame
  std::map<int, int> prev;
  for (std::size_t f = 0; f < seq.gt.size(); ++f) {
    const auto& gt = seq.gt[f];
    const auto& pr = seq.pred[f];
    std::vector<int> match(gt.size(), -1);
    std::vector<char> taken(pr.size(), 0);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      auto it = prev.find(gt[g].id);
      if (it == prev.end()) continue;
      for (std::size_t p = 0; p < pr.size(); ++p)
        if (pr[p].id == it->second && !taken[p] && iou3d(gt[g].box, pr[p].box) >= thres) {
          match[g] = static_cast<int>(p);
          taken[p] = 1;
        }
    }
    // Recursive enumeration over the unmatched gts.
    std::vector<std::size_t> free_g;
    for (std::size_t g = 0; g < gt.size(); ++g)
      if (match[g] < 0) free_g.push_back(g);
    std::vector<int> cur(gt.size(), -1), best = cur;
    double best_total = -1;
    std::function<void(std::size_t, double)> rec = [&](std::size_t k, double total) {
      if (k == free_g.size()) {
        if (total > best_total) {
          best_total = total;
          best = cur;
        }
        return;
      }
      const std::size_t g = free_g[k];
      rec(k + 1, total);
      for (std::size_t p = 0; p < pr.size(); ++p) {
        if (taken[p]) continue;
        const double v = iou3d(gt[g].box, pr[p].box);
        if (v < thres) continue;
        taken[p] = 1;
        cur[g] = static_cast<int>(p);
        rec(k + 1, total + v);
        cur[g] = -1;
        taken[p] = 0;
      }
    };
    rec(0, 0.0);
    for (std::size_t g : free_g) match[g] = best[g];

    std::size_t matched_preds = 0;
    prev.clear();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const bool m = match[g] >= 0;
      history[gt[g].id].push_back({m, m ? pr[static_cast<std::size_t>(match[g])].id : -1});
      if (m) {
        ++matched_preds;
        prev[gt[g].id] = pr[static_cast<std::size_t>(match[g])].id;
      } else {
        ++rc.fn;
      }
    }
    rc.fp += pr.size() - matched_preds;
  }
  for (const auto& [id, h] : history) {
    int last = -1;
    bool have_last = false;
    for (std::size_t k = 0; k < h.size(); ++k) {
      if (!h[k].first) continue;
      if (have_last && h[k].second != last) ++rc.ids;
      last = h[k].second;
      have_last = true;
    }
    for (std::size_t k = 2; k < h.size(); ++k) {
      if (!h[k].first || h[k - 1].first) continue;
      bool earlier = false;
      for (std::size_t q = 0; q + 1 < k; ++q) earlier = earlier || h[q].first;
      rc.frag += earlier;
    }
  }
  return rc;
}

/// Random mini-scenario: up to `max_objects` gt tracks over `frames` frames with
/// jittered predictions, dropped detections, false positives and id swaps.
inline EvalSequence random_eval_sequence(std::mt19937_64& rng, int frames = 5, int max_objects = 4) {
  std::uniform_int_distribution<int> nobj(1, max_objects);
  std::uniform_real_distribution<double> u01(0, 1), jit(-0.35, 0.35), vel(-1.5, 1.5), sc(0.05, 1.0);
  const int n = nobj(rng);
  std::vector<Box3D> start;
  std::vector<std::pair<double, double>> v;
  for (int i = 0; i < n; ++i) {
    std::uniform_real_distribution<double> pos(-8, 8), yaw(-kPi, kPi);
    start.push_back({pos(rng), pos(rng), 0.0, 4.0, 1.8, 1.5, yaw(rng)});
    v.emplace_back(vel(rng), vel(rng));
  }
  EvalSequence seq;
  seq.gt.resize(static_cast<std::size_t>(frames));
  seq.pred.resize(static_cast<std::size_t>(frames));
  std::vector<int> pred_id(static_cast<std::size_t>(n));
  std::iota(pred_id.begin(), pred_id.end(), 100);
  int next_pred = 200;
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      if (u01(rng) < 0.1) continue;  // object absent this frame
      const Box3D& s = start[static_cast<std::size_t>(i)];
      const Box3D g{s.x + v[static_cast<std::size_t>(i)].first * t, s.y + v[static_cast<std::size_t>(i)].second * t, 0.0, s.l, s.w, s.h, s.theta};
      seq.gt[static_cast<std::size_t>(t)].push_back({i, g, 1.0});
      if (u01(rng) < 0.2) continue;  // missed
      if (u01(rng) < 0.15) pred_id[static_cast<std::size_t>(i)] = next_pred++;  // identity switch
      const Box3D p{g.x + jit(rng), g.y + jit(rng), jit(rng) * 0.3, g.l, g.w, g.h, g.theta + 0.2 * jit(rng)};
      seq.pred[static_cast<std::size_t>(t)].push_back({pred_id[static_cast<std::size_t>(i)], p, sc(rng)});
    }
    if (n >= 2 && u01(rng) < 0.1) {
      // Swap two predicted ids within the frame.
      auto& fr = seq.pred[static_cast<std::size_t>(t)];
      if (fr.size() >= 2) std::swap(fr[0].id, fr[1].id);
    }
    if (u01(rng) < 0.3) {
      std::uniform_real_distribution<double> pos(-8, 8);
      seq.pred[static_cast<std::size_t>(t)].push_back({next_pred++, {pos(rng), pos(rng), 0.0, 4.0, 1.8, 1.5, 0.0}, sc(rng)});
    }
  }
  return seq;
}

}  // namespace sfmot::testing
