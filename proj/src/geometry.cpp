#include "textar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "textar/log.hpp"

namespace textar::geom {

double weighted_chebyshev(const NormalizedPosition& c, const NormalizedPosition& a, double k,
                          double m) {
  if (!std::isfinite(c.x) || !std::isfinite(c.y) || !std::isfinite(a.x) || !std::isfinite(a.y))
    throw std::invalid_argument("weighted_chebyshev: non-finite coordinates");
  return std::max(k * std::abs(c.x - a.x), m * std::abs(c.y - a.y));
}

bool validate_metric_weights(double k, double m) {
  if (k <= 0.0 || m <= 0.0 || !std::isfinite(k) || !std::isfinite(m))
    throw std::invalid_argument("metric weights must be positive finite");
  if (k == m) {
    TEXTAR_LOG_INFO("warning: k == m (%g) gives square context regions", k);
    return false;
  }
  return true;
}

void validate_layout(const DocumentLayout& layout) {
  if (layout.width <= 0 || layout.height <= 0)
    throw std::invalid_argument("layout: non-positive dimensions");
  if (layout.boxes.empty()) throw std::invalid_argument("layout: no boxes");
  std::vector<bool> seen(layout.boxes.size(), false);
  for (const WordBox& b : layout.boxes) {
    if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max))
      throw std::invalid_argument("layout: degenerate box " + std::to_string(b.id));
    if (b.x_min < 0 || b.y_min < 0 || b.x_max > layout.width || b.y_max > layout.height)
      throw std::invalid_argument("layout: box " + std::to_string(b.id) + " outside page");
    if (b.id < 0 || b.id >= static_cast<int>(layout.boxes.size()) || seen[b.id])
      throw std::invalid_argument("layout: ids must be unique and dense in [0,N)");
    seen[b.id] = true;
  }
}

NormalizedPosition normalize_center(const WordBox& box, const DocumentLayout& layout) {
  if (layout.width <= 0 || layout.height <= 0)
    throw std::invalid_argument("normalize_center: zero-sized layout");
  return {(box.x_min + box.x_max) / 2.0 / layout.width,
          (box.y_min + box.y_max) / 2.0 / layout.height};
}

ContextWindow nearest_window(const DocumentLayout& layout, int anchor_id, int S, double k,
                             double m) {
  if (layout.boxes.empty()) throw std::invalid_argument("nearest_window: empty layout");
  if (S < 1) throw std::invalid_argument("nearest_window: S must be >= 1");
  const int n = static_cast<int>(layout.boxes.size());
  if (anchor_id < 0 || anchor_id >= n)
    throw std::invalid_argument("nearest_window: bad anchor id");

  std::vector<NormalizedPosition> centers(n);
  const WordBox* anchor = nullptr;
  for (const WordBox& b : layout.boxes) {
    centers[b.id] = normalize_center(b, layout);
    if (b.id == anchor_id) anchor = &b;
  }
  const NormalizedPosition a = centers[anchor_id];

  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(n);
  for (int id = 0; id < n; ++id) ranked.emplace_back(weighted_chebyshev(centers[id], a, k, m), id);
  std::sort(ranked.begin(), ranked.end());  // (distance, id) — ties break by lower id

  ContextWindow cw;
  cw.anchor_id = anchor_id;
  const int take = std::min(S, n);
  for (int i = 0; i < take; ++i) {
    cw.members.push_back(ranked[i].second);
    cw.positions.push_back(centers[ranked[i].second]);
    cw.padding_mask.push_back(true);
  }
  for (int i = take; i < S; ++i) {
    cw.members.push_back(-1);
    cw.positions.push_back({0.0, 0.0});
    cw.padding_mask.push_back(false);
  }
  (void)anchor;
  return cw;
}

std::vector<ContextWindow> sequential_context_windows(const DocumentLayout& layout, int S, double k,
                                                      double m, std::uint64_t seed) {
  validate_layout(layout);
  const int n = static_cast<int>(layout.boxes.size());
  std::vector<bool> visited(n, false);
  std::vector<int> unvisited(n);
  for (int i = 0; i < n; ++i) unvisited[i] = i;

  Rng rng(seed);
  std::vector<ContextWindow> windows;
  while (!unvisited.empty()) {
    const std::size_t pick = rng.uniform_int(unvisited.size());
    const int anchor = unvisited[pick];
    ContextWindow cw = nearest_window(layout, anchor, S, k, m);
    for (std::size_t i = 0; i < cw.members.size(); ++i)
      if (cw.padding_mask[i]) visited[cw.members[i]] = true;
    windows.push_back(std::move(cw));
    // rebuild in id order so anchor choice depends only on the visited set
    unvisited.clear();
    for (int i = 0; i < n; ++i)
      if (!visited[i]) unvisited.push_back(i);
  }
  return windows;
}

}  // namespace textar::geom
