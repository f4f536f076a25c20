#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "textar/rng.hpp"
#include "textar/types.hpp"

namespace textar::geom {

// One detected word: the unit of annotation and prediction.
struct WordBox {
  int id = 0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::optional<AttributeLabel> label;
};

struct DocumentLayout {
  int width = 0;
  int height = 0;
  std::vector<WordBox> boxes;  // ids unique and dense in [0, N)
};

// Ordered sequence of exactly S word slots around an anchor.
struct ContextWindow {
  int anchor_id = 0;
  std::vector<int> members;                     // length S; -1 marks a padded slot
  std::vector<NormalizedPosition> positions;    // (0,0) for padded slots
  std::vector<bool> padding_mask;               // true = real word
};

// max(k*|c.x - a.x|, m*|c.y - a.y|). The iso-surfaces are rectangles when
// k != m; k = m is allowed (ablation) but flagged by validate_metric_weights.
double weighted_chebyshev(const NormalizedPosition& c, const NormalizedPosition& a, double k,
                          double m);

// Returns false (and logs a warning) when k == m; throws on non-positive weights.
bool validate_metric_weights(double k, double m);

NormalizedPosition normalize_center(const WordBox& box, const DocumentLayout& layout);

// Anchor plus its S-1 nearest boxes by weighted Chebyshev distance over
// normalized centers, sorted by (distance, id). Windows on layouts with
// N < S are padded to length S with padding_mask=false slots.
ContextWindow nearest_window(const DocumentLayout& layout, int anchor_id, int S, double k,
                             double m);

// BFS-like covering pass: pick a random unvisited anchor, emit its window,
// mark every member visited, repeat until all boxes are visited.
std::vector<ContextWindow> sequential_context_windows(const DocumentLayout& layout, int S, double k,
                                                      double m, std::uint64_t seed);

void validate_layout(const DocumentLayout& layout);

}  // namespace textar::geom
