#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "textar/dataset.hpp"
#include "textar/model.hpp"
#include "textar/types.hpp"

namespace textar::eval {

// Raw (pre-softmax) logits one window produced for one word. Dual-head
// records fill logits_t1/t2; single-head records fill logits_combined.
struct LogitRecord {
  int doc = 0;
  int word = 0;
  int window = 0;
  std::vector<double> logits_t1;
  std::vector<double> logits_t2;
  std::vector<double> logits_combined;
};

// Cross-window logit averaging: mean raw logits over every window covering
// the word, then argmax (ties resolve to the lowest class index). Throws on
// an empty record set — every word must be covered by at least one window.
AttributeLabel cavg(const std::vector<LogitRecord>& records);

struct ClassMetrics {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

using WordKey = std::pair<int, int>;  // (doc index, word id)

struct EvalReport {
  std::map<WordKey, AttributeLabel> predictions;
  // t1_normal, t1_bold, t1_italic, t1_bold_italic, t2_normal, t2_underline,
  // t2_strikeout, t2_underline_strikeout, plus normal_pooled
  std::map<std::string, ClassMetrics> per_class;
  // unweighted mean over the 7 report categories: pooled normal, bold,
  // italic, bold&italic, underline, strikeout, underline&strikeout
  double macro_f1 = 0.0;
  std::array<std::array<long, 4>, 4> confusion_t1{};  // [truth][pred]
  std::array<std::array<long, 4>, 4> confusion_t2{};
};

// One-vs-rest scores per class. A class absent from both predictions and
// ground truth scores 1.0; predicted but never true scores 0.0. The pooled
// normal row sums TP/FP/FN of the two per-head normal classes.
EvalReport score_predictions(const std::map<WordKey, AttributeLabel>& predictions,
                             const std::map<WordKey, AttributeLabel>& truths);

// Collects per-window logits for every real slot. Windows must already be
// built and crops loaded. batch_windows only affects speed, not results.
std::vector<LogitRecord> collect_logits(const model::Model& m, const data::Dataset& ds,
                                        int batch_windows = 16);

// Full pipeline on a prepared dataset: inference, CAvg, metrics against the
// labeled words.
EvalReport evaluate_run(const model::Model& m, const data::Dataset& ds, int batch_windows = 16);

nlohmann::json report_json(const EvalReport& report);

}  // namespace textar::eval
