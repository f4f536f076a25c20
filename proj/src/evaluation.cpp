#include "textar/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "textar/log.hpp"

namespace textar::eval {

namespace {

int argmax_lowest(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;  // strict: ties keep the lowest index
  return best;
}

std::vector<double> mean_logits(const std::vector<LogitRecord>& records,
                                std::vector<double> LogitRecord::*field, std::size_t expect) {
  std::vector<double> acc(expect, 0.0);
  for (const auto& r : records) {
    const auto& v = r.*field;
    if (v.size() != expect) throw std::invalid_argument("cavg: inconsistent logit widths");
    for (std::size_t i = 0; i < expect; ++i) acc[i] += v[i];
  }
  const double n = static_cast<double>(records.size());
  for (double& x : acc) x /= n;
  return acc;
}

}  // namespace

AttributeLabel cavg(const std::vector<LogitRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("cavg: word has no covering window (missing coverage)");
  if (!records.front().logits_combined.empty()) {
    const auto mean = mean_logits(records, &LogitRecord::logits_combined, kNumCombined);
    return AttributeLabel::from_combined(argmax_lowest(mean));
  }
  const auto m1 = mean_logits(records, &LogitRecord::logits_t1, kNumClasses);
  const auto m2 = mean_logits(records, &LogitRecord::logits_t2, kNumClasses);
  return AttributeLabel{argmax_lowest(m1), argmax_lowest(m2)};
}

namespace {

const char* kT1Names[4] = {"t1_normal", "t1_bold", "t1_italic", "t1_bold_italic"};
const char* kT2Names[4] = {"t2_normal", "t2_underline", "t2_strikeout",
                           "t2_underline_strikeout"};

void finish(ClassMetrics& m) {
  m.precision = (m.tp + m.fp) == 0 ? 1.0 : static_cast<double>(m.tp) / (m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0 ? 1.0 : static_cast<double>(m.tp) / (m.tp + m.fn);
  const long denom = 2 * m.tp + m.fp + m.fn;
  m.f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
}

}  // namespace

EvalReport score_predictions(const std::map<WordKey, AttributeLabel>& predictions,
                             const std::map<WordKey, AttributeLabel>& truths) {
  EvalReport rep;
  rep.predictions = predictions;
  for (int c = 0; c < 4; ++c) {
    rep.per_class[kT1Names[c]] = {};
    rep.per_class[kT2Names[c]] = {};
  }
  rep.per_class["normal_pooled"] = {};

  for (const auto& [key, truth] : truths) {
    const auto it = predictions.find(key);
    if (it == predictions.end())
      throw std::invalid_argument("score: no prediction for a labeled word");
    const AttributeLabel& pred = it->second;
    ++rep.confusion_t1[static_cast<std::size_t>(truth.t1)][static_cast<std::size_t>(pred.t1)];
    ++rep.confusion_t2[static_cast<std::size_t>(truth.t2)][static_cast<std::size_t>(pred.t2)];
    for (int c = 0; c < 4; ++c) {
      auto& m1 = rep.per_class[kT1Names[c]];
      if (truth.t1 == c && pred.t1 == c) ++m1.tp;
      if (truth.t1 != c && pred.t1 == c) ++m1.fp;
      if (truth.t1 == c && pred.t1 != c) ++m1.fn;
      auto& m2 = rep.per_class[kT2Names[c]];
      if (truth.t2 == c && pred.t2 == c) ++m2.tp;
      if (truth.t2 != c && pred.t2 == c) ++m2.fp;
      if (truth.t2 == c && pred.t2 != c) ++m2.fn;
    }
  }

  auto& pooled = rep.per_class["normal_pooled"];
  pooled.tp = rep.per_class["t1_normal"].tp + rep.per_class["t2_normal"].tp;
  pooled.fp = rep.per_class["t1_normal"].fp + rep.per_class["t2_normal"].fp;
  pooled.fn = rep.per_class["t1_normal"].fn + rep.per_class["t2_normal"].fn;

  for (auto& [name, m] : rep.per_class) finish(m);

  const char* macro_classes[7] = {"normal_pooled",  "t1_bold",      "t1_italic",
                                  "t1_bold_italic", "t2_underline", "t2_strikeout",
                                  "t2_underline_strikeout"};
  double sum = 0.0;
  for (const char* name : macro_classes) sum += rep.per_class[name].f1;
  rep.macro_f1 = sum / 7.0;
  return rep;
}

std::vector<LogitRecord> collect_logits(const model::Model& m, const data::Dataset& ds,
                                        int batch_windows) {
  if (batch_windows <= 0) throw std::invalid_argument("collect_logits: bad batch size");
  const auto refs = data::all_windows(ds);
  if (refs.empty()) throw std::invalid_argument("collect_logits: dataset has no windows");

  const bool dual = m.config().dual_head;
  std::vector<LogitRecord> records;
  for (std::size_t start = 0; start < refs.size(); start += batch_windows) {
    const std::size_t end = std::min(refs.size(), start + batch_windows);
    const std::vector<data::WindowRef> chunk(refs.begin() + static_cast<std::ptrdiff_t>(start),
                                             refs.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = data::make_batch(ds, chunk);
    const auto out = m.forward(batch, false, nullptr, nullptr);
    for (std::size_t bi = 0; bi < chunk.size(); ++bi) {
      const auto& win = ds.docs[chunk[bi].doc].windows[chunk[bi].win];
      for (int s = 0; s < static_cast<int>(win.members.size()); ++s) {
        if (!win.padding_mask[s]) continue;
        LogitRecord rec;
        rec.doc = chunk[bi].doc;
        rec.word = win.members[s];
        rec.window = chunk[bi].win;
        const int b = static_cast<int>(bi);
        if (dual) {
          rec.logits_t1.resize(kNumClasses);
          rec.logits_t2.resize(kNumClasses);
          for (int c = 0; c < kNumClasses; ++c) {
            rec.logits_t1[c] = out.logits_t1.at(b, s, c);
            rec.logits_t2[c] = out.logits_t2.at(b, s, c);
          }
        } else {
          rec.logits_combined.resize(kNumCombined);
          for (int c = 0; c < kNumCombined; ++c)
            rec.logits_combined[c] = out.logits_combined.at(b, s, c);
        }
        records.push_back(std::move(rec));
      }
    }
  }
  return records;
}

EvalReport evaluate_run(const model::Model& m, const data::Dataset& ds, int batch_windows) {
  const auto records = collect_logits(m, ds, batch_windows);

  std::map<WordKey, std::vector<LogitRecord>> by_word;
  for (const auto& r : records) by_word[{r.doc, r.word}].push_back(r);

  std::map<WordKey, AttributeLabel> predictions;
  for (const auto& [key, recs] : by_word) predictions[key] = cavg(recs);

  std::map<WordKey, AttributeLabel> truths;
  for (int d = 0; d < static_cast<int>(ds.docs.size()); ++d) {
    for (const auto& box : ds.docs[d].layout.boxes) {
      if (!box.label) continue;
      const WordKey key{d, box.id};
      if (!predictions.count(key))
        throw std::runtime_error("evaluate: labeled word missing from window coverage");
      truths[key] = *box.label;
    }
  }
  return score_predictions(predictions, truths);
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [name, m] : report.per_class) {
    per_class[name] = {{"tp", m.tp},
                       {"fp", m.fp},
                       {"fn", m.fn},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1}};
  }
  auto conf = [](const std::array<std::array<long, 4>, 4>& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : c) rows.push_back(row);
    return rows;
  };
  return {{"per_class", std::move(per_class)},
          {"macro_f1", report.macro_f1},
          {"confusion_t1", conf(report.confusion_t1)},
          {"confusion_t2", conf(report.confusion_t2)}};
}

}  // namespace textar::eval
