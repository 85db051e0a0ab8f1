#pragma once

// Independent re-derivation of every metric by direct counting over the
// (gold, pred) pairs. Shares no scoring code with metrics.hpp; used to check
// it.

#include <set>
#include <string>
#include <vector>

#include "finrex/metrics.hpp"

namespace finrex {

inline MetricsReport brute_force_oracle(const std::vector<int>& gold, const std::vector<int>& pred,
                                        const std::vector<std::string>& labels,
                                        const std::vector<int>& include) {
  if (gold.size() != pred.size()) throw Error("oracle: length mismatch");
  if (gold.empty()) throw Error("oracle: no examples");
  if (gold.size() > 10000) throw Error("oracle: input too large (limit 10000)");
  if (include.empty()) throw Error("oracle: empty include set");

  const std::size_t k = labels.size();
  MetricsReport r;
  r.labels = labels;
  r.num_examples = gold.size();
  r.confusion = ConfusionMatrix(k);
  for (std::size_t i = 0; i < gold.size(); ++i) r.confusion.add(gold[i], pred[i]);

  long pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  double f1_total = 0.0;
  const std::set<int> included(include.begin(), include.end());
  for (std::size_t c = 0; c < k; ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool is_gold = gold[i] == static_cast<int>(c);
      const bool is_pred = pred[i] == static_cast<int>(c);
      if (is_gold) ++support;
      if (is_gold && is_pred) ++tp;
      if (!is_gold && is_pred) ++fp;
      if (is_gold && !is_pred) ++fn;
    }
    ClassMetrics m;
    m.support = static_cast<std::size_t>(support);
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    r.per_class.push_back(m);
    if (included.count(static_cast<int>(c))) {
      pooled_tp += tp;
      pooled_fp += fp;
      pooled_fn += fn;
      f1_total += m.f1;
    }
  }
  const double p = (pooled_tp + pooled_fp) > 0
                       ? static_cast<double>(pooled_tp) / static_cast<double>(pooled_tp + pooled_fp)
                       : 0.0;
  const double rc = (pooled_tp + pooled_fn) > 0
                        ? static_cast<double>(pooled_tp) / static_cast<double>(pooled_tp + pooled_fn)
                        : 0.0;
  r.micro_f1 = (p + rc) > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
  r.macro_f1 = f1_total / static_cast<double>(included.size());
  return r;
}

}  // namespace finrex
