#include "ppgn/metrics.hpp"

#include <algorithm>
#include <set>

#include "ppgn/diagnostics.hpp"

namespace ppgn {

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              const std::vector<std::vector<std::size_t>>& adjacency) {
  if (truth.size() != predicted.size())
    throw ValidationError("compute_metrics: " + std::to_string(truth.size()) + " true labels vs " +
                          std::to_string(predicted.size()) + " predictions");
  MetricsReport r;
  r.total = truth.size();
  std::size_t classes = adjacency.size();
  for (std::size_t i = 0; i < truth.size(); ++i) classes = std::max({classes, truth[i] + 1, predicted[i] + 1});
  r.classes.resize(classes);
  std::vector<bool> seen(classes, false);

  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t t = truth[i];
    const std::size_t p = predicted[i];
    seen[t] = true;
    if (t == p) {
      ++r.classes[t].tp;
      ++r.classes[t].tp_hop;
    } else {
      ++r.classes[t].fn;
      ++r.classes[p].fp;
      if (t < adjacency.size() && std::find(adjacency[t].begin(), adjacency[t].end(), p) != adjacency[t].end())
        ++r.classes[t].tp_hop;
    }
  }

  std::size_t tp = 0, tp_hop = 0;
  double f1_sum = 0.0, lar_sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& k = r.classes[c];
    k.tn = r.total - k.tp - k.fp - k.fn;
    k.precision = k.tp + k.fp > 0 ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp) : 0.0;
    k.recall = k.tp + k.fn > 0 ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn) : 0.0;
    k.f1 = k.precision + k.recall > 0.0 ? 2.0 * k.precision * k.recall / (k.precision + k.recall) : 0.0;
    tp += k.tp;
    tp_hop += k.tp_hop;
    if (seen[c]) {
      r.present.push_back(c);
      f1_sum += k.f1;
      lar_sum += static_cast<double>(k.tp) / static_cast<double>(r.total);
    }
  }
  if (r.total > 0) {
    r.lar = static_cast<double>(tp) / static_cast<double>(r.total);
    r.lar1hop = static_cast<double>(tp_hop) / static_cast<double>(r.total);
    r.f1 = f1_sum / static_cast<double>(r.present.size());
    r.lar_classwise = lar_sum / static_cast<double>(r.present.size());
  }
  return r;
}

std::vector<std::vector<std::size_t>> label_adjacency(const FeederGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::set<std::size_t>> sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : g.neighbors(i)) {
      const std::size_t a = g.canonical(i), b = g.canonical(j);
      if (a != b) sets[a].insert(b);
    }
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(sets[i].begin(), sets[i].end());
  return out;
}

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              const FeederGraph& g) {
  std::vector<std::size_t> t(truth.size()), p(predicted.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g.canonical(truth[i]);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = g.canonical(predicted[i]);
  return compute_metrics(t, p, label_adjacency(g));
}

}  // namespace ppgn
