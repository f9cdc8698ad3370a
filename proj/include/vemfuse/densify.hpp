#pragma once
// Graph densification: generate unobserved queries via relation-embedding
// cosine similarity, label neighbor triples with the text model, and build
// the per-batch overlay (base graph is never mutated).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "vemfuse/kg.hpp"
#include "vemfuse/losses.hpp"
#include "vemfuse/rng.hpp"
#include "vemfuse/struct_encoder.hpp"
#include "vemfuse/text_encoder.hpp"

namespace vemfuse {

struct GeneratedQuery {
  int32_t head = -1;
  int32_t relation = -1;      // guaranteed not incident to head in the train graph
  double similarity_score = 0.0;  // max cosine to the head's connected relations
  int neighbor_slots = 0;
};

struct DensifyCounters {
  int64_t generated = 0;
  int64_t skipped_no_candidate = 0;   // R2 empty
  int64_t short_neighbor_lists = 0;   // fewer than M admissible relations
  int64_t ground_truth_labels = 0;
  int64_t overlay_edges = 0;
  double mean_label_confidence = 0.0;
};

namespace densifydetail {

template <typename S>
double cosine(const std::vector<S>& a, const std::vector<S>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Scores every candidate relation by its max cosine against the connected
// set; returns candidates sorted by (score desc, id asc).
template <typename S>
std::vector<std::pair<double, int32_t>> rank_candidates(StructModel<S>& model,
                                                        const std::vector<int32_t>& connected,
                                                        const std::vector<int32_t>& candidates) {
  std::vector<std::vector<S>> conn_emb;
  conn_emb.reserve(connected.size());
  for (int32_t r : connected) conn_emb.push_back(model.relation_embedding(r));
  std::vector<std::pair<double, int32_t>> ranked;
  ranked.reserve(candidates.size());
  for (int32_t r2 : candidates) {
    const auto emb = model.relation_embedding(r2);
    double best = -2.0;
    for (const auto& c : conn_emb) best = std::max(best, cosine(emb, c));
    ranked.emplace_back(best, r2);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  return ranked;
}

}  // namespace densifydetail

// Samples N entities and picks, for each, the unconnected relation most
// cosine-similar to any connected one. Every emitted (e, r) pair is absent
// from the train graph by construction.
template <typename S>
std::vector<GeneratedQuery> generate_queries(const KnowledgeGraph& graph, StructModel<S>& model,
                                             int n, Rng rng, DensifyCounters* counters = nullptr) {
  std::vector<GeneratedQuery> out;
  if (n <= 0) return out;
  const int32_t ne = graph.num_entities();
  if (ne == 0) throw std::invalid_argument("generate_queries: empty graph");
  const int32_t nr = graph.num_relations();
  const int max_retries = 64 * n + 64;
  int retries = 0;
  while (static_cast<int>(out.size()) < n) {
    if (retries++ > max_retries)
      throw std::runtime_error("generate_queries: retry budget exhausted (graph too small?)");
    const int32_t e = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(ne)));
    const std::vector<int32_t> connected = graph.connected_relations(e);
    if (connected.empty()) continue;  // resample isolated entity
    if (static_cast<int32_t>(connected.size()) == nr) {
      if (counters) counters->skipped_no_candidate++;
      continue;
    }
    std::vector<int32_t> candidates;
    candidates.reserve(static_cast<size_t>(nr) - connected.size());
    std::set<int32_t> conn_set(connected.begin(), connected.end());
    for (int32_t r = 0; r < nr; ++r)
      if (!conn_set.count(r)) candidates.push_back(r);
    auto ranked = densifydetail::rank_candidates(model, connected, candidates);
    GeneratedQuery q;
    q.head = e;
    q.relation = ranked.front().second;
    q.similarity_score = ranked.front().first;
    out.push_back(q);
    if (counters) counters->generated++;
  }
  return out;
}

// Generates up to M additional unconnected relations at the same head and
// labels each with a tail drawn from the text model's tempered distribution
// restricted to its top-10 entities. Ground-truth tails are used when the
// (head, relation) pair is observed in the train graph.
template <typename S>
std::vector<Triple> sample_neighbors(const GeneratedQuery& query, const KnowledgeGraph& graph,
                                     StructModel<S>& struct_model, TextModel<S>& text_model,
                                     int m, const FusionConfig& cfg, Rng rng,
                                     DensifyCounters* counters = nullptr,
                                     std::vector<double>* confidences = nullptr) {
  std::vector<Triple> out;
  if (m <= 0) return out;
  const std::vector<int32_t> connected = graph.connected_relations(query.head);
  std::set<int32_t> excluded(connected.begin(), connected.end());
  excluded.insert(query.relation);
  std::vector<int32_t> candidates;
  for (int32_t r = 0; r < graph.num_relations(); ++r)
    if (!excluded.count(r)) candidates.push_back(r);
  auto ranked = densifydetail::rank_candidates(struct_model, connected, candidates);
  if (static_cast<int>(ranked.size()) < m && counters) counters->short_neighbor_lists++;

  const int take = std::min<int>(m, static_cast<int>(ranked.size()));
  for (int j = 0; j < take; ++j) {
    const int32_t rel = ranked[static_cast<size_t>(j)].second;
    const auto& observed = graph.tails(query.head, rel);
    if (!observed.empty()) {
      // Unreachable for relations chosen from R2, but kept for the contract:
      // observed neighbor triples keep their ground-truth label.
      out.push_back(Triple{query.head, rel, observed.front()});
      if (counters) counters->ground_truth_labels++;
      if (confidences) confidences->push_back(1.0);
      continue;
    }
    const std::vector<S> dist = text_model.predict(query.head, rel, graph.text,
                                                   static_cast<S>(cfg.label_sample_temperature));
    // Top-10 entities by probability, ties broken by entity id.
    std::vector<int32_t> idx(dist.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int32_t>(i);
    const size_t k = std::min<size_t>(10, dist.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                      [&dist](int32_t a, int32_t b) {
                        if (dist[static_cast<size_t>(a)] != dist[static_cast<size_t>(b)])
                          return dist[static_cast<size_t>(a)] > dist[static_cast<size_t>(b)];
                        return a < b;
                      });
    std::vector<S> weights(k);
    for (size_t i = 0; i < k; ++i) weights[i] = dist[static_cast<size_t>(idx[i])];
    const size_t pick = rng.categorical(weights);
    out.push_back(Triple{query.head, rel, idx[pick]});
    if (confidences) confidences->push_back(static_cast<double>(weights[pick]));
  }
  return out;
}

// Deduplicated overlay holding every sampled neighbor triple plus its
// inverse mirror. The base graph is read-only throughout.
inline GraphOverlay build_overlay(const KnowledgeGraph& graph,
                                  const std::vector<std::vector<Triple>>& neighbor_lists,
                                  const std::vector<std::vector<double>>& confidence_lists,
                                  DensifyCounters* counters = nullptr) {
  GraphOverlay overlay;
  std::set<Triple> seen;
  for (size_t i = 0; i < neighbor_lists.size(); ++i) {
    const auto& triples = neighbor_lists[i];
    for (size_t j = 0; j < triples.size(); ++j) {
      const Triple& t = triples[j];
      const double conf =
          (i < confidence_lists.size() && j < confidence_lists[i].size()) ? confidence_lists[i][j]
                                                                          : 0.0;
      const Triple inv{t.tail, graph.inverse_relation(t.relation), t.head};
      for (const Triple& cand : {t, inv}) {
        if (graph.contains(cand)) continue;  // never duplicate a base edge
        if (!seen.insert(cand).second) continue;
        overlay.extra_triples.push_back(cand);
        overlay.confidence.push_back(conf);
      }
    }
  }
  if (counters) {
    counters->overlay_edges += static_cast<int64_t>(overlay.extra_triples.size());
    double total = 0.0;
    for (double c : overlay.confidence) total += c;
    counters->mean_label_confidence =
        overlay.confidence.empty() ? 0.0 : total / static_cast<double>(overlay.confidence.size());
  }
  return overlay;
}

// Full per-batch densification pass: N generated queries, M labeled
// neighbors each, merged into one overlay.
template <typename S>
struct DensifyResult {
  std::vector<GeneratedQuery> queries;
  GraphOverlay overlay;
};

template <typename S>
DensifyResult<S> densify_batch(const KnowledgeGraph& graph, StructModel<S>& struct_model,
                               TextModel<S>& text_model, const FusionConfig& cfg, Rng rng,
                               DensifyCounters* counters = nullptr) {
  DensifyResult<S> res;
  if (cfg.n_queries <= 0) return res;
  res.queries = generate_queries(graph, struct_model, cfg.n_queries, rng.fork("gen"), counters);
  std::vector<std::vector<Triple>> neighbor_lists;
  std::vector<std::vector<double>> confidence_lists;
  for (size_t i = 0; i < res.queries.size(); ++i) {
    res.queries[i].neighbor_slots = cfg.m_neighbors;
    std::vector<double> conf;
    neighbor_lists.push_back(sample_neighbors(res.queries[i], graph, struct_model, text_model,
                                              cfg.m_neighbors, cfg, rng.fork("label", i), counters,
                                              &conf));
    confidence_lists.push_back(std::move(conf));
  }
  res.overlay = build_overlay(graph, neighbor_lists, confidence_lists, counters);
  return res;
}

}  // namespace vemfuse
