#include "vemfuse/kg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vemfuse/rng.hpp"

namespace vemfuse {

int64_t TextStore::empty_entity_entries() const {
  int64_t n = 0;
  for (const auto& s : entity_text)
    if (s.empty()) ++n;
  return n;
}

int64_t TextStore::empty_relation_entries() const {
  int64_t n = 0;
  for (const auto& s : relation_text)
    if (s.empty()) ++n;
  return n;
}

int32_t KnowledgeGraph::inverse_relation(int32_t r) const {
  if (!inverse_augmented)
    throw std::logic_error("inverse_relation: graph is not inverse-augmented");
  const int32_t half = num_relations() / 2;
  return r < half ? r + half : r - half;
}

void KnowledgeGraph::rebuild_index() {
  const size_t ne = entity_names.size();
  outgoing_.assign(ne, {});
  incident_.assign(ne, {});
  hr_tails_.clear();
  for (size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    if (t.head < 0 || t.head >= num_entities() || t.tail < 0 || t.tail >= num_entities() ||
        t.relation < 0 || t.relation >= num_relations())
      throw std::out_of_range("rebuild_index: triple id out of bounds");
    outgoing_[static_cast<size_t>(t.head)].emplace_back(t.relation, t.tail);
    hr_tails_[query_key(t.head, t.relation)].push_back(t.tail);
    incident_[static_cast<size_t>(t.head)].push_back(static_cast<int32_t>(i));
    if (t.tail != t.head) incident_[static_cast<size_t>(t.tail)].push_back(static_cast<int32_t>(i));
  }
}

const std::vector<int32_t>& KnowledgeGraph::tails(int32_t head, int32_t relation) const {
  static const std::vector<int32_t> kEmpty;
  auto it = hr_tails_.find(query_key(head, relation));
  return it == hr_tails_.end() ? kEmpty : it->second;
}

bool KnowledgeGraph::contains(const Triple& t) const {
  const auto& ts = tails(t.head, t.relation);
  return std::find(ts.begin(), ts.end(), t.tail) != ts.end();
}

std::vector<Triple> KnowledgeGraph::neighbors(const Triple& t) const {
  if (t.head < 0 || t.head >= num_entities() || t.tail < 0 || t.tail >= num_entities())
    throw std::out_of_range("neighbors: entity id out of bounds");
  std::set<int32_t> idx;
  for (int32_t i : incident_[static_cast<size_t>(t.head)]) idx.insert(i);
  for (int32_t i : incident_[static_cast<size_t>(t.tail)]) idx.insert(i);
  std::vector<Triple> out;
  out.reserve(idx.size());
  for (int32_t i : idx) {
    const Triple& cand = triples[static_cast<size_t>(i)];
    if (cand == t) continue;
    out.push_back(cand);
  }
  return out;
}

std::vector<int32_t> KnowledgeGraph::connected_relations(int32_t entity) const {
  std::set<int32_t> rels;
  for (const auto& [r, t] : outgoing_[static_cast<size_t>(entity)]) rels.insert(r);
  return {rels.begin(), rels.end()};
}

uint64_t KnowledgeGraph::structure_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  mix(static_cast<uint64_t>(num_entities()));
  mix(static_cast<uint64_t>(num_relations()));
  for (const Triple& t : triples) {
    mix(static_cast<uint32_t>(t.head));
    mix(static_cast<uint32_t>(t.relation));
    mix(static_cast<uint32_t>(t.tail));
  }
  return h;
}

void KnowledgeGraph::validate() const {
  if (outgoing_.size() != entity_names.size())
    throw std::logic_error("validate: index not built");
  std::unordered_map<Triple, int64_t, TripleHash> multiset;
  for (const Triple& t : triples) multiset[t]++;
  size_t edge_count = 0;
  for (size_t h = 0; h < outgoing_.size(); ++h) {
    for (const auto& [r, t] : outgoing_[h]) {
      edge_count++;
      auto it = multiset.find(Triple{static_cast<int32_t>(h), r, t});
      if (it == multiset.end() || it->second == 0)
        throw std::logic_error("validate: stale adjacency edge");
      it->second--;
    }
  }
  if (edge_count != triples.size())
    throw std::logic_error("validate: adjacency does not cover the triple list");
  if (text.entity_text.size() != entity_names.size() ||
      text.relation_text.size() != relation_names.size())
    throw std::logic_error("validate: text store incomplete");
}

void TripleSplit::rebuild_label_index() {
  label_index.clear();
  for (const auto* part : {&train, &valid, &test})
    for (const Triple& t : *part) label_index[query_key(t.head, t.relation)].push_back(t.tail);
  for (auto& [k, v] : label_index) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

const std::vector<int32_t>& TripleSplit::labels(int32_t head, int32_t relation) const {
  static const std::vector<int32_t> kEmpty;
  auto it = label_index.find(query_key(head, relation));
  return it == label_index.end() ? kEmpty : it->second;
}

std::unordered_map<uint64_t, std::vector<int32_t>> TripleSplit::train_label_index() const {
  std::unordered_map<uint64_t, std::vector<int32_t>> idx;
  for (const Triple& t : train) idx[query_key(t.head, t.relation)].push_back(t.tail);
  for (auto& [k, v] : idx) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return idx;
}

void augment_inverse(KnowledgeGraph& graph, TripleSplit& split) {
  if (graph.inverse_augmented)
    throw std::logic_error("augment_inverse: graph is already augmented");
  const int32_t base = graph.num_relations();
  graph.relation_names.reserve(2 * static_cast<size_t>(base));
  graph.text.relation_text.reserve(2 * static_cast<size_t>(base));
  for (int32_t r = 0; r < base; ++r) {
    const std::string inv_name = graph.relation_names[static_cast<size_t>(r)] + "__inv";
    graph.relation_ids[inv_name] = base + r;
    graph.relation_names.push_back(inv_name);
    graph.text.relation_text.push_back(std::string(kInverseTextMarker) +
                                       graph.text.relation_text[static_cast<size_t>(r)]);
  }
  auto mirror = [base](std::vector<Triple>& ts) {
    const size_t n = ts.size();
    ts.reserve(2 * n);
    for (size_t i = 0; i < n; ++i)
      ts.push_back(Triple{ts[i].tail, ts[i].relation + base, ts[i].head});
  };
  mirror(graph.triples);
  mirror(split.train);
  mirror(split.valid);
  mirror(split.test);
  graph.inverse_augmented = true;
  graph.rebuild_index();
  split.rebuild_label_index();
}

TripleSplit sparsify(const TripleSplit& split, double fraction, uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("sparsify: fraction must be in (0, 1]");
  TripleSplit out = split;
  const int64_t keep = std::llround(fraction * static_cast<double>(split.train.size()));
  if (keep < static_cast<int64_t>(split.train.size())) {
    std::vector<size_t> order(split.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed).fork("sparsify");
    rng.shuffle(order);
    order.resize(static_cast<size_t>(keep));
    std::sort(order.begin(), order.end());  // keep original file order
    out.train.clear();
    out.train.reserve(order.size());
    for (size_t i : order) out.train.push_back(split.train[i]);
  }
  out.rebuild_label_index();
  return out;
}

std::vector<std::vector<double>> relation_jaccard(const KnowledgeGraph& graph) {
  if (graph.triples.empty()) throw std::invalid_argument("relation_jaccard: empty graph");
  const size_t nr = static_cast<size_t>(graph.num_relations());
  std::vector<std::set<int32_t>> heads(nr);
  for (const Triple& t : graph.triples) heads[static_cast<size_t>(t.relation)].insert(t.head);
  std::vector<std::vector<double>> m(nr, std::vector<double>(nr, 0.0));
  for (size_t i = 0; i < nr; ++i) {
    if (heads[i].empty()) continue;  // empty head set: whole row stays 0
    m[i][i] = 1.0;
    for (size_t j = i + 1; j < nr; ++j) {
      if (heads[j].empty()) continue;
      size_t inter = 0;
      const auto& a = heads[i].size() <= heads[j].size() ? heads[i] : heads[j];
      const auto& b = heads[i].size() <= heads[j].size() ? heads[j] : heads[i];
      for (int32_t e : a) inter += b.count(e);
      const size_t uni = heads[i].size() + heads[j].size() - inter;
      m[i][j] = m[j][i] = static_cast<double>(inter) / static_cast<double>(uni);
    }
  }
  return m;
}

DegreeStats degree_stats(const KnowledgeGraph& graph) {
  DegreeStats s;
  const int64_t ne = graph.num_entities();
  if (ne == 0) return s;
  int64_t active = 0;
  for (int32_t e = 0; e < ne; ++e) {
    const int64_t deg = static_cast<int64_t>(graph.outgoing(e).size());
    s.histogram[deg]++;
    if (deg > 0) ++active;
  }
  s.average_out_degree = static_cast<double>(graph.triples.size()) / static_cast<double>(ne);
  s.average_out_degree_active =
      active == 0 ? 0.0
                  : static_cast<double>(graph.triples.size()) / static_cast<double>(active);
  return s;
}

}  // namespace vemfuse
