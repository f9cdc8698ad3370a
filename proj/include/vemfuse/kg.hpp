#pragma once
// Knowledge-graph data model: entities, relations (with inverse
// augmentation), indexed triple store, text store, dataset splits and the
// analytics used for dataset reports. Graph and split are immutable after
// construction; all mutators return new objects.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace vemfuse {

struct Triple {
  int32_t head = -1;
  int32_t relation = -1;
  int32_t tail = -1;

  bool operator==(const Triple& o) const {
    return head == o.head && relation == o.relation && tail == o.tail;
  }
  bool operator<(const Triple& o) const {
    if (head != o.head) return head < o.head;
    if (relation != o.relation) return relation < o.relation;
    return tail < o.tail;
  }
};

struct TripleHash {
  size_t operator()(const Triple& t) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    };
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.head)));
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.relation)));
    mix(static_cast<uint64_t>(static_cast<uint32_t>(t.tail)));
    return static_cast<size_t>(h);
  }
};

inline uint64_t query_key(int32_t head, int32_t relation) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(head)) << 32) |
         static_cast<uint32_t>(relation);
}

// Raw text attached to every entity and relation id (possibly empty).
struct TextStore {
  std::vector<std::string> entity_text;
  std::vector<std::string> relation_text;
  int max_len = 64;  // retained words per description

  int64_t empty_entity_entries() const;
  int64_t empty_relation_entries() const;
};

// Literal prefix marking the text of an inverse relation.
inline constexpr const char* kInverseTextMarker = "inverse of ";

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Construction: ids are assigned by the loader; triples are the train-split
  // adjacency. rebuild_index() must be called after the triple list is final.
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::unordered_map<std::string, int32_t> entity_ids;
  std::unordered_map<std::string, int32_t> relation_ids;
  std::vector<Triple> triples;
  TextStore text;
  bool inverse_augmented = false;

  int32_t num_entities() const { return static_cast<int32_t>(entity_names.size()); }
  int32_t num_relations() const { return static_cast<int32_t>(relation_names.size()); }

  int32_t inverse_relation(int32_t r) const;

  void rebuild_index();

  // (relation, tail) pairs leaving an entity.
  const std::vector<std::pair<int32_t, int32_t>>& outgoing(int32_t entity) const {
    return outgoing_[static_cast<size_t>(entity)];
  }
  // Tails stored for a (head, relation) pair; empty set if none.
  const std::vector<int32_t>& tails(int32_t head, int32_t relation) const;
  bool contains(const Triple& t) const;

  // Indices into `triples` touching an entity (as head or tail).
  const std::vector<int32_t>& incident(int32_t entity) const {
    return incident_[static_cast<size_t>(entity)];
  }

  // All stored triples sharing at least one entity with `t`, excluding `t`.
  std::vector<Triple> neighbors(const Triple& t) const;

  // Relations r with at least one outgoing (h, r, *) edge for h = entity.
  std::vector<int32_t> connected_relations(int32_t entity) const;

  // Order-sensitive structural fingerprint used to assert immutability.
  uint64_t structure_hash() const;

  // Throws if any id is out of bounds or the index disagrees with `triples`.
  void validate() const;

 private:
  std::vector<std::vector<std::pair<int32_t, int32_t>>> outgoing_;
  std::unordered_map<uint64_t, std::vector<int32_t>> hr_tails_;
  std::vector<std::vector<int32_t>> incident_;
};

struct TripleSplit {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  // (h, r) -> sorted tails valid anywhere in train/valid/test, for filtering.
  std::unordered_map<uint64_t, std::vector<int32_t>> label_index;

  void rebuild_label_index();
  const std::vector<int32_t>& labels(int32_t head, int32_t relation) const;
  // Tails valid in the train split only (supervision targets).
  std::unordered_map<uint64_t, std::vector<int32_t>> train_label_index() const;
};

// Statistics accumulated while loading (reported in stats JSON).
struct LoadReport {
  int64_t duplicate_triples = 0;           // within-split duplicates dropped
  int64_t unseen_eval_entities = 0;        // entities absent from train
  int64_t unseen_eval_relations = 0;
  int64_t empty_entity_text = 0;
  int64_t empty_relation_text = 0;
};

// ---- operations -------------------------------------------------------------

// Adds mirror triples (t, inv(r), h) for every (h, r, t); doubles the
// relation vocabulary; inverse relation text is the original prefixed with
// the inverse marker. Throws if already augmented.
void augment_inverse(KnowledgeGraph& graph, TripleSplit& split);

// Uniform train subsample of round(fraction * |train|) triples.
TripleSplit sparsify(const TripleSplit& split, double fraction, uint64_t seed);

// M[i][j] = |H_i cap H_j| / |H_i cup H_j| over head-entity sets per relation.
std::vector<std::vector<double>> relation_jaccard(const KnowledgeGraph& graph);

struct DegreeStats {
  double average_out_degree = 0.0;         // |T_train| / |E|
  double average_out_degree_active = 0.0;  // |T_train| / #entities with out-edges
  std::map<int64_t, int64_t> histogram;    // out-degree -> entity count
};
DegreeStats degree_stats(const KnowledgeGraph& graph);

}  // namespace vemfuse
