#pragma once
// Deterministic synthetic dataset generators for tests and acceptance runs.
//
// The split-signal fixture carries two complementary kinds of evidence:
//   - chain rules r3 = r1 o r2 whose held-out compositions are answerable
//     only from graph structure (entity names are uninformative), and
//   - token rules where a class token in the head name determines the tail
//     (a per-class target entity), answerable only from text.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vemfuse/kg.hpp"

namespace vemfuse {

struct SyntheticSpec {
  int chain_rules = 2;
  int chains_per_rule = 20;
  int chain_tail_hubs = 8;  // composition tails shared among chains
  int comp_train = 6;
  int comp_valid = 7;
  int comp_test = 7;
  int token_rules = 2;
  int classes_per_rule = 4;
  int members_per_class = 12;
  int member_train = 8;
  int member_valid = 2;
  int member_test = 2;
  uint64_t seed = 1234;

  void validate() const;
};

enum class QueryTag { kStructure, kText };

struct SplitSignalFixture {
  KnowledgeGraph graph;  // unaugmented; adjacency over the train split
  TripleSplit split;
  std::unordered_map<Triple, QueryTag, TripleHash> tags;  // valid and test triples
};

SplitSignalFixture generate_split_signal(const SyntheticSpec& spec);

// Writes the dataset TSVs plus tags.tsv (head, relation, tail, tag) to dir.
void write_split_signal(const SplitSignalFixture& fixture, const std::string& dir);

// Small dense random KG for unit tests: `entities` entities, `relations`
// relations, `triples` distinct random triples.
struct RandomGraphSpec {
  int entities = 10;
  int relations = 3;
  int triples = 20;
  uint64_t seed = 7;
};
std::pair<KnowledgeGraph, TripleSplit> generate_random_graph(const RandomGraphSpec& spec);

}  // namespace vemfuse
