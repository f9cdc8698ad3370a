#include "vemfuse/fixtures.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "vemfuse/kg_io.hpp"
#include "vemfuse/rng.hpp"

namespace vemfuse {

void SyntheticSpec::validate() const {
  if (chain_rules < 0 || token_rules < 0 || chain_rules + token_rules == 0)
    throw std::invalid_argument("SyntheticSpec: need at least one rule");
  if (comp_train + comp_valid + comp_test != chains_per_rule)
    throw std::invalid_argument("SyntheticSpec: composition split does not sum to chains_per_rule");
  if (member_train + member_valid + member_test != members_per_class)
    throw std::invalid_argument("SyntheticSpec: member split does not sum to members_per_class");
  if (chain_rules > 0 && (comp_valid + comp_test) == 0)
    throw std::invalid_argument("SyntheticSpec: structure-tagged subset would be empty");
  if (token_rules > 0 && (member_valid + member_test) == 0)
    throw std::invalid_argument("SyntheticSpec: text-tagged subset would be empty");
  if (chain_tail_hubs <= 0 || chain_tail_hubs > chains_per_rule)
    throw std::invalid_argument("SyntheticSpec: chain_tail_hubs out of range");
}

namespace {

const char* kColorWords[] = {"crimson", "azure",  "olive",  "ivory",  "sable",
                             "amber",   "violet", "teal",   "coral",  "jade"};
const char* kShapeWords[] = {"cube",  "prism", "torus", "wedge", "cone",
                             "helix", "blade", "ring",  "slab",  "knot"};

struct Builder {
  KnowledgeGraph g;
  TripleSplit split;

  int32_t entity(const std::string& name, const std::string& text) {
    const int32_t id = g.num_entities();
    g.entity_ids.emplace(name, id);
    g.entity_names.push_back(name);
    g.text.entity_text.push_back(text);
    return id;
  }
  int32_t relation(const std::string& name, const std::string& text) {
    const int32_t id = g.num_relations();
    g.relation_ids.emplace(name, id);
    g.relation_names.push_back(name);
    g.text.relation_text.push_back(text);
    return id;
  }
};

}  // namespace

SplitSignalFixture generate_split_signal(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SplitSignalFixture fx;
  Builder b;

  auto split_assign = [&](int count, int n_train, int n_valid, Rng r) {
    std::vector<int> kind(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) kind[static_cast<size_t>(i)] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
    r.shuffle(kind);
    return kind;
  };

  // Chain rules: (a_i, r1, b_i), (b_i, r2, c_{i mod H}) observed; the
  // composition (a_i, r3, c_{i mod H}) is split and tagged as structure.
  for (int rule = 0; rule < spec.chain_rules; ++rule) {
    const std::string tag = "chain" + std::to_string(rule);
    const int32_t r1 = b.relation("r_" + tag + "_step1", "step one " + tag);
    const int32_t r2 = b.relation("r_" + tag + "_step2", "step two " + tag);
    const int32_t r3 = b.relation("r_" + tag + "_blend", "blend " + tag);
    std::vector<int32_t> hubs;
    for (int j = 0; j < spec.chain_tail_hubs; ++j)
      hubs.push_back(b.entity("hub_" + tag + "_" + std::to_string(j),
                              "hub q" + tag + "h" + std::to_string(j)));
    const auto kinds = split_assign(spec.chains_per_rule, spec.comp_train, spec.comp_valid,
                                    rng.fork("chain-split", static_cast<uint64_t>(rule)));
    for (int i = 0; i < spec.chains_per_rule; ++i) {
      const int32_t a = b.entity("a_" + tag + "_" + std::to_string(i),
                                 "node q" + tag + "a" + std::to_string(i));
      const int32_t bb = b.entity("b_" + tag + "_" + std::to_string(i),
                                  "node q" + tag + "b" + std::to_string(i));
      const int32_t c = hubs[static_cast<size_t>(i % spec.chain_tail_hubs)];
      b.split.train.push_back(Triple{a, r1, bb});
      b.split.train.push_back(Triple{bb, r2, c});
      const Triple comp{a, r3, c};
      switch (kinds[static_cast<size_t>(i)]) {
        case 0: b.split.train.push_back(comp); break;
        case 1: b.split.valid.push_back(comp); fx.tags[comp] = QueryTag::kStructure; break;
        default: b.split.test.push_back(comp); fx.tags[comp] = QueryTag::kStructure; break;
      }
    }
  }

  // Token rules: members named with a class word relate to the per-class
  // target entity; held-out members are tagged as text.
  for (int rule = 0; rule < spec.token_rules; ++rule) {
    const bool shapes = rule % 2 == 1;
    const char** words = shapes ? kShapeWords : kColorWords;
    const std::string tag = shapes ? "shape" + std::to_string(rule) : "hue" + std::to_string(rule);
    const int32_t rel = b.relation("r_" + tag + "_match",
                                   (shapes ? "shape match " : "hue match ") + tag);
    for (int cls = 0; cls < spec.classes_per_rule; ++cls) {
      const std::string word = words[cls % 10];
      const int32_t target = b.entity("target_" + tag + "_" + std::to_string(cls),
                                      (shapes ? "bin " : "bucket ") + word);
      const auto kinds =
          split_assign(spec.members_per_class, spec.member_train, spec.member_valid,
                       rng.fork("member-split", static_cast<uint64_t>(rule * 101 + cls)));
      for (int k = 0; k < spec.members_per_class; ++k) {
        const int32_t m =
            b.entity("member_" + tag + "_" + std::to_string(cls) + "_" + std::to_string(k),
                     (shapes ? "part " : "item ") + word + " u" + tag + std::to_string(cls) + "x" +
                         std::to_string(k));
        const Triple t{m, rel, target};
        switch (kinds[static_cast<size_t>(k)]) {
          case 0: b.split.train.push_back(t); break;
          case 1: b.split.valid.push_back(t); fx.tags[t] = QueryTag::kText; break;
          default: b.split.test.push_back(t); fx.tags[t] = QueryTag::kText; break;
        }
      }
    }
  }

  b.g.text.max_len = 64;
  b.g.triples = b.split.train;
  b.g.rebuild_index();
  b.split.rebuild_label_index();
  fx.graph = std::move(b.g);
  fx.split = std::move(b.split);

  // Self-check: tagged subsets are disjoint by construction (each triple gets
  // exactly one tag) and must both be nonempty when the rules are enabled.
  int64_t n_struct = 0, n_text = 0;
  for (const auto& [t, tag] : fx.tags) (tag == QueryTag::kStructure ? n_struct : n_text)++;
  if (spec.chain_rules > 0 && n_struct == 0)
    throw std::logic_error("generate_split_signal: no structure-tagged queries");
  if (spec.token_rules > 0 && n_text == 0)
    throw std::logic_error("generate_split_signal: no text-tagged queries");
  return fx;
}

void write_split_signal(const SplitSignalFixture& fixture, const std::string& dir) {
  write_dataset(dir, fixture.graph, fixture.split);
  std::ofstream out(dir + "/tags.tsv");
  if (!out) throw std::runtime_error("cannot write " + dir + "/tags.tsv");
  std::vector<Triple> keys;
  for (const auto& [t, tag] : fixture.tags) keys.push_back(t);
  std::sort(keys.begin(), keys.end());
  for (const Triple& t : keys) {
    out << fixture.graph.entity_names[static_cast<size_t>(t.head)] << '\t'
        << fixture.graph.relation_names[static_cast<size_t>(t.relation)] << '\t'
        << fixture.graph.entity_names[static_cast<size_t>(t.tail)] << '\t'
        << (fixture.tags.at(t) == QueryTag::kStructure ? "structure" : "text") << '\n';
  }
}

std::pair<KnowledgeGraph, TripleSplit> generate_random_graph(const RandomGraphSpec& spec) {
  Rng rng(spec.seed);
  Builder b;
  for (int e = 0; e < spec.entities; ++e)
    b.entity("e" + std::to_string(e), "entity e" + std::to_string(e));
  for (int r = 0; r < spec.relations; ++r)
    b.relation("r" + std::to_string(r), "relation r" + std::to_string(r));
  std::set<Triple> seen;
  int guard = 0;
  while (static_cast<int>(seen.size()) < spec.triples) {
    if (++guard > spec.triples * 1000)
      throw std::invalid_argument("generate_random_graph: cannot place distinct triples");
    Triple t{static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(spec.entities))),
             static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(spec.relations))),
             static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(spec.entities)))};
    if (t.head == t.tail) continue;
    seen.insert(t);
  }
  b.split.train.assign(seen.begin(), seen.end());
  b.g.triples = b.split.train;
  b.g.rebuild_index();
  b.split.rebuild_label_index();
  return {std::move(b.g), std::move(b.split)};
}

}  // namespace vemfuse
