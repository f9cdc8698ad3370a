#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vemfuse/fixtures.hpp"
#include "vemfuse/kg_io.hpp"

using namespace vemfuse;

TEST_SUITE_BEGIN("fixtures");

TEST_CASE("default split-signal spec yields both tagged subsets with >= 50 queries") {
  auto fx = generate_split_signal(SyntheticSpec{});
  CHECK(fx.graph.num_entities() == 200);
  CHECK(fx.graph.num_relations() == 8);
  int64_t structure = 0, text = 0;
  for (const auto& [t, tag] : fx.tags) (tag == QueryTag::kStructure ? structure : text)++;
  // Evaluation is bidirectional: each tagged triple contributes two queries.
  CHECK(2 * structure >= 50);
  CHECK(2 * text >= 50);

  // Tags cover exactly the valid and test triples.
  CHECK(fx.tags.size() == fx.split.valid.size() + fx.split.test.size());
  for (const Triple& t : fx.split.valid) CHECK(fx.tags.count(t) == 1);
  for (const Triple& t : fx.split.test) CHECK(fx.tags.count(t) == 1);
  fx.graph.validate();
}

TEST_CASE("generation is deterministic in the seed") {
  auto a = generate_split_signal(SyntheticSpec{});
  auto b = generate_split_signal(SyntheticSpec{});
  CHECK(a.graph.structure_hash() == b.graph.structure_hash());
  CHECK(a.split.valid == b.split.valid);
  CHECK(a.split.test == b.split.test);

  SyntheticSpec other;
  other.seed = 999;
  auto c = generate_split_signal(other);
  CHECK((a.split.valid != c.split.valid || a.split.test != c.split.test));
}

TEST_CASE("seed repeat writes identical files") {
  const auto dir1 = std::filesystem::temp_directory_path() / "fx1";
  const auto dir2 = std::filesystem::temp_directory_path() / "fx2";
  write_split_signal(generate_split_signal(SyntheticSpec{}), dir1.string());
  write_split_signal(generate_split_signal(SyntheticSpec{}), dir2.string());
  for (const char* name : {"train.tsv", "valid.tsv", "test.tsv", "tags.tsv"}) {
    std::ifstream f1(dir1 / name), f2(dir2 / name);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(!s1.str().empty());
  }
}

TEST_CASE("inconsistent specs are rejected") {
  SyntheticSpec bad;
  bad.comp_train = 1;  // no longer sums to chains_per_rule
  CHECK_THROWS_AS(static_cast<void>(generate_split_signal(bad)), std::invalid_argument);

  SyntheticSpec empty_tag;
  empty_tag.comp_train = empty_tag.chains_per_rule;
  empty_tag.comp_valid = empty_tag.comp_test = 0;
  CHECK_THROWS_AS(static_cast<void>(generate_split_signal(empty_tag)), std::invalid_argument);

  SyntheticSpec no_rules;
  no_rules.chain_rules = 0;
  no_rules.token_rules = 0;
  CHECK_THROWS_AS(static_cast<void>(generate_split_signal(no_rules)), std::invalid_argument);
}

TEST_CASE("chain compositions are absent from the train graph") {
  auto fx = generate_split_signal(SyntheticSpec{});
  for (const auto& [t, tag] : fx.tags) {
    CHECK_FALSE(fx.graph.contains(t));
    if (tag == QueryTag::kStructure) {
      // The two chain hops supporting the composition are observed.
      bool found_hop = false;
      for (const auto& [r, b] : fx.graph.outgoing(t.head))
        if (!fx.graph.tails(b, r + 1).empty()) found_hop = true;
      CHECK(found_hop);
    }
  }
}

TEST_SUITE_END();
