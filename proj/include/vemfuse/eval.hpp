#pragma once
// Filtered bidirectional ranking evaluation with the RANDOM tie protocol,
// MRR/Hits@k metrics, per-relation improvement diffs and top-k dumps.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "vemfuse/kg.hpp"
#include "vemfuse/rng.hpp"
#include "vemfuse/struct_encoder.hpp"
#include "vemfuse/text_encoder.hpp"

namespace vemfuse {

enum class TiePolicy { kRandom, kExpected };

struct Metrics {
  double mrr = 0.0;
  std::map<int, double> hits_at;  // k in {1, 3, 10}
  int64_t query_count = 0;
  // Sub-metrics per direction: [0] = tail prediction, [1] = head prediction.
  double mrr_tail = 0.0;
  double mrr_head = 0.0;
};

struct RankResult {
  int32_t head = -1;       // query head as asked (augmented direction)
  int32_t relation = -1;   // query relation as asked
  int32_t target = -1;
  bool head_direction = false;
  double rank = 0.0;       // filtered rank (fractional under EXPECTED ties)
  std::vector<std::pair<int32_t, double>> top_k;  // optional score dump
};

// Rank of `target` among all entities minus `valid_others`. RANDOM places the
// target uniformly among equal-scored candidates; EXPECTED uses ties/2.
double filtered_rank(const std::vector<double>& scores, int32_t target,
                     const std::vector<int32_t>& valid_others, TiePolicy policy, Rng rng);

// Read-only scoring interface over a model snapshot.
class QueryScorer {
 public:
  virtual ~QueryScorer() = default;
  virtual std::vector<double> score(int32_t head, int32_t relation) = 0;
};

// Structure model adapter: encodes the base graph once, scores from cache.
template <typename S>
class StructScorer : public QueryScorer {
 public:
  StructScorer(StructModel<S>& model, const KnowledgeGraph& graph) {
    auto pg = PreparedGraph<S>::build(graph, nullptr);
    Tape<S> tape;
    auto enc = model.encode(tape, pg);
    entities_ = tape.val(enc.entities).template cast<double>();
    relations_ = tape.val(enc.relations).template cast<double>();
  }

  std::vector<double> score(int32_t head, int32_t relation) override {
    const int64_t d = entities_.cols();
    const int64_t ne = entities_.rows();
    std::vector<double> q(static_cast<size_t>(d));
    const double* h = entities_.row_ptr(head);
    const double* r = relations_.row_ptr(relation);
    for (int64_t j = 0; j < d; ++j) q[static_cast<size_t>(j)] = h[j] * r[j];
    std::vector<double> out(static_cast<size_t>(ne), 0.0);
    for (int64_t e = 0; e < ne; ++e) {
      const double* row = entities_.row_ptr(e);
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j) acc += q[static_cast<size_t>(j)] * row[j];
      out[static_cast<size_t>(e)] = acc;
    }
    return out;
  }

 private:
  Tensor<double> entities_;
  Tensor<double> relations_;
};

// Text model adapter: one sequence-encoder forward per query, |E|-way logits
// from the pooled vector (widened to 64-bit for tie detection).
template <typename S>
class TextScorer : public QueryScorer {
 public:
  TextScorer(TextModel<S>& model, const KnowledgeGraph& graph)
      : model_(model), graph_(graph) {}

  std::vector<double> score(int32_t head, int32_t relation) override {
    Tape<S> tape;
    auto logits = model_.score_queries(tape, {model_.assemble(head, relation, graph_.text)});
    const Tensor<S>& t = tape.val(logits);
    std::vector<double> out(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) out[i] = static_cast<double>(t.data[i]);
    return out;
  }

 private:
  TextModel<S>& model_;
  const KnowledgeGraph& graph_;
};

struct EvalOptions {
  TiePolicy tie_policy = TiePolicy::kRandom;
  uint64_t seed = 0;
  int top_k = 0;             // if > 0, record top-k candidates per query
  int64_t max_triples = -1;  // if >= 0, evaluate on a fixed seeded subsample
};

struct EvalResult {
  Metrics metrics;
  std::vector<RankResult> ranks;
};

// Ranks t for (h, r, ?) and h for (t, inv(r), ?) on every triple of the
// chosen split; metrics are averaged over all 2*|T| rankings.
EvalResult evaluate(QueryScorer& scorer, const KnowledgeGraph& graph, const TripleSplit& split,
                    const std::vector<Triple>& eval_triples, const EvalOptions& opts);

// Fans the evaluation out over one scorer per worker thread. Per-query tie
// seeds are derived from the query identity, so the partitioning does not
// change any rank; metrics equal the sequential run.
EvalResult evaluate_parallel(const std::vector<QueryScorer*>& scorers,
                             const KnowledgeGraph& graph, const TripleSplit& split,
                             const std::vector<Triple>& eval_triples, const EvalOptions& opts);

std::string metrics_to_json(const Metrics& m);

// Per-relation count of queries whose filtered rank strictly decreased.
std::map<int32_t, int64_t> improvement_diff(const std::vector<RankResult>& before,
                                            const std::vector<RankResult>& after);

// Two-method comparison with the common-case filter: counts only queries
// improved (vs the shared baseline) by exactly one of the two methods.
std::pair<std::map<int32_t, int64_t>, std::map<int32_t, int64_t>> improvement_diff_exclusive(
    const std::vector<RankResult>& before, const std::vector<RankResult>& after_a,
    const std::vector<RankResult>& after_b);

// Top-k candidates (score desc, stable by entity id) with the gold rank.
struct TopKResult {
  int32_t head = -1;
  int32_t relation = -1;
  int32_t gold = -1;
  double gold_rank = 0.0;  // unfiltered rank of the gold answer
  std::vector<std::pair<int32_t, double>> candidates;
};
std::vector<TopKResult> dump_topk(QueryScorer& scorer,
                                  const std::vector<Triple>& queries, int k);

}  // namespace vemfuse
