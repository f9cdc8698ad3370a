#include "vemfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <stdexcept>

#include <json.hpp>

namespace vemfuse {

double filtered_rank(const std::vector<double>& scores, int32_t target,
                     const std::vector<int32_t>& valid_others, TiePolicy policy, Rng rng) {
  if (target < 0 || target >= static_cast<int32_t>(scores.size()))
    throw std::out_of_range("filtered_rank: target out of range");
  std::unordered_set<int32_t> filtered(valid_others.begin(), valid_others.end());
  if (filtered.count(target))
    throw std::invalid_argument("filtered_rank: target present in valid_others");
  const double target_score = scores[static_cast<size_t>(target)];
  if (!std::isfinite(target_score)) throw std::invalid_argument("filtered_rank: non-finite score");
  int64_t greater = 0, ties = 0;
  for (int32_t e = 0; e < static_cast<int32_t>(scores.size()); ++e) {
    if (e == target || filtered.count(e)) continue;
    const double s = scores[static_cast<size_t>(e)];
    if (!std::isfinite(s)) throw std::invalid_argument("filtered_rank: non-finite score");
    if (s > target_score)
      ++greater;
    else if (s == target_score)
      ++ties;
  }
  if (policy == TiePolicy::kExpected)
    return static_cast<double>(greater) + 1.0 + static_cast<double>(ties) / 2.0;
  // RANDOM: target uniformly placed among the ties+1 equal-scored candidates.
  const uint64_t offset = rng.uniform_int(static_cast<uint64_t>(ties) + 1);
  return static_cast<double>(greater) + 1.0 + static_cast<double>(offset);
}

namespace {

std::vector<int32_t> others(const std::vector<int32_t>& labels, int32_t target) {
  std::vector<int32_t> out;
  out.reserve(labels.size());
  for (int32_t t : labels)
    if (t != target) out.push_back(t);
  return out;
}

}  // namespace

EvalResult evaluate(QueryScorer& scorer, const KnowledgeGraph& graph, const TripleSplit& split,
                    const std::vector<Triple>& eval_triples, const EvalOptions& opts) {
  if (!graph.inverse_augmented)
    throw std::logic_error("evaluate: graph must be inverse-augmented");
  const int32_t half = graph.num_relations() / 2;

  // Base-direction triples only; the inverse direction is derived per query.
  std::vector<Triple> triples;
  for (const Triple& t : eval_triples)
    if (t.relation < half) triples.push_back(t);
  if (opts.max_triples >= 0 && static_cast<int64_t>(triples.size()) > opts.max_triples) {
    Rng sub = Rng(opts.seed).fork("eval-subsample");
    sub.shuffle(triples);
    triples.resize(static_cast<size_t>(opts.max_triples));
  }

  EvalResult res;
  res.ranks.reserve(triples.size() * 2);
  double mrr = 0.0, mrr_tail = 0.0, mrr_head = 0.0;
  std::map<int, int64_t> hit_counts{{1, 0}, {3, 0}, {10, 0}};
  int64_t q_index = 0;

  auto run_query = [&](int32_t h, int32_t r, int32_t target, bool head_dir) {
    const std::vector<double> scores = scorer.score(h, r);
    const auto& labels = split.labels(h, r);
    // Per-query tie stream keyed by the query identity, so evaluation order
    // (and worker partitioning) never changes results.
    uint64_t qid = 0xcbf29ce484222325ULL;
    for (uint64_t v : {static_cast<uint64_t>(static_cast<uint32_t>(h)),
                       static_cast<uint64_t>(static_cast<uint32_t>(r)),
                       static_cast<uint64_t>(static_cast<uint32_t>(target)),
                       static_cast<uint64_t>(head_dir ? 1 : 0)}) {
      qid ^= v;
      qid *= 0x100000001b3ULL;
    }
    Rng tie_rng = Rng(opts.seed).fork("tie", qid);
    const double rank =
        filtered_rank(scores, target, others(labels, target), opts.tie_policy, tie_rng);
    RankResult rr;
    rr.head = h;
    rr.relation = r;
    rr.target = target;
    rr.head_direction = head_dir;
    rr.rank = rank;
    if (opts.top_k > 0) {
      std::vector<int32_t> idx(scores.size());
      for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int32_t>(i);
      const size_t k = std::min<size_t>(static_cast<size_t>(opts.top_k), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(k), idx.end(),
                        [&scores](int32_t a, int32_t b) {
                          if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
                            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
                          return a < b;
                        });
      for (size_t i = 0; i < k; ++i)
        rr.top_k.emplace_back(idx[i], scores[static_cast<size_t>(idx[i])]);
    }
    res.ranks.push_back(std::move(rr));
    mrr += 1.0 / rank;
    (head_dir ? mrr_head : mrr_tail) += 1.0 / rank;
    for (auto& [k, n] : hit_counts)
      if (rank <= static_cast<double>(k)) ++n;
    ++q_index;
  };

  for (const Triple& t : triples) {
    run_query(t.head, t.relation, t.tail, false);
    run_query(t.tail, graph.inverse_relation(t.relation), t.head, true);
  }

  const int64_t n = q_index;
  res.metrics.query_count = n;
  if (n > 0) {
    res.metrics.mrr = mrr / static_cast<double>(n);
    res.metrics.mrr_tail = mrr_tail / static_cast<double>(n / 2);
    res.metrics.mrr_head = mrr_head / static_cast<double>(n / 2);
    for (auto& [k, c] : hit_counts)
      res.metrics.hits_at[k] = static_cast<double>(c) / static_cast<double>(n);
  }
  return res;
}

EvalResult evaluate_parallel(const std::vector<QueryScorer*>& scorers,
                             const KnowledgeGraph& graph, const TripleSplit& split,
                             const std::vector<Triple>& eval_triples, const EvalOptions& opts) {
  if (scorers.empty()) throw std::invalid_argument("evaluate_parallel: no scorers");
  if (scorers.size() == 1) return evaluate(*scorers[0], graph, split, eval_triples, opts);

  // Subsample once up front, then split into contiguous chunks.
  const int32_t half = graph.num_relations() / 2;
  std::vector<Triple> triples;
  for (const Triple& t : eval_triples)
    if (t.relation < half) triples.push_back(t);
  if (opts.max_triples >= 0 && static_cast<int64_t>(triples.size()) > opts.max_triples) {
    Rng sub = Rng(opts.seed).fork("eval-subsample");
    sub.shuffle(triples);
    triples.resize(static_cast<size_t>(opts.max_triples));
  }
  EvalOptions chunk_opts = opts;
  chunk_opts.max_triples = -1;

  const size_t workers = scorers.size();
  std::vector<EvalResult> partial(workers);
  std::vector<std::thread> threads;
  const size_t chunk = (triples.size() + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t lo = std::min(w * chunk, triples.size());
    const size_t hi = std::min(lo + chunk, triples.size());
    threads.emplace_back([&, w, lo, hi]() {
      std::vector<Triple> mine(triples.begin() + static_cast<long>(lo),
                               triples.begin() + static_cast<long>(hi));
      partial[w] = evaluate(*scorers[w], graph, split, mine, chunk_opts);
    });
  }
  for (auto& t : threads) t.join();

  // Chunk order preserves the sequential rank-stream order, so recomputing
  // the metrics in one pass reproduces the single-worker run byte for byte.
  EvalResult merged;
  for (const EvalResult& r : partial)
    merged.ranks.insert(merged.ranks.end(), r.ranks.begin(), r.ranks.end());
  double mrr = 0.0, mrr_tail = 0.0, mrr_head = 0.0;
  std::map<int, int64_t> hit_counts{{1, 0}, {3, 0}, {10, 0}};
  for (const RankResult& rr : merged.ranks) {
    mrr += 1.0 / rr.rank;
    (rr.head_direction ? mrr_head : mrr_tail) += 1.0 / rr.rank;
    for (auto& [k, c] : hit_counts)
      if (rr.rank <= static_cast<double>(k)) ++c;
  }
  const int64_t n = static_cast<int64_t>(merged.ranks.size());
  merged.metrics.query_count = n;
  if (n > 0) {
    merged.metrics.mrr = mrr / static_cast<double>(n);
    merged.metrics.mrr_tail = mrr_tail / static_cast<double>(n / 2);
    merged.metrics.mrr_head = mrr_head / static_cast<double>(n / 2);
    for (auto& [k, c] : hit_counts)
      merged.metrics.hits_at[k] = static_cast<double>(c) / static_cast<double>(n);
  }
  return merged;
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["mrr"] = m.mrr;
  j["hits@1"] = m.hits_at.count(1) ? m.hits_at.at(1) : 0.0;
  j["hits@3"] = m.hits_at.count(3) ? m.hits_at.at(3) : 0.0;
  j["hits@10"] = m.hits_at.count(10) ? m.hits_at.at(10) : 0.0;
  j["mrr_tail_direction"] = m.mrr_tail;
  j["mrr_head_direction"] = m.mrr_head;
  j["query_count"] = m.query_count;
  return j.dump(2);
}

namespace {

uint64_t rank_key(const RankResult& r) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  mix(static_cast<uint32_t>(r.head));
  mix(static_cast<uint32_t>(r.relation));
  mix(static_cast<uint32_t>(r.target));
  mix(r.head_direction ? 1u : 0u);
  return h;
}

std::unordered_map<uint64_t, double> rank_map(const std::vector<RankResult>& rs) {
  std::unordered_map<uint64_t, double> m;
  m.reserve(rs.size());
  for (const auto& r : rs) m[rank_key(r)] = r.rank;
  return m;
}

}  // namespace

std::map<int32_t, int64_t> improvement_diff(const std::vector<RankResult>& before,
                                            const std::vector<RankResult>& after) {
  if (before.size() != after.size())
    throw std::invalid_argument("improvement_diff: query sets differ in size");
  const auto after_map = rank_map(after);
  std::map<int32_t, int64_t> counts;
  for (const RankResult& b : before) {
    auto it = after_map.find(rank_key(b));
    if (it == after_map.end())
      throw std::invalid_argument("improvement_diff: query sets do not match");
    if (it->second < b.rank) counts[b.relation]++;
  }
  return counts;
}

std::pair<std::map<int32_t, int64_t>, std::map<int32_t, int64_t>> improvement_diff_exclusive(
    const std::vector<RankResult>& before, const std::vector<RankResult>& after_a,
    const std::vector<RankResult>& after_b) {
  if (before.size() != after_a.size() || before.size() != after_b.size())
    throw std::invalid_argument("improvement_diff_exclusive: query sets differ in size");
  const auto map_a = rank_map(after_a);
  const auto map_b = rank_map(after_b);
  std::map<int32_t, int64_t> counts_a, counts_b;
  for (const RankResult& base : before) {
    const uint64_t key = rank_key(base);
    auto ia = map_a.find(key);
    auto ib = map_b.find(key);
    if (ia == map_a.end() || ib == map_b.end())
      throw std::invalid_argument("improvement_diff_exclusive: query sets do not match");
    const bool improved_a = ia->second < base.rank;
    const bool improved_b = ib->second < base.rank;
    if (improved_a && !improved_b) counts_a[base.relation]++;
    if (improved_b && !improved_a) counts_b[base.relation]++;
  }
  return {counts_a, counts_b};
}

std::vector<TopKResult> dump_topk(QueryScorer& scorer, const std::vector<Triple>& queries, int k) {
  if (k < 1) throw std::invalid_argument("dump_topk: k must be >= 1");
  std::vector<TopKResult> out;
  out.reserve(queries.size());
  for (const Triple& q : queries) {
    const std::vector<double> scores = scorer.score(q.head, q.relation);
    TopKResult r;
    r.head = q.head;
    r.relation = q.relation;
    r.gold = q.tail;
    const double gold_score = scores[static_cast<size_t>(q.tail)];
    int64_t greater = 0;
    for (double s : scores)
      if (s > gold_score) ++greater;
    r.gold_rank = static_cast<double>(greater) + 1.0;
    std::vector<int32_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int32_t>(i);
    const size_t kk = std::min<size_t>(static_cast<size_t>(k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(kk), idx.end(),
                      [&scores](int32_t a, int32_t b) {
                        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
                          return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
                        return a < b;
                      });
    for (size_t i = 0; i < kk; ++i)
      r.candidates.emplace_back(idx[i], scores[static_cast<size_t>(idx[i])]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vemfuse
