#pragma once
// Structure-based model p_theta: relational message passing with a
// composition operator over the (possibly densified) graph, and a
// bilinear-diagonal decoder scoring every entity for a query.

#include <cstdint>
#include <string>
#include <vector>

#include "vemfuse/dist.hpp"
#include "vemfuse/kg.hpp"
#include "vemfuse/rng.hpp"
#include "vemfuse/tape.hpp"
#include "vemfuse/tensor.hpp"

namespace vemfuse {

// Temporary densification edges layered over the base graph for one batch.
// Never mutates the base graph; inverse mirrors are stored explicitly.
struct GraphOverlay {
  std::vector<Triple> extra_triples;
  std::vector<double> confidence;  // per stored triple, from q_pi

  bool empty() const { return extra_triples.empty(); }
  size_t size() const { return extra_triples.size(); }
};

enum class Activation { kTanh, kIdentity, kRelu };

struct StructConfig {
  int dim = 64;
  int layers = 1;
  Composition composition = Composition::kSubtract;
  Activation activation = Activation::kTanh;
};

// Flattened per-direction edge arrays for one (graph + overlay) topology.
template <typename S>
struct PreparedGraph {
  std::vector<AggEdge> in_edges;   // dst aggregates phi(head, rel), dst = tail
  std::vector<AggEdge> out_edges;  // dst aggregates phi(tail, rel), dst = head
  std::vector<S> in_norm;          // 1/in-degree per entity (0 if isolated)
  std::vector<S> out_norm;

  static PreparedGraph build(const KnowledgeGraph& graph, const GraphOverlay* overlay) {
    PreparedGraph pg;
    const size_t ne = static_cast<size_t>(graph.num_entities());
    std::vector<int64_t> in_deg(ne, 0), out_deg(ne, 0);
    auto add = [&](const Triple& t) {
      pg.in_edges.push_back(AggEdge{t.head, t.relation, t.tail});
      pg.out_edges.push_back(AggEdge{t.tail, t.relation, t.head});
      in_deg[static_cast<size_t>(t.tail)]++;
      out_deg[static_cast<size_t>(t.head)]++;
    };
    for (const Triple& t : graph.triples) add(t);
    if (overlay)
      for (const Triple& t : overlay->extra_triples) add(t);
    pg.in_norm.resize(ne);
    pg.out_norm.resize(ne);
    for (size_t i = 0; i < ne; ++i) {
      pg.in_norm[i] = in_deg[i] > 0 ? S(1) / static_cast<S>(in_deg[i]) : S(0);
      pg.out_norm[i] = out_deg[i] > 0 ? S(1) / static_cast<S>(out_deg[i]) : S(0);
    }
    return pg;
  }
};

template <typename S>
class StructModel {
 public:
  struct Encoded {
    typename Tape<S>::Var entities;   // |E| x d
    typename Tape<S>::Var relations;  // |R_aug| x d
  };

  StructModel(const KnowledgeGraph& graph, StructConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng(seed).fork("init-struct");
    const int64_t d = cfg.dim;
    entity_emb_ = Parameter<S>("struct.entity_emb",
                               Tensor<S>::glorot(graph.num_entities(), d, rng));
    relation_emb_ = Parameter<S>("struct.relation_emb",
                                 Tensor<S>::glorot(graph.num_relations(), d, rng));
    layers_.resize(static_cast<size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string p = "struct.layer" + std::to_string(l) + ".";
      layers_[l].w_in = Parameter<S>(p + "w_in", Tensor<S>::glorot(d, d, rng));
      layers_[l].w_out = Parameter<S>(p + "w_out", Tensor<S>::glorot(d, d, rng));
      layers_[l].w_self = Parameter<S>(p + "w_self", Tensor<S>::glorot(d, d, rng));
      layers_[l].w_rel = Parameter<S>(p + "w_rel", Tensor<S>::glorot(d, d, rng));
    }
  }

  const StructConfig& config() const { return cfg_; }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> ps{&entity_emb_, &relation_emb_};
    for (auto& l : layers_) {
      ps.push_back(&l.w_in);
      ps.push_back(&l.w_out);
      ps.push_back(&l.w_self);
      ps.push_back(&l.w_rel);
    }
    return ps;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  Parameter<S>& entity_embedding() { return entity_emb_; }
  Parameter<S>& relation_embedding_matrix() { return relation_emb_; }

  // Input-layer relation embedding row (pre-message-passing).
  std::vector<S> relation_embedding(int32_t r) const {
    if (r < 0 || r >= relation_emb_.value.rows())
      throw std::out_of_range("relation_embedding: invalid relation id");
    const S* p = relation_emb_.value.row_ptr(r);
    return std::vector<S>(p, p + relation_emb_.value.cols());
  }

  // L rounds of per-direction mean aggregation plus self-loop transform.
  Encoded encode(Tape<S>& tape, const PreparedGraph<S>& pg) {
    auto ents = tape.leaf(entity_emb_);
    auto rels = tape.leaf(relation_emb_);
    for (auto& layer : layers_) {
      auto agg_in = tape.compose_aggregate(ents, rels, pg.in_edges, pg.in_norm, cfg_.composition);
      auto agg_out =
          tape.compose_aggregate(ents, rels, pg.out_edges, pg.out_norm, cfg_.composition);
      auto pre = tape.add(tape.add(tape.matmul(agg_in, tape.leaf(layer.w_in)),
                                   tape.matmul(agg_out, tape.leaf(layer.w_out))),
                          tape.matmul(ents, tape.leaf(layer.w_self)));
      ents = activate(tape, pre);
      rels = tape.matmul(rels, tape.leaf(layer.w_rel));
    }
    return Encoded{ents, rels};
  }

  // Bilinear-diagonal logits for a batch of (head, relation) queries: B x |E|.
  typename Tape<S>::Var score_queries(Tape<S>& tape, const Encoded& enc,
                                      const std::vector<std::pair<int32_t, int32_t>>& queries) {
    std::vector<int64_t> h_rows, r_rows;
    h_rows.reserve(queries.size());
    r_rows.reserve(queries.size());
    for (const auto& [h, r] : queries) {
      h_rows.push_back(h);
      r_rows.push_back(r);
    }
    auto hq = tape.gather_rows(enc.entities, std::move(h_rows));
    auto rq = tape.gather_rows(enc.relations, std::move(r_rows));
    return tape.matmul(tape.mul(hq, rq), enc.entities, false, true);
  }

  // Value-level predictive distribution for one query under graph+overlay.
  std::vector<S> predict(int32_t head, int32_t relation, const KnowledgeGraph& graph,
                         const GraphOverlay* overlay, S temperature) {
    auto pg = PreparedGraph<S>::build(graph, overlay);
    Tape<S> tape;
    auto enc = encode(tape, pg);
    auto logits = score_queries(tape, enc, {{head, relation}});
    const Tensor<S>& t = tape.val(logits);
    std::vector<S> row(t.data.begin(), t.data.end());
    return softmax_t(row, temperature);
  }

  // Batch of value-level distributions sharing one encode pass.
  std::vector<std::vector<S>> predict_batch(const std::vector<std::pair<int32_t, int32_t>>& queries,
                                            const KnowledgeGraph& graph,
                                            const GraphOverlay* overlay, S temperature) {
    auto pg = PreparedGraph<S>::build(graph, overlay);
    Tape<S> tape;
    auto enc = encode(tape, pg);
    auto logits = score_queries(tape, enc, queries);
    const Tensor<S>& t = tape.val(logits);
    std::vector<std::vector<S>> out;
    out.reserve(queries.size());
    for (int64_t i = 0; i < t.rows(); ++i) {
      std::vector<S> row(t.row_ptr(i), t.row_ptr(i) + t.cols());
      out.push_back(softmax_t(row, temperature));
    }
    return out;
  }

 private:
  struct Layer {
    Parameter<S> w_in, w_out, w_self, w_rel;
  };

  typename Tape<S>::Var activate(Tape<S>& tape, typename Tape<S>::Var x) {
    switch (cfg_.activation) {
      case Activation::kTanh: return tape.tanh_(x);
      case Activation::kRelu: return tape.relu(x);
      case Activation::kIdentity: return x;
    }
    return x;
  }

  StructConfig cfg_;
  Parameter<S> entity_emb_, relation_emb_;
  std::vector<Layer> layers_;
};

}  // namespace vemfuse
