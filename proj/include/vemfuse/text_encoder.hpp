#pragma once
// Text-based model q_pi: tokenizes the query's head and relation text into
// [CLS] d(h) [SEP] d(r) [SEP], encodes the sequence with token+position
// embeddings (optionally one self-attention block) and classifies over all
// entities from the pooled vector.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vemfuse/dist.hpp"
#include "vemfuse/kg.hpp"
#include "vemfuse/rng.hpp"
#include "vemfuse/tape.hpp"
#include "vemfuse/tensor.hpp"

namespace vemfuse {

struct Vocab {
  // Reserved ids below ordinary tokens.
  static constexpr int32_t kCls = 0;
  static constexpr int32_t kSep = 1;
  static constexpr int32_t kPad = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kInv = 4;  // inverse-relation marker
  static constexpr int32_t kNumSpecial = 5;

  std::unordered_map<std::string, int32_t> token_ids;
  std::vector<std::string> tokens;  // ordinary tokens, id = index + kNumSpecial

  int32_t size() const { return kNumSpecial + static_cast<int32_t>(tokens.size()); }
  int32_t lookup(const std::string& tok) const {
    auto it = token_ids.find(tok);
    return it == token_ids.end() ? kUnk : it->second;
  }
};

// Lowercased alphanumeric tokenization; punctuation and whitespace delimit.
std::vector<std::string> tokenize(const std::string& text);

// Tokens with corpus frequency >= min_count get ids, ordered by frequency
// descending then lexicographic; everything else maps to [UNK].
Vocab build_vocab(const TextStore& store, int min_count);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

struct AssembleStats {
  int64_t empty_text_queries = 0;
};

// [CLS] head-text [SEP] relation-text [SEP], capped at max_len tokens.
// The relation segment is protected up to max_len/4 tokens; beyond that it is
// cut and the head segment absorbs the rest of the reduction. Relation text
// starting with the inverse marker contributes the [INV] special token.
std::vector<int32_t> assemble_input(int32_t head, int32_t relation, const TextStore& store,
                                    const Vocab& vocab, int max_len,
                                    AssembleStats* stats = nullptr);

enum class Pooling { kCls, kMean };

struct TextConfig {
  int dim = 64;
  int max_len = 64;
  bool use_attention = true;
  Pooling pooling = Pooling::kCls;
  int min_count = 1;
};

template <typename S>
class TextModel {
 public:
  TextModel(const KnowledgeGraph& graph, Vocab vocab, TextConfig cfg, uint64_t seed)
      : cfg_(cfg), vocab_(std::move(vocab)) {
    Rng rng = Rng(seed).fork("init-text");
    const int64_t v = vocab_.size();
    const int64_t d = cfg.dim;
    token_emb_ = Parameter<S>("text.token_emb", Tensor<S>::glorot(v, d, rng));
    pos_emb_ = Parameter<S>("text.pos_emb", Tensor<S>::glorot(cfg.max_len, d, rng));
    entity_out_ = Parameter<S>("text.entity_out",
                               Tensor<S>::glorot(graph.num_entities(), d, rng));
    if (cfg.use_attention) {
      wq_ = Parameter<S>("text.attn.wq", Tensor<S>::glorot(d, d, rng));
      wk_ = Parameter<S>("text.attn.wk", Tensor<S>::glorot(d, d, rng));
      wv_ = Parameter<S>("text.attn.wv", Tensor<S>::glorot(d, d, rng));
      wo_ = Parameter<S>("text.attn.wo", Tensor<S>::glorot(d, d, rng));
    }
  }

  const TextConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  AssembleStats& assemble_stats() { return assemble_stats_; }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> ps{&token_emb_, &pos_emb_, &entity_out_};
    if (cfg_.use_attention) {
      ps.push_back(&wq_);
      ps.push_back(&wk_);
      ps.push_back(&wv_);
      ps.push_back(&wo_);
    }
    return ps;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  int64_t forward_count() const { return forward_count_; }
  void reset_forward_count() { forward_count_ = 0; }

  std::vector<int32_t> assemble(int32_t head, int32_t relation, const TextStore& store) {
    return assemble_input(head, relation, store, vocab_, cfg_.max_len, &assemble_stats_);
  }

  // One sequence-encoder forward: token ids -> pooled d-vector (1 x d).
  typename Tape<S>::Var encode_sequence(Tape<S>& tape, const std::vector<int32_t>& tokens) {
    ++forward_count_;
    const int64_t len = static_cast<int64_t>(tokens.size());
    std::vector<int64_t> tok_rows(tokens.begin(), tokens.end());
    std::vector<int64_t> pos_rows(static_cast<size_t>(len));
    for (int64_t i = 0; i < len; ++i) pos_rows[static_cast<size_t>(i)] = i;
    auto x = tape.add(tape.gather_rows(token_emb_, std::move(tok_rows)),
                      tape.gather_rows(pos_emb_, std::move(pos_rows)));
    if (cfg_.use_attention) {
      auto q = tape.matmul(x, tape.leaf(wq_));
      auto k = tape.matmul(x, tape.leaf(wk_));
      auto v = tape.matmul(x, tape.leaf(wv_));
      auto scores = tape.scale(tape.matmul(q, k, false, true),
                               S(1) / std::sqrt(static_cast<S>(cfg_.dim)));
      auto attn = tape.softmax_rows_t(scores, S(1));
      auto ctx = tape.matmul(tape.matmul(attn, v), tape.leaf(wo_));
      x = tape.add(x, ctx);
    }
    if (cfg_.pooling == Pooling::kCls) return tape.select_row(x, 0);
    Tensor<S> w = Tensor<S>::full({1, len}, S(1) / static_cast<S>(len));
    return tape.matmul(tape.constant(std::move(w)), x);
  }

  // Batch logits over all entities: one encoder forward per query.
  typename Tape<S>::Var score_queries(Tape<S>& tape,
                                      const std::vector<std::vector<int32_t>>& sequences) {
    std::vector<typename Tape<S>::Var> pooled;
    pooled.reserve(sequences.size());
    for (const auto& seq : sequences) pooled.push_back(encode_sequence(tape, seq));
    auto mat = tape.concat_rows(pooled);
    return tape.matmul(mat, tape.leaf(entity_out_), false, true);
  }

  // Value-level predictive distribution for one query.
  std::vector<S> predict(int32_t head, int32_t relation, const TextStore& store, S temperature) {
    Tape<S> tape;
    auto logits = score_queries(tape, {assemble(head, relation, store)});
    const Tensor<S>& t = tape.val(logits);
    std::vector<S> row(t.data.begin(), t.data.end());
    return softmax_t(row, temperature);
  }

 private:
  TextConfig cfg_;
  Vocab vocab_;
  Parameter<S> token_emb_, pos_emb_, entity_out_;
  Parameter<S> wq_, wk_, wv_, wo_;
  AssembleStats assemble_stats_;
  int64_t forward_count_ = 0;
};

}  // namespace vemfuse
