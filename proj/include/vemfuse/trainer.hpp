#pragma once
// Training loops: independent pre-training for each encoder and the
// alternating fusion loop (E-step updates the text model, M-step updates the
// structure model, mutual-learning losses folded into each side).
//
// All stochastic choices flow from one master seed through named streams
// keyed by (model, epoch index), so a fusion round with all fusion weights
// zeroed consumes exactly the same streams as a continued pre-training epoch.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vemfuse/densify.hpp"
#include "vemfuse/eval.hpp"
#include "vemfuse/kg.hpp"
#include "vemfuse/losses.hpp"
#include "vemfuse/rng.hpp"
#include "vemfuse/struct_encoder.hpp"
#include "vemfuse/text_encoder.hpp"

namespace vemfuse {

struct TrainConfig {
  double lr_struct = 1e-3;
  double lr_text = 1e-3;
  int batch_size = 64;
  int pretrain_epochs = 100;
  int fusion_epochs = 30;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  int eval_every = 5;
  int64_t dev_subsample = 2000;  // per-round dev MRR on a fixed subsample

  void validate() const {
    if (lr_struct <= 0 || lr_text <= 0) throw std::invalid_argument("TrainConfig: lr must be > 0");
    if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be > 0");
    if (pretrain_epochs < 0 || fusion_epochs < 0)
      throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (grad_clip <= 0) throw std::invalid_argument("TrainConfig: grad_clip must be > 0");
    if (eval_every <= 0) throw std::invalid_argument("TrainConfig: eval_every must be > 0");
  }
};

TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& cfg);

struct EpochRecord {
  int64_t epoch = 0;
  std::map<std::string, double> losses;
  double dev_mrr_struct = -1.0;  // -1 when not evaluated this epoch
  double dev_mrr_text = -1.0;
  int64_t overlay_edges = 0;
  double wall_clock_s = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> records;
  void append(EpochRecord r) { records.push_back(std::move(r)); }
};

std::string runlog_to_jsonl(const RunLog& log);

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

// ---- optimizer ---------------------------------------------------------------

template <typename S>
class Adam {
 public:
  Adam(std::vector<Parameter<S>*> params, double lr, double clip, double b1 = 0.9,
       double b2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), clip_(clip), b1_(b1), b2_(b2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Tensor<S>::zeros(p->value.shape));
      v_.push_back(Tensor<S>::zeros(p->value.shape));
    }
  }

  void step() {
    ++t_;
    double norm_sq = 0.0;
    for (auto* p : params_)
      for (S g : p->grad.data) norm_sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(norm_sq);
    const double scale = norm > clip_ ? clip_ / norm : 1.0;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>* p = params_[i];
      for (size_t j = 0; j < p->value.data.size(); ++j) {
        const double g = static_cast<double>(p->grad.data[j]) * scale;
        const double m_new = b1_ * static_cast<double>(m_[i].data[j]) + (1.0 - b1_) * g;
        const double v_new = b2_ * static_cast<double>(v_[i].data[j]) + (1.0 - b2_) * g * g;
        m_[i].data[j] = static_cast<S>(m_new);
        v_[i].data[j] = static_cast<S>(v_new);
        const double mhat = m_new / bc1;
        const double vhat = v_new / bc2;
        p->value.data[j] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

 private:
  std::vector<Parameter<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  double lr_, clip_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

// ---- training data -------------------------------------------------------------

// Unique (head, relation) queries of the augmented train split with their
// train-only multi-hot label sets, in first-appearance order.
struct TrainQueries {
  std::vector<std::pair<int32_t, int32_t>> queries;
  std::vector<std::vector<int32_t>> labels;
};

inline TrainQueries build_train_queries(const TripleSplit& split) {
  TrainQueries tq;
  const auto idx = split.train_label_index();
  std::unordered_map<uint64_t, bool> seen;
  for (const Triple& t : split.train) {
    const uint64_t key = query_key(t.head, t.relation);
    if (seen.emplace(key, true).second) {
      tq.queries.emplace_back(t.head, t.relation);
      tq.labels.push_back(idx.at(key));
    }
  }
  return tq;
}

template <typename S>
std::vector<std::vector<int32_t>> assemble_all(TextModel<S>& model, const KnowledgeGraph& graph,
                                               const TrainQueries& tq) {
  std::vector<std::vector<int32_t>> seqs;
  seqs.reserve(tq.queries.size());
  for (const auto& [h, r] : tq.queries) seqs.push_back(model.assemble(h, r, graph.text));
  return seqs;
}

namespace trainerdetail {

inline std::vector<size_t> epoch_order(size_t n, Rng rng) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  return order;
}

inline void check_finite(double loss, const char* where) {
  if (!std::isfinite(loss))
    throw TrainingDiverged(std::string(where) + ": non-finite loss " + std::to_string(loss));
}

template <typename S>
std::vector<Tensor<S>> snapshot(std::vector<Parameter<S>*> params) {
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

template <typename S>
void restore(std::vector<Parameter<S>*> params, const std::vector<Tensor<S>>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

template <typename S>
Tensor<S> probs_to_tensor(const std::vector<std::vector<S>>& rows) {
  if (rows.empty()) return Tensor<S>();
  Tensor<S> t = Tensor<S>::zeros({static_cast<int64_t>(rows.size()),
                                  static_cast<int64_t>(rows[0].size())});
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), t.row_ptr(static_cast<int64_t>(i)));
  return t;
}

}  // namespace trainerdetail

// ---- epoch bodies ---------------------------------------------------------------
//
// One epoch updating the text model. struct_teacher may be null (pure
// supervised pre-training); fusion terms run only when their weight and the
// corresponding sizes are nonzero, so a zeroed config is bit-identical to a
// supervised epoch under the same seed.

template <typename S>
std::map<std::string, double> text_epoch(TextModel<S>& model, StructModel<S>* struct_teacher,
                                         const KnowledgeGraph& graph, const TrainQueries& tq,
                                         const std::vector<std::vector<int32_t>>& seqs,
                                         const FusionConfig& fc, const TrainConfig& tc,
                                         Adam<S>& opt, int64_t epoch_index,
                                         DensifyCounters* dcounters = nullptr) {
  Rng master(tc.seed);
  const auto order = trainerdetail::epoch_order(
      tq.queries.size(), master.fork("shuffle-text", static_cast<uint64_t>(epoch_index)));
  const bool use_ml = fc.alpha_s > 0.0 && struct_teacher != nullptr;
  const bool use_vem = fc.alpha_t > 0.0 && fc.n_queries > 0 && struct_teacher != nullptr;

  std::map<std::string, double> totals{{"sup", 0.0}, {"vem_e", 0.0}, {"ml_q", 0.0}, {"total", 0.0}};
  int64_t batches = 0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
    std::vector<std::vector<int32_t>> batch_seqs;
    std::vector<std::pair<int32_t, int32_t>> batch_queries;
    std::vector<std::vector<int32_t>> batch_labels;
    for (size_t i = start; i < end; ++i) {
      batch_seqs.push_back(seqs[order[i]]);
      batch_queries.push_back(tq.queries[order[i]]);
      batch_labels.push_back(tq.labels[order[i]]);
    }

    Tape<S> tape;
    auto logits = model.score_queries(tape, batch_seqs);
    auto sup = supervised_loss(tape, logits, batch_labels, fc.label_smoothing);

    typename Tape<S>::Var ml{}, vem{};
    if (use_ml && struct_teacher != nullptr) {
      StructModel<S>& teacher_model = *struct_teacher;
      const auto teacher = teacher_model.predict_batch(batch_queries, graph, nullptr,
                                                       static_cast<S>(fc.st_ml_t));
      ml = ml_loss_text(tape, trainerdetail::probs_to_tensor(teacher), logits, fc);
    }
    if (use_vem && struct_teacher != nullptr) {
      StructModel<S>& teacher_model = *struct_teacher;
      const uint64_t batch_idx = static_cast<uint64_t>(start / static_cast<size_t>(tc.batch_size));
      Rng drng = master.fork("densify-e", static_cast<uint64_t>(epoch_index) * 1000003ULL + batch_idx);
      auto dres = densify_batch(graph, teacher_model, model, fc, drng, dcounters);
      if (!dres.queries.empty()) {
        std::vector<std::vector<int32_t>> gen_seqs;
        std::vector<std::pair<int32_t, int32_t>> gen_queries;
        for (const GeneratedQuery& gq : dres.queries) {
          gen_seqs.push_back(model.assemble(gq.head, gq.relation, graph.text));
          gen_queries.emplace_back(gq.head, gq.relation);
        }
        auto gen_logits = model.score_queries(tape, gen_seqs);
        const auto teacher = teacher_model.predict_batch(gen_queries, graph, &dres.overlay,
                                                         static_cast<S>(fc.st_vem_t));
        vem = vem_e_loss(tape, gen_logits, trainerdetail::probs_to_tensor(teacher), fc);
      }
    }

    auto total = combined_e_objective(tape, sup, vem, ml, fc);
    model.zero_grad();
    tape.backward(total);
    opt.step();

    const double loss_val = static_cast<double>(tape.scalar_val(total));
    trainerdetail::check_finite(loss_val, "text_epoch");
    totals["sup"] += static_cast<double>(tape.scalar_val(sup));
    if (vem.valid()) totals["vem_e"] += static_cast<double>(tape.scalar_val(vem));
    if (ml.valid()) totals["ml_q"] += static_cast<double>(tape.scalar_val(ml));
    totals["total"] += loss_val;
    ++batches;
  }
  if (batches > 0)
    for (auto& [k, v] : totals) v /= static_cast<double>(batches);
  return totals;
}

// One epoch updating the structure model; text_teacher may be null.
template <typename S>
std::map<std::string, double> struct_epoch(StructModel<S>& model, TextModel<S>* text_teacher,
                                           const KnowledgeGraph& graph, const TrainQueries& tq,
                                           const FusionConfig& fc, const TrainConfig& tc,
                                           Adam<S>& opt, int64_t epoch_index,
                                           DensifyCounters* dcounters = nullptr) {
  Rng master(tc.seed);
  const auto order = trainerdetail::epoch_order(
      tq.queries.size(), master.fork("shuffle-struct", static_cast<uint64_t>(epoch_index)));
  const bool use_ml = fc.beta_s > 0.0 && text_teacher != nullptr;
  const bool use_vem = fc.beta_t > 0.0 && fc.n_queries > 0 && text_teacher != nullptr;
  const auto base_pg = PreparedGraph<S>::build(graph, nullptr);

  std::map<std::string, double> totals{{"sup", 0.0}, {"vem_m", 0.0}, {"ml_p", 0.0}, {"total", 0.0}};
  int64_t batches = 0;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
    std::vector<std::pair<int32_t, int32_t>> batch_queries;
    std::vector<std::vector<int32_t>> batch_labels;
    for (size_t i = start; i < end; ++i) {
      batch_queries.push_back(tq.queries[order[i]]);
      batch_labels.push_back(tq.labels[order[i]]);
    }

    Tape<S> tape;
    auto enc = model.encode(tape, base_pg);
    auto logits = model.score_queries(tape, enc, batch_queries);
    auto sup = supervised_loss(tape, logits, batch_labels, fc.label_smoothing);

    typename Tape<S>::Var ml{}, vem{};
    if (use_ml && text_teacher != nullptr) {
      TextModel<S>& teacher_model = *text_teacher;
      std::vector<std::vector<S>> teacher;
      teacher.reserve(batch_queries.size());
      for (const auto& [h, r] : batch_queries)
        teacher.push_back(teacher_model.predict(h, r, graph.text, static_cast<S>(fc.tx_ml_t)));
      ml = ml_loss_struct(tape, trainerdetail::probs_to_tensor(teacher), logits, fc);
    }
    if (use_vem && text_teacher != nullptr) {
      TextModel<S>& teacher_model = *text_teacher;
      const uint64_t batch_idx = static_cast<uint64_t>(start / static_cast<size_t>(tc.batch_size));
      Rng drng = master.fork("densify-m", static_cast<uint64_t>(epoch_index) * 1000003ULL + batch_idx);
      auto dres = densify_batch(graph, model, teacher_model, fc, drng, dcounters);
      if (!dres.queries.empty()) {
        std::vector<std::pair<int32_t, int32_t>> gen_queries;
        std::vector<std::vector<S>> teacher;
        for (const GeneratedQuery& gq : dres.queries) {
          gen_queries.emplace_back(gq.head, gq.relation);
          teacher.push_back(teacher_model.predict(gq.head, gq.relation, graph.text,
                                                  static_cast<S>(fc.tx_vem_t)));
        }
        const auto overlay_pg = PreparedGraph<S>::build(graph, &dres.overlay);
        auto enc_ov = model.encode(tape, overlay_pg);
        auto gen_logits = model.score_queries(tape, enc_ov, gen_queries);
        vem = vem_m_loss(tape, trainerdetail::probs_to_tensor(teacher), gen_logits, fc);
      }
    }

    auto total = combined_m_objective(tape, sup, vem, ml, fc);
    model.zero_grad();
    tape.backward(total);
    opt.step();

    const double loss_val = static_cast<double>(tape.scalar_val(total));
    trainerdetail::check_finite(loss_val, "struct_epoch");
    totals["sup"] += static_cast<double>(tape.scalar_val(sup));
    if (vem.valid()) totals["vem_m"] += static_cast<double>(tape.scalar_val(vem));
    if (ml.valid()) totals["ml_p"] += static_cast<double>(tape.scalar_val(ml));
    totals["total"] += loss_val;
    ++batches;
  }
  if (batches > 0)
    for (auto& [k, v] : totals) v /= static_cast<double>(batches);
  return totals;
}

// ---- evaluation hooks --------------------------------------------------------

template <typename S>
double dev_mrr_struct(StructModel<S>& model, const KnowledgeGraph& graph, const TripleSplit& split,
                      const TrainConfig& tc, int64_t max_triples) {
  if (split.valid.empty()) return -1.0;
  StructScorer<S> scorer(model, graph);
  EvalOptions opts;
  opts.tie_policy = TiePolicy::kExpected;
  opts.seed = tc.seed;
  opts.max_triples = max_triples;
  return evaluate(scorer, graph, split, split.valid, opts).metrics.mrr;
}

template <typename S>
double dev_mrr_text(TextModel<S>& model, const KnowledgeGraph& graph, const TripleSplit& split,
                    const TrainConfig& tc, int64_t max_triples) {
  if (split.valid.empty()) return -1.0;
  TextScorer<S> scorer(model, graph);
  EvalOptions opts;
  opts.tie_policy = TiePolicy::kExpected;
  opts.seed = tc.seed;
  opts.max_triples = max_triples;
  return evaluate(scorer, graph, split, split.valid, opts).metrics.mrr;
}

// ---- pre-training --------------------------------------------------------------

inline FusionConfig supervised_only(const FusionConfig& fc) {
  FusionConfig z = fc;
  z.alpha_t = z.alpha_s = z.beta_t = z.beta_s = 0.0;
  z.n_queries = 0;
  z.m_neighbors = 0;
  return z;
}

// Minimizes the supervised loss for `epochs` epochs starting at stream index
// `start_epoch`; checkpoints the best-dev-MRR parameters.
template <typename S>
RunLog pretrain_struct(StructModel<S>& model, const KnowledgeGraph& graph,
                       const TripleSplit& split, const FusionConfig& fc, const TrainConfig& tc,
                       int epochs, int64_t start_epoch = 0) {
  const FusionConfig sup_fc = supervised_only(fc);
  const TrainQueries tq = build_train_queries(split);
  Adam<S> opt(model.parameters(), tc.lr_struct, tc.grad_clip);
  RunLog log;
  double best = -1.0;
  std::vector<Tensor<S>> best_snap;
  for (int e = 0; e < epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = start_epoch + e;
    // volatile blocks a const-prop clone of the dead teacher branch, which
    // trips GCC's -Wnonnull at -O3.
    TextModel<S>* volatile no_teacher = nullptr;
    rec.losses = struct_epoch(model, no_teacher, graph, tq, sup_fc, tc, opt, start_epoch + e);
    if ((e + 1) % tc.eval_every == 0 || e + 1 == epochs) {
      rec.dev_mrr_struct = dev_mrr_struct(model, graph, split, tc, tc.dev_subsample);
      if (rec.dev_mrr_struct > best) {
        best = rec.dev_mrr_struct;
        best_snap = trainerdetail::snapshot(model.parameters());
      }
    }
    rec.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.append(std::move(rec));
  }
  if (!best_snap.empty()) trainerdetail::restore(model.parameters(), best_snap);
  return log;
}

template <typename S>
RunLog pretrain_text(TextModel<S>& model, const KnowledgeGraph& graph, const TripleSplit& split,
                     const FusionConfig& fc, const TrainConfig& tc, int epochs,
                     int64_t start_epoch = 0) {
  const FusionConfig sup_fc = supervised_only(fc);
  const TrainQueries tq = build_train_queries(split);
  const auto seqs = assemble_all(model, graph, tq);
  Adam<S> opt(model.parameters(), tc.lr_text, tc.grad_clip);
  RunLog log;
  double best = -1.0;
  std::vector<Tensor<S>> best_snap;
  for (int e = 0; e < epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = start_epoch + e;
    StructModel<S>* volatile no_teacher = nullptr;
    rec.losses = text_epoch(model, no_teacher, graph, tq, seqs, sup_fc, tc, opt, start_epoch + e);
    if ((e + 1) % tc.eval_every == 0 || e + 1 == epochs) {
      rec.dev_mrr_text = dev_mrr_text(model, graph, split, tc, tc.dev_subsample);
      if (rec.dev_mrr_text > best) {
        best = rec.dev_mrr_text;
        best_snap = trainerdetail::snapshot(model.parameters());
      }
    }
    rec.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.append(std::move(rec));
  }
  if (!best_snap.empty()) trainerdetail::restore(model.parameters(), best_snap);
  return log;
}

// ---- fusion ----------------------------------------------------------------------

enum class ModelTag { kStruct, kText };

struct FusionOutcome {
  ModelTag chosen = ModelTag::kStruct;
  double final_dev_mrr_struct = -1.0;
  double final_dev_mrr_text = -1.0;
  RunLog log;
};

// Alternates one E-step epoch (text update) and one M-step epoch (structure
// update) per round; fresh optimizer state; selects the better dev-MRR model.
template <typename S>
FusionOutcome fuse(StructModel<S>& p_model, TextModel<S>& q_model, const KnowledgeGraph& graph,
                   const TripleSplit& split, const FusionConfig& fc, const TrainConfig& tc,
                   int64_t start_epoch) {
  fc.validate();
  tc.validate();
  const TrainQueries tq = build_train_queries(split);
  const auto seqs = assemble_all(q_model, graph, tq);
  Adam<S> p_opt(p_model.parameters(), tc.lr_struct, tc.grad_clip);
  Adam<S> q_opt(q_model.parameters(), tc.lr_text, tc.grad_clip);
  FusionOutcome out;
  for (int round = 0; round < tc.fusion_epochs; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    DensifyCounters dc;
    EpochRecord rec;
    rec.epoch = start_epoch + round;
    const auto e_losses =
        text_epoch(q_model, &p_model, graph, tq, seqs, fc, tc, q_opt, start_epoch + round, &dc);
    const auto m_losses =
        struct_epoch(p_model, &q_model, graph, tq, fc, tc, p_opt, start_epoch + round, &dc);
    for (const auto& [k, v] : e_losses) rec.losses["e." + k] = v;
    for (const auto& [k, v] : m_losses) rec.losses["m." + k] = v;
    rec.overlay_edges = dc.overlay_edges;
    if ((round + 1) % tc.eval_every == 0 || round + 1 == tc.fusion_epochs) {
      rec.dev_mrr_struct = dev_mrr_struct(p_model, graph, split, tc, tc.dev_subsample);
      rec.dev_mrr_text = dev_mrr_text(q_model, graph, split, tc, tc.dev_subsample);
    }
    rec.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.log.append(std::move(rec));
  }
  // Final selection on the full dev set.
  out.final_dev_mrr_struct = dev_mrr_struct(p_model, graph, split, tc, -1);
  out.final_dev_mrr_text = dev_mrr_text(q_model, graph, split, tc, -1);
  out.chosen = out.final_dev_mrr_text > out.final_dev_mrr_struct ? ModelTag::kText
                                                                 : ModelTag::kStruct;
  return out;
}

}  // namespace vemfuse
