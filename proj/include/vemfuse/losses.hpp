#pragma once
// Training objectives: supervised multi-hot BCE, mutual-learning mimicry
// losses, VEM E-step and M-step losses, and the weighted combined objectives.
// Teachers are always passed as plain probability tensors (already detached);
// gradients can only flow through the student logits Var.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vemfuse/dist.hpp"
#include "vemfuse/tape.hpp"
#include "vemfuse/tensor.hpp"

namespace vemfuse {

// Trade-offs and temperatures of the fusion objectives. Temperature names
// follow the <model>_<method>_<role> scheme: tx/st = text/structure model,
// vem/ml = fusion method, s/t = student/teacher role.
struct FusionConfig {
  double alpha_t = 1.0;  // weight of the VEM E-step loss
  double alpha_s = 1.0;  // weight of the text-side mutual-learning loss
  double beta_t = 1.0;   // weight of the VEM M-step loss
  double beta_s = 1.0;   // weight of the structure-side mutual-learning loss

  double tx_vem_s = 1.0;
  double tx_vem_t = 1.0;
  double st_vem_s = 1.0;
  double st_vem_t = 1.0;
  double tx_ml_s = 1.0;
  double tx_ml_t = 1.0;
  double st_ml_s = 1.0;
  double st_ml_t = 1.0;

  int n_queries = 32;  // generated unobserved queries per densification round
  int m_neighbors = 8;  // sampled neighbor triples per generated query
  double label_smoothing = 0.1;
  bool t2_grad_rescale = false;  // multiply mimicry losses by T_student^2
  // Temperature of the q_pi distribution that neighbor labels are drawn
  // from (0+ -> argmax labeling).
  double label_sample_temperature = 1.0;

  void validate() const {
    for (double t : {tx_vem_s, tx_vem_t, st_vem_s, st_vem_t, tx_ml_s, tx_ml_t, st_ml_s, st_ml_t})
      if (!(t > 0.0)) throw std::invalid_argument("FusionConfig: temperatures must be > 0");
    for (double w : {alpha_t, alpha_s, beta_t, beta_s})
      if (w < 0.0) throw std::invalid_argument("FusionConfig: weights must be >= 0");
    if (n_queries < 0 || m_neighbors < 0)
      throw std::invalid_argument("FusionConfig: N and M must be >= 0");
    if (label_smoothing < 0.0 || label_smoothing >= 0.5)
      throw std::invalid_argument("FusionConfig: label_smoothing must be in [0, 0.5)");
    if (!(label_sample_temperature > 0.0))
      throw std::invalid_argument("FusionConfig: label_sample_temperature must be > 0");
  }
};

FusionConfig fusion_config_from_json_text(const std::string& text);
std::string fusion_config_to_json_text(const FusionConfig& cfg);

// Multi-hot target with smoothing: 1-eps on labels, eps/|E| elsewhere.
template <typename S>
Tensor<S> smoothed_targets(const std::vector<std::vector<int32_t>>& label_sets,
                           int64_t num_entities, double eps) {
  Tensor<S> t = Tensor<S>::full({static_cast<int64_t>(label_sets.size()), num_entities},
                                static_cast<S>(eps / static_cast<double>(num_entities)));
  for (size_t i = 0; i < label_sets.size(); ++i) {
    if (label_sets[i].empty())
      throw std::invalid_argument("supervised_loss: empty label set for query " +
                                  std::to_string(i));
    for (int32_t y : label_sets[i]) t.at(static_cast<int64_t>(i), y) = static_cast<S>(1.0 - eps);
  }
  return t;
}

// Binary cross-entropy over all entities against the smoothed multi-hot
// target: mean over entities per query, summed over the batch (batch terms
// add up as in the log-likelihood sums they realize).
template <typename S>
typename Tape<S>::Var supervised_loss(Tape<S>& tape, typename Tape<S>::Var logits,
                                      const std::vector<std::vector<int32_t>>& label_sets,
                                      double smoothing) {
  const int64_t ne = tape.val(logits).cols();
  const int64_t rows = tape.val(logits).rows();
  if (rows != static_cast<int64_t>(label_sets.size()))
    throw std::invalid_argument("supervised_loss: logits/labels row mismatch");
  auto mean_all = tape.bce_with_logits_mean(logits, smoothed_targets<S>(label_sets, ne, smoothing));
  return tape.scale(mean_all, static_cast<S>(rows));
}

namespace lossdetail {

template <typename S>
void check_rows(const Tensor<S>& teacher, const Tensor<S>& student_logits, const char* who) {
  if (teacher.rows() != student_logits.rows() || teacher.cols() != student_logits.cols())
    throw std::invalid_argument(std::string(who) + ": teacher/student list misaligned (" +
                                teacher.shape_str() + " vs " + student_logits.shape_str() + ")");
}

// sum_rows sum_i P_i * ln P_i (teacher-side constant of the KL).
template <typename S>
double neg_entropy_total(const Tensor<S>& p) {
  double total = 0.0;
  for (S v : p.data) {
    const double pv = static_cast<double>(v);
    if (pv > 0.0) total += pv * std::log(pv);
  }
  return total;
}

}  // namespace lossdetail

// KL(teacher || student) with gradient into the student logits only.
// Returns the sum over rows (one KL term per query, batch terms added).
template <typename S>
typename Tape<S>::Var kl_teacher_student_sum(Tape<S>& tape, const Tensor<S>& teacher_probs,
                                             typename Tape<S>::Var student_logits,
                                             S student_temperature) {
  lossdetail::check_rows(teacher_probs, tape.val(student_logits), "kl_teacher_student");
  auto lsq = tape.log_softmax_rows_t(student_logits, student_temperature);
  lsq = tape.clamp_min_const(lsq, static_cast<S>(std::log(kLogFloor)));
  auto cross = tape.dot_const(lsq, teacher_probs);  // sum_rows sum_i P ln Q
  const S const_term = static_cast<S>(lossdetail::neg_entropy_total(teacher_probs));
  return tape.add_const(tape.scale(cross, S(-1)), const_term);
}

// KL(student || teacher) with gradient into the student logits only.
// Returns the sum over rows (the E-step objective sums per-query terms).
template <typename S>
typename Tape<S>::Var kl_student_teacher_sum(Tape<S>& tape,
                                             typename Tape<S>::Var student_logits,
                                             S student_temperature,
                                             const Tensor<S>& teacher_probs) {
  lossdetail::check_rows(teacher_probs, tape.val(student_logits), "kl_student_teacher");
  auto lsq = tape.log_softmax_rows_t(student_logits, student_temperature);
  auto q = tape.exp_(lsq);
  // ln of teacher probs, floored.
  Tensor<S> ln_p = teacher_probs;
  for (S& v : ln_p.data)
    v = static_cast<S>(std::log(std::max(static_cast<double>(v), kLogFloor)));
  auto diff = tape.sub(lsq, tape.constant(std::move(ln_p)));
  return tape.sum(tape.mul(q, diff));
}

// -sum_rows sum_i Q_i * ln P_i with the teacher sampler Q fixed; gradient into
// the student logits only (M-step expectation, computed exactly).
template <typename S>
typename Tape<S>::Var expected_nll_sum(Tape<S>& tape, const Tensor<S>& teacher_probs,
                                       typename Tape<S>::Var student_logits,
                                       S student_temperature) {
  lossdetail::check_rows(teacher_probs, tape.val(student_logits), "expected_nll");
  auto lsp = tape.log_softmax_rows_t(student_logits, student_temperature);
  lsp = tape.clamp_min_const(lsp, static_cast<S>(std::log(kLogFloor)));
  return tape.scale(tape.dot_const(lsp, teacher_probs), S(-1));
}

// ---- spec-level wrappers ------------------------------------------------------

// Mutual-learning loss pulling the text model toward the structure model:
// KL(p_theta || q_pi); p teacher at st_ml_t (precomputed), q student at tx_ml_s.
template <typename S>
typename Tape<S>::Var ml_loss_text(Tape<S>& tape, const Tensor<S>& struct_teacher_probs,
                                   typename Tape<S>::Var text_logits, const FusionConfig& cfg) {
  auto kl = kl_teacher_student_sum(tape, struct_teacher_probs, text_logits,
                                   static_cast<S>(cfg.tx_ml_s));
  if (cfg.t2_grad_rescale)
    kl = tape.scale(kl, static_cast<S>(cfg.tx_ml_s * cfg.tx_ml_s));
  return kl;
}

// Mutual-learning loss pulling the structure model toward the text model:
// KL(q_pi || p_theta); q teacher at tx_ml_t (precomputed), p student at st_ml_s.
template <typename S>
typename Tape<S>::Var ml_loss_struct(Tape<S>& tape, const Tensor<S>& text_teacher_probs,
                                     typename Tape<S>::Var struct_logits,
                                     const FusionConfig& cfg) {
  auto kl = kl_teacher_student_sum(tape, text_teacher_probs, struct_logits,
                                   static_cast<S>(cfg.st_ml_s));
  if (cfg.t2_grad_rescale)
    kl = tape.scale(kl, static_cast<S>(cfg.st_ml_s * cfg.st_ml_s));
  return kl;
}

// E-step loss: sum_m KL(q_pi(y|q_m) || p_theta(y|q_m, overlay)); q student at
// tx_vem_s, p teacher at st_vem_t under the densification overlay.
template <typename S>
typename Tape<S>::Var vem_e_loss(Tape<S>& tape, typename Tape<S>::Var text_logits,
                                 const Tensor<S>& struct_teacher_probs, const FusionConfig& cfg) {
  return kl_student_teacher_sum(tape, text_logits, static_cast<S>(cfg.tx_vem_s),
                                struct_teacher_probs);
}

// M-step loss: -sum_n E_{q_pi}[ln p_theta(y|q_n, overlay)]; q teacher at
// tx_vem_t (precomputed), p student at st_vem_s under the overlay.
template <typename S>
typename Tape<S>::Var vem_m_loss(Tape<S>& tape, const Tensor<S>& text_teacher_probs,
                                 typename Tape<S>::Var struct_logits, const FusionConfig& cfg) {
  return expected_nll_sum(tape, text_teacher_probs, struct_logits,
                          static_cast<S>(cfg.st_vem_s));
}

// L_E = L_E,L + alpha_t * L_E,U + alpha_s * L_ML,q
template <typename S>
typename Tape<S>::Var combined_e_objective(Tape<S>& tape, typename Tape<S>::Var sup_loss,
                                           typename Tape<S>::Var vem_e,
                                           typename Tape<S>::Var ml_q, const FusionConfig& cfg) {
  auto total = sup_loss;
  if (vem_e.valid()) total = tape.add(total, tape.scale(vem_e, static_cast<S>(cfg.alpha_t)));
  if (ml_q.valid()) total = tape.add(total, tape.scale(ml_q, static_cast<S>(cfg.alpha_s)));
  return total;
}

// L_M = L_M,L + beta_t * L_M,U + beta_s * L_ML,p
template <typename S>
typename Tape<S>::Var combined_m_objective(Tape<S>& tape, typename Tape<S>::Var sup_loss,
                                           typename Tape<S>::Var vem_m,
                                           typename Tape<S>::Var ml_p, const FusionConfig& cfg) {
  auto total = sup_loss;
  if (vem_m.valid()) total = tape.add(total, tape.scale(vem_m, static_cast<S>(cfg.beta_t)));
  if (ml_p.valid()) total = tape.add(total, tape.scale(ml_p, static_cast<S>(cfg.beta_s)));
  return total;
}

}  // namespace vemfuse
