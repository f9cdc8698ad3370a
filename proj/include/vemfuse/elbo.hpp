#pragma once
// Exact-enumeration diagnostic for the evidence decomposition
// log p(Y_L) = ELBO + KL(q(Y_U) || p(Y_U | Y_L)), computed at 64-bit.
//
// The joint over labels factorizes generatively: unobserved labels are drawn
// from the base-graph conditional, then observed labels are scored under the
// graph densified with the chosen unobserved edges. The identity holds for
// any such joint and any mean-field q with matching support, so the residual
// measures only the numerical consistency of the distribution machinery.

#include <cstdint>
#include <vector>

#include "vemfuse/kg.hpp"
#include "vemfuse/struct_encoder.hpp"

namespace vemfuse {

struct ElboReport {
  double log_likelihood = 0.0;
  double elbo = 0.0;
  double kl = 0.0;
  double residual = 0.0;            // |log_likelihood - (elbo + kl)|
  double max_identity_residual = 0.0;  // per-triple |KL(q||p) + H(q) + E_q[ln p]|
  int64_t configurations = 0;
};

struct ElboQuery {
  int32_t head = -1;
  int32_t relation = -1;
};

// observed: triples whose labels are given (the Y_L side, scored under the
// densified graph); unobserved: queries whose label space is enumerated.
// q_dists: one length-|E| distribution per unobserved query (mean-field q).
// Throws if |E|^{|unobserved|} exceeds max_configurations.
ElboReport elbo_diagnostic(const KnowledgeGraph& graph, StructModel<double>& p_model,
                           const std::vector<Triple>& observed,
                           const std::vector<ElboQuery>& unobserved,
                           const std::vector<std::vector<double>>& q_dists,
                           int64_t max_configurations = 1000000);

// Exact posterior p(y_u | Y_L) for a single unobserved query, by enumeration.
// Usable as the q that makes the ELBO tight.
std::vector<double> exact_posterior_single(const KnowledgeGraph& graph,
                                           StructModel<double>& p_model,
                                           const std::vector<Triple>& observed,
                                           const ElboQuery& unobserved);

}  // namespace vemfuse
