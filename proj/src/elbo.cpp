#include "vemfuse/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vemfuse/dist.hpp"

namespace vemfuse {

namespace {

// ln p(Y_L, Y_U = config): unobserved labels under the base graph, observed
// labels under the graph densified with the configured unobserved edges.
double log_joint(const KnowledgeGraph& graph, StructModel<double>& p_model,
                 const std::vector<Triple>& observed, const std::vector<ElboQuery>& unobserved,
                 const std::vector<std::vector<double>>& priors,
                 const std::vector<int32_t>& config) {
  double lp = 0.0;
  for (size_t u = 0; u < unobserved.size(); ++u)
    lp += std::log(std::max(priors[u][static_cast<size_t>(config[u])], kLogFloor));

  GraphOverlay overlay;
  for (size_t u = 0; u < unobserved.size(); ++u) {
    const Triple t{unobserved[u].head, unobserved[u].relation, config[u]};
    const Triple inv{t.tail, graph.inverse_relation(t.relation), t.head};
    for (const Triple& cand : {t, inv}) {
      if (graph.contains(cand)) continue;
      if (std::find(overlay.extra_triples.begin(), overlay.extra_triples.end(), cand) !=
          overlay.extra_triples.end())
        continue;
      overlay.extra_triples.push_back(cand);
      overlay.confidence.push_back(1.0);
    }
  }

  std::vector<std::pair<int32_t, int32_t>> queries;
  queries.reserve(observed.size());
  for (const Triple& t : observed) queries.emplace_back(t.head, t.relation);
  const auto dists = p_model.predict_batch(queries, graph, &overlay, 1.0);
  for (size_t i = 0; i < observed.size(); ++i)
    lp += std::log(std::max(dists[i][static_cast<size_t>(observed[i].tail)], kLogFloor));
  return lp;
}

int64_t checked_config_count(int64_t ne, size_t k, int64_t bound) {
  int64_t total = 1;
  for (size_t i = 0; i < k; ++i) {
    if (total > bound / ne)
      throw std::invalid_argument("elbo_diagnostic: enumeration bound exceeded");
    total *= ne;
  }
  return total;
}

}  // namespace

ElboReport elbo_diagnostic(const KnowledgeGraph& graph, StructModel<double>& p_model,
                           const std::vector<Triple>& observed,
                           const std::vector<ElboQuery>& unobserved,
                           const std::vector<std::vector<double>>& q_dists,
                           int64_t max_configurations) {
  if (unobserved.empty()) throw std::invalid_argument("elbo_diagnostic: no unobserved queries");
  if (q_dists.size() != unobserved.size())
    throw std::invalid_argument("elbo_diagnostic: one q distribution per unobserved query required");
  const int64_t ne = graph.num_entities();
  const int64_t total = checked_config_count(ne, unobserved.size(), max_configurations);

  for (const auto& q : q_dists) {
    if (static_cast<int64_t>(q.size()) != ne)
      throw std::invalid_argument("elbo_diagnostic: q distribution length mismatch");
    validate_distribution(q, "elbo q");
  }

  // Base-graph conditionals for the unobserved queries (the prior factor).
  std::vector<std::pair<int32_t, int32_t>> uq;
  for (const ElboQuery& q : unobserved) uq.emplace_back(q.head, q.relation);
  const auto priors = p_model.predict_batch(uq, graph, nullptr, 1.0);

  ElboReport rep;
  rep.configurations = total;
  std::vector<double> ln_joint(static_cast<size_t>(total));
  std::vector<double> q_prob(static_cast<size_t>(total));

  std::vector<int32_t> config(unobserved.size(), 0);
  for (int64_t idx = 0; idx < total; ++idx) {
    int64_t rem = idx;
    double qc = 1.0;
    for (size_t u = 0; u < config.size(); ++u) {
      config[u] = static_cast<int32_t>(rem % ne);
      rem /= ne;
      qc *= q_dists[u][static_cast<size_t>(config[u])];
    }
    ln_joint[static_cast<size_t>(idx)] =
        log_joint(graph, p_model, observed, unobserved, priors, config);
    q_prob[static_cast<size_t>(idx)] = qc;
  }

  // log p(Y_L) via logsumexp over configurations.
  const double mx = *std::max_element(ln_joint.begin(), ln_joint.end());
  double sum = 0.0;
  for (double lj : ln_joint) sum += std::exp(lj - mx);
  rep.log_likelihood = mx + std::log(sum);

  double elbo = 0.0, kl = 0.0;
  for (int64_t idx = 0; idx < total; ++idx) {
    const double qc = q_prob[static_cast<size_t>(idx)];
    if (qc <= 0.0) continue;
    const double lj = ln_joint[static_cast<size_t>(idx)];
    const double ln_post = lj - rep.log_likelihood;
    elbo += qc * (lj - std::log(qc));
    kl += qc * (std::log(qc) - ln_post);
  }
  rep.elbo = elbo;
  rep.kl = kl;
  rep.residual = std::fabs(rep.log_likelihood - (rep.elbo + rep.kl));

  // Per-triple algebraic identity of the three distribution operations:
  // KL(q||p) + H(q) + E_q[ln p] = 0.
  for (size_t u = 0; u < unobserved.size(); ++u) {
    const double identity =
        kl_div(q_dists[u], priors[u]) + entropy(q_dists[u]) + expected_log(q_dists[u], priors[u]);
    rep.max_identity_residual = std::max(rep.max_identity_residual, std::fabs(identity));
  }
  return rep;
}

std::vector<double> exact_posterior_single(const KnowledgeGraph& graph,
                                           StructModel<double>& p_model,
                                           const std::vector<Triple>& observed,
                                           const ElboQuery& unobserved) {
  const int64_t ne = graph.num_entities();
  const auto priors = p_model.predict_batch({{unobserved.head, unobserved.relation}}, graph,
                                            nullptr, 1.0);
  std::vector<double> ln_joint(static_cast<size_t>(ne));
  std::vector<int32_t> config(1);
  for (int64_t t = 0; t < ne; ++t) {
    config[0] = static_cast<int32_t>(t);
    ln_joint[static_cast<size_t>(t)] =
        log_joint(graph, p_model, observed, {unobserved}, priors, config);
  }
  const double mx = *std::max_element(ln_joint.begin(), ln_joint.end());
  double sum = 0.0;
  for (double lj : ln_joint) sum += std::exp(lj - mx);
  const double log_z = mx + std::log(sum);
  std::vector<double> post(static_cast<size_t>(ne));
  for (int64_t t = 0; t < ne; ++t)
    post[static_cast<size_t>(t)] = std::exp(ln_joint[static_cast<size_t>(t)] - log_z);
  return post;
}

}  // namespace vemfuse
