#pragma once
// Distribution utilities on plain probability vectors: tempered softmax,
// KL divergence, entropy. These are the reference (non-autodiff) forms used
// by evaluation, diagnostics and tests.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace vemfuse {

inline constexpr double kLogFloor = 1e-12;  // epsilon inside every log

template <typename S>
std::vector<S> softmax_t(const std::vector<S>& logits, S temperature) {
  if (!(temperature > S(0))) throw std::invalid_argument("softmax_t: temperature must be > 0");
  if (logits.empty()) throw std::invalid_argument("softmax_t: empty logits");
  for (S v : logits)
    if (!std::isfinite(static_cast<double>(v)))
      throw std::invalid_argument("softmax_t: non-finite logit");
  S mx = logits[0];
  for (S v : logits) mx = std::max(mx, v);
  std::vector<S> p(logits.size());
  S total = S(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    total += p[i];
  }
  for (S& v : p) v /= total;
  return p;
}

template <typename S>
void validate_distribution(const std::vector<S>& p, const char* who) {
  double total = 0.0;
  for (S v : p) {
    if (v < S(0)) throw std::invalid_argument(std::string(who) + ": negative probability");
    total += static_cast<double>(v);
  }
  if (std::fabs(total - 1.0) > 1e-4)
    throw std::invalid_argument(std::string(who) + ": probabilities sum to " + std::to_string(total));
}

// KL(p || q) in nats with the 0*ln(0/q) = 0 convention; q floored at 1e-12.
template <typename S>
double kl_div(const std::vector<S>& p, const std::vector<S>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_div: length mismatch");
  validate_distribution(p, "kl_div p");
  validate_distribution(q, "kl_div q");
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    if (pi <= 0.0) continue;
    const double qi = std::max(static_cast<double>(q[i]), kLogFloor);
    total += pi * (std::log(pi) - std::log(qi));
  }
  return total;
}

// -sum p ln p with 0*ln(0) = 0.
template <typename S>
double entropy(const std::vector<S>& p) {
  validate_distribution(p, "entropy");
  double total = 0.0;
  for (S v : p) {
    const double pi = static_cast<double>(v);
    if (pi > 0.0) total -= pi * std::log(pi);
  }
  return total;
}

// E_q[ln p] with p floored at 1e-12.
template <typename S>
double expected_log(const std::vector<S>& q, const std::vector<S>& p) {
  if (p.size() != q.size()) throw std::invalid_argument("expected_log: length mismatch");
  double total = 0.0;
  for (size_t i = 0; i < q.size(); ++i) {
    const double qi = static_cast<double>(q[i]);
    if (qi <= 0.0) continue;
    total += qi * std::log(std::max(static_cast<double>(p[i]), kLogFloor));
  }
  return total;
}

template <typename S>
size_t argmax(const std::vector<S>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace vemfuse
