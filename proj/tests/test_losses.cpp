#include <doctest.h>

#include <cmath>

#include "vemfuse/elbo.hpp"
#include "vemfuse/grad_check.hpp"
#include "vemfuse/kg_io.hpp"
#include "vemfuse/losses.hpp"
#include "vemfuse/struct_encoder.hpp"
#include "vemfuse/text_encoder.hpp"

using namespace vemfuse;

namespace {

const std::string kData = VEMFUSE_TEST_DATA_DIR;

Tensor<double> row_tensor(std::vector<double> v) {
  Tensor<double> t;
  t.shape = {1, static_cast<int64_t>(v.size())};
  t.data = std::move(v);
  return t;
}

// Logits whose softmax at T=1 equals the given distribution.
Tensor<double> logits_for(const std::vector<double>& p) {
  Tensor<double> t;
  t.shape = {1, static_cast<int64_t>(p.size())};
  for (double v : p) t.data.push_back(std::log(v));
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("supervised_loss: perfect logits reach the optimum") {
  Tape<double> tape;
  Tensor<double> logits;
  logits.shape = {1, 3};
  logits.data = {40.0, -40.0, -40.0};
  auto loss = supervised_loss(tape, tape.constant(logits), {{0}}, 0.0);
  CHECK(tape.scalar_val(loss) < 1e-6);
}

TEST_CASE("supervised_loss: uniform probabilities match the direct BCE formula") {
  Tape<double> tape;
  Tensor<double> logits = row_tensor({0.0, 0.0});  // sigmoid = 0.5 everywhere
  auto loss = supervised_loss(tape, tape.constant(logits), {{0}}, 0.0);
  // Oracle: mean over entities of -(t ln 0.5 + (1-t) ln 0.5) = ln 2.
  const double direct = -(std::log(0.5) + std::log(0.5)) / 2.0;
  CHECK(tape.scalar_val(loss) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(direct == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("supervised_loss: smoothed targets stay inside construction bounds") {
  const double eps = 0.1;
  auto targets = smoothed_targets<double>({{1, 3}}, 6, eps);
  for (double v : targets.data) {
    CHECK(v >= eps / 6.0 - 1e-15);
    CHECK(v <= 1.0 - eps + 1e-15);
  }
  CHECK(targets.at(0, 1) == doctest::Approx(0.9));
  CHECK(targets.at(0, 0) == doctest::Approx(eps / 6.0));
}

TEST_CASE("supervised_loss: empty label set is an error") {
  Tape<double> tape;
  auto logits = tape.constant(row_tensor({0.0, 0.0}));
  CHECK_THROWS_AS(static_cast<void>(supervised_loss(tape, logits, {{}}, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("mimicry losses vanish when student equals teacher") {
  FusionConfig cfg;
  Tape<double> tape;
  auto student = tape.constant(logits_for({0.25, 0.75}));
  auto ml = ml_loss_text(tape, row_tensor({0.25, 0.75}), student, cfg);
  CHECK(std::fabs(tape.scalar_val(ml)) < 1e-10);

  Tape<double> tape2;
  auto student2 = tape2.constant(logits_for({0.6, 0.4}));
  auto ml2 = ml_loss_struct(tape2, row_tensor({0.6, 0.4}), student2, cfg);
  CHECK(std::fabs(tape2.scalar_val(ml2)) < 1e-10);
}

TEST_CASE("ml_loss_text value: KL(p || q) by direct summation") {
  FusionConfig cfg;
  Tape<double> tape;
  auto student = tape.constant(logits_for({0.5, 0.5}));
  auto ml = ml_loss_text(tape, row_tensor({0.25, 0.75}), student, cfg);
  const double expected = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  CHECK(expected == doctest::Approx(0.13081).epsilon(1e-3));
  CHECK(tape.scalar_val(ml) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("mimicry losses are asymmetric in general") {
  FusionConfig cfg;
  const std::vector<double> a{0.25, 0.75};
  const std::vector<double> b{0.5, 0.5};
  Tape<double> t1, t2;
  const double ab = t1.scalar_val(ml_loss_text(t1, row_tensor({a[0], a[1]}),
                                               t1.constant(logits_for(b)), cfg));
  const double ba = t2.scalar_val(ml_loss_struct(t2, row_tensor({b[0], b[1]}),
                                                 t2.constant(logits_for(a)), cfg));
  CHECK(ab == doctest::Approx(kl_div(a, b)).epsilon(1e-9));
  CHECK(ba == doctest::Approx(kl_div(b, a)).epsilon(1e-9));
  CHECK(std::fabs(ab - ba) > 1e-4);
}

TEST_CASE("teacher detachment: teacher-side parameter gradients are exactly zero") {
  // Wire both models end to end: struct teaches text through ml_loss_text.
  DatasetPaths paths;
  paths.train = kData + "/tiny/train.tsv";
  paths.entity_text = kData + "/tiny/entity_text.tsv";
  paths.relation_text = kData + "/tiny/relation_text.tsv";
  auto ds = load_dataset(paths);
  augment_inverse(ds.graph, ds.split);

  StructConfig scfg;
  scfg.dim = 6;
  StructModel<double> p_model(ds.graph, scfg, 3);
  TextConfig tcfg;
  tcfg.dim = 6;
  TextModel<double> q_model(ds.graph, build_vocab(ds.graph.text, 1), tcfg, 4);
  FusionConfig cfg;

  SUBCASE("struct is the teacher") {
    const auto teacher =
        p_model.predict_batch({{0, 0}, {1, 1}}, ds.graph, nullptr, cfg.st_ml_t);
    Tensor<double> teacher_t = Tensor<double>::zeros({2, ds.graph.num_entities()});
    for (int i = 0; i < 2; ++i)
      std::copy(teacher[i].begin(), teacher[i].end(), teacher_t.row_ptr(i));
    p_model.zero_grad();
    q_model.zero_grad();
    Tape<double> tape;
    auto logits = q_model.score_queries(
        tape, {q_model.assemble(0, 0, ds.graph.text), q_model.assemble(1, 1, ds.graph.text)});
    auto ml = ml_loss_text(tape, teacher_t, logits, cfg);
    tape.backward(ml);
    for (auto* p : p_model.parameters())
      for (double g : p->grad.data) CHECK(g == 0.0);
    double q_grad_norm = 0.0;
    for (auto* p : q_model.parameters())
      for (double g : p->grad.data) q_grad_norm += g * g;
    CHECK(q_grad_norm > 0.0);
  }

  SUBCASE("text is the teacher") {
    Tensor<double> teacher_t = Tensor<double>::zeros({1, ds.graph.num_entities()});
    const auto d = q_model.predict(0, 0, ds.graph.text, cfg.tx_ml_t);
    std::copy(d.begin(), d.end(), teacher_t.row_ptr(0));
    p_model.zero_grad();
    q_model.zero_grad();
    Tape<double> tape;
    auto pg = PreparedGraph<double>::build(ds.graph, nullptr);
    auto enc = p_model.encode(tape, pg);
    auto logits = p_model.score_queries(tape, enc, {{0, 0}});
    auto ml = ml_loss_struct(tape, teacher_t, logits, cfg);
    tape.backward(ml);
    for (auto* p : q_model.parameters())
      for (double g : p->grad.data) CHECK(g == 0.0);
    double p_grad_norm = 0.0;
    for (auto* p : p_model.parameters())
      for (double g : p->grad.data) p_grad_norm += g * g;
    CHECK(p_grad_norm > 0.0);
  }
}

TEST_CASE("vem_e_loss: zero for equal pairs, empty sum for no queries, single-term oracle") {
  FusionConfig cfg;
  Tape<double> tape;
  auto student = tape.constant(logits_for({0.3, 0.7}));
  auto vem = vem_e_loss(tape, student, row_tensor({0.3, 0.7}), cfg);
  CHECK(std::fabs(tape.scalar_val(vem)) < 1e-10);

  // Misaligned lists are an error.
  Tape<double> tbad;
  auto sbad = tbad.constant(logits_for({0.3, 0.7}));
  Tensor<double> two_rows = Tensor<double>::zeros({2, 2});
  CHECK_THROWS_AS(static_cast<void>(vem_e_loss(tbad, sbad, two_rows, cfg)),
                  std::invalid_argument);

  // Single query: equals kl_div of the two materialized distributions.
  Tape<double> t2;
  const std::vector<double> q{0.2, 0.8};
  const std::vector<double> p{0.6, 0.4};
  auto v = vem_e_loss(t2, t2.constant(logits_for(q)), row_tensor({p[0], p[1]}), cfg);
  CHECK(t2.scalar_val(v) == doctest::Approx(kl_div(q, p)).epsilon(1e-9));
}

TEST_CASE("vem_m_loss: degenerate expectations and brute-force oracle") {
  FusionConfig cfg;
  // q one-hot on y* -> -ln p(y*).
  Tape<double> t1;
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  auto v1 = vem_m_loss(t1, row_tensor({0.0, 0.0, 1.0, 0.0}), t1.constant(logits_for(p)), cfg);
  CHECK(t1.scalar_val(v1) == doctest::Approx(-std::log(0.3)).epsilon(1e-9));

  // p uniform over 4 -> ln 4 regardless of q.
  Tape<double> t2;
  auto v2 = vem_m_loss(t2, row_tensor({0.7, 0.1, 0.1, 0.1}),
                       t2.constant(logits_for({0.25, 0.25, 0.25, 0.25})), cfg);
  CHECK(t2.scalar_val(v2) == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  // Random pair vs loop-based double sum.
  Rng rng(51);
  std::vector<double> q(5), pr(5);
  double sq = 0.0, sp = 0.0;
  for (int i = 0; i < 5; ++i) {
    q[i] = rng.uniform() + 0.01;
    pr[i] = rng.uniform() + 0.01;
    sq += q[i];
    sp += pr[i];
  }
  for (int i = 0; i < 5; ++i) {
    q[i] /= sq;
    pr[i] /= sp;
  }
  double oracle = 0.0;
  for (int i = 0; i < 5; ++i) oracle -= q[i] * std::log(pr[i]);
  Tape<double> t3;
  Tensor<double> qrow;
  qrow.shape = {1, 5};
  qrow.data = q;
  auto v3 = vem_m_loss(t3, qrow, t3.constant(logits_for(pr)), cfg);
  CHECK(t3.scalar_val(v3) == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("combined objectives: degenerate weights, defaults, linearity") {
  FusionConfig cfg;
  cfg.alpha_t = 0.0;
  cfg.alpha_s = 0.0;
  Tape<double> tape;
  auto sup = tape.constant(Tensor<double>::scalar(0.37));
  auto vem = tape.constant(Tensor<double>::scalar(1.5));
  auto ml = tape.constant(Tensor<double>::scalar(0.9));
  CHECK(tape.scalar_val(combined_e_objective(tape, sup, vem, ml, cfg)) ==
        doctest::Approx(0.37));

  FusionConfig cn = fusion_config_from_json_text(R"({"alpha_t":1,"alpha_s":1,"beta_t":4,"beta_s":1,
      "tx_vem_t":5,"tx_ml_t":5,"M":8})");
  CHECK(cn.alpha_t == 1.0);
  CHECK(cn.alpha_s == 1.0);
  CHECK(cn.beta_t == 4.0);
  CHECK(cn.beta_s == 1.0);
  CHECK(cn.tx_vem_t == 5.0);
  CHECK(cn.m_neighbors == 8);
  Tape<double> t2;
  auto sup2 = t2.constant(Tensor<double>::scalar(0.1));
  auto vem2 = t2.constant(Tensor<double>::scalar(0.25));
  auto ml2 = t2.constant(Tensor<double>::scalar(0.5));
  const double base = t2.scalar_val(combined_m_objective(t2, sup2, vem2, ml2, cn));
  CHECK(base == doctest::Approx(0.1 + 4.0 * 0.25 + 1.0 * 0.5));
  cn.beta_t *= 2.0;
  const double doubled = t2.scalar_val(combined_m_objective(t2, sup2, vem2, ml2, cn));
  CHECK(doubled - base == doctest::Approx(4.0 * 0.25));

  FusionConfig fb = fusion_config_from_json_text(R"({"beta_t":6,"beta_s":4})");
  CHECK(fb.beta_t == 6.0);
  CHECK(fb.beta_s == 4.0);
}

TEST_CASE("t2 rescale multiplies the mimicry loss by the student temperature squared") {
  FusionConfig cfg;
  cfg.tx_ml_s = 3.0;
  Tape<double> t1;
  auto base = t1.scalar_val(
      ml_loss_text(t1, row_tensor({0.25, 0.75}), t1.constant(logits_for({0.6, 0.4})), cfg));
  cfg.t2_grad_rescale = true;
  Tape<double> t2;
  auto scaled = t2.scalar_val(
      ml_loss_text(t2, row_tensor({0.25, 0.75}), t2.constant(logits_for({0.6, 0.4})), cfg));
  CHECK(scaled == doctest::Approx(9.0 * base).epsilon(1e-9));
}

TEST_CASE("fusion config validation and round trip") {
  CHECK_THROWS_AS(fusion_config_from_json_text(R"({"tx_vem_s":0})"), std::invalid_argument);
  CHECK_THROWS_AS(fusion_config_from_json_text(R"({"alpha_t":-1})"), std::invalid_argument);
  CHECK_THROWS_AS(fusion_config_from_json_text(R"({"label_smoothing":0.7})"),
                  std::invalid_argument);
  FusionConfig cfg;
  cfg.beta_t = 6.0;
  cfg.n_queries = 16;
  auto back = fusion_config_from_json_text(fusion_config_to_json_text(cfg));
  CHECK(back.beta_t == 6.0);
  CHECK(back.n_queries == 16);
}

TEST_CASE("mimicry and vem loss gradients pass finite differences") {
  Rng rng(8);
  Parameter<double> logits("logits", Tensor<double>::zeros({3, 4}));
  for (auto& v : logits.value.data) v = (rng.uniform() - 0.5) * 2.0;
  Tensor<double> teacher = Tensor<double>::zeros({3, 4});
  for (int64_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 4; ++j) {
      teacher.at(i, j) = rng.uniform() + 0.05;
      s += teacher.at(i, j);
    }
    for (int64_t j = 0; j < 4; ++j) teacher.at(i, j) /= s;
  }
  FusionConfig cfg;
  cfg.tx_ml_s = 2.0;
  cfg.st_vem_s = 0.5;
  cfg.tx_vem_s = 3.0;

  auto check = [&](auto&& build) {
    auto loss_value = [&]() {
      Tape<double> tape;
      return tape.scalar_val(build(tape));
    };
    logits.zero_grad();
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    Rng crng(5);
    return finite_diff_check(loss_value, {&logits}, 1e-6, 0, crng).max_rel_error;
  };

  CHECK(check([&](Tape<double>& t) { return ml_loss_text(t, teacher, t.leaf(logits), cfg); }) <
        1e-4);
  CHECK(check([&](Tape<double>& t) { return ml_loss_struct(t, teacher, t.leaf(logits), cfg); }) <
        1e-4);
  CHECK(check([&](Tape<double>& t) { return vem_e_loss(t, t.leaf(logits), teacher, cfg); }) <
        1e-4);
  CHECK(check([&](Tape<double>& t) { return vem_m_loss(t, teacher, t.leaf(logits), cfg); }) <
        1e-4);
  CHECK(check([&](Tape<double>& t) {
          auto sup = t.sum(t.mul(t.leaf(logits), t.leaf(logits)));
          auto vem = vem_e_loss(t, t.leaf(logits), teacher, cfg);
          auto ml = ml_loss_text(t, teacher, t.leaf(logits), cfg);
          return combined_e_objective(t, sup, vem, ml, cfg);
        }) < 1e-4);
}

TEST_CASE("elbo diagnostic: tight at the posterior, small residual for random q") {
  DatasetPaths paths;
  paths.train = kData + "/tiny/train.tsv";
  paths.valid = kData + "/tiny/valid.tsv";
  paths.test = kData + "/tiny/test.tsv";
  paths.entity_text = kData + "/tiny/entity_text.tsv";
  paths.relation_text = kData + "/tiny/relation_text.tsv";
  auto ds = load_dataset(paths);
  augment_inverse(ds.graph, ds.split);
  REQUIRE(ds.graph.num_entities() == 5);

  StructConfig cfg;
  cfg.dim = 6;
  StructModel<double> p_model(ds.graph, cfg, 41);

  // Unobserved query: e2 has no outgoing r1 edge in train.
  const ElboQuery uq{ds.graph.entity_ids.at("e2"), ds.graph.relation_ids.at("r1")};
  const std::vector<Triple> observed = ds.split.train;

  SUBCASE("q equal to the exact posterior makes the bound tight") {
    auto post = exact_posterior_single(ds.graph, p_model, observed, uq);
    auto rep = elbo_diagnostic(ds.graph, p_model, observed, {uq}, {post});
    CHECK(rep.kl < 1e-10);
    CHECK(std::fabs(rep.elbo - rep.log_likelihood) < 1e-10);
    CHECK(rep.residual < 1e-8);
  }

  SUBCASE("random q keeps the decomposition residual below 1e-8") {
    Rng rng(77);
    std::vector<double> q(5);
    double s = 0.0;
    for (auto& v : q) {
      v = rng.uniform() + 0.02;
      s += v;
    }
    for (auto& v : q) v /= s;
    auto rep = elbo_diagnostic(ds.graph, p_model, observed, {uq}, {q});
    CHECK(rep.residual < 1e-8);
    CHECK(rep.kl >= -1e-12);
    CHECK(rep.max_identity_residual < 1e-10);
  }

  SUBCASE("enumeration bound is enforced") {
    std::vector<ElboQuery> many(12, uq);
    std::vector<std::vector<double>> qs(12, std::vector<double>(5, 0.2));
    CHECK_THROWS_AS(
        static_cast<void>(elbo_diagnostic(ds.graph, p_model, observed, many, qs, 1000)),
        std::invalid_argument);
  }
}

TEST_SUITE_END();
