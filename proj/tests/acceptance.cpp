// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each. Exit code equals the number of failed criteria.
//
// Real benchmark datasets are optional: checks that need FB15k-237, WN18RR
// or CN-100K look under $VEMFUSE_DATA_DIR (or ./data) and fall back to the
// committed synthetic fixtures, noting the substitution.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vemfuse/checkpoint.hpp"
#include "vemfuse/densify.hpp"
#include "vemfuse/elbo.hpp"
#include "vemfuse/eval.hpp"
#include "vemfuse/fixtures.hpp"
#include "vemfuse/grad_check.hpp"
#include "vemfuse/kg_io.hpp"
#include "vemfuse/losses.hpp"
#include "vemfuse/trainer.hpp"

using namespace vemfuse;
namespace fs = std::filesystem;

namespace {

const std::string kData = VEMFUSE_TEST_DATA_DIR;

struct CheckFailure : std::runtime_error {
  explicit CheckFailure(const std::string& what) : std::runtime_error(what) {}
};

void require(bool cond, const std::string& what) {
  if (!cond) throw CheckFailure(what);
}

std::string external_data_root() {
  if (const char* env = std::getenv("VEMFUSE_DATA_DIR")) return env;
  return "data";
}

// Locates a benchmark directory containing train/valid/test triple files
// under any of the usual names; empty string when absent.
std::string find_benchmark(const std::string& name) {
  const std::string root = external_data_root();
  for (const std::string& dir : {root + "/" + name, root + "/" + name + "_v1"}) {
    for (const char* train : {"train.tsv", "train.txt"}) {
      if (fs::exists(dir + "/" + train)) return dir;
    }
  }
  return "";
}

DatasetPaths benchmark_paths(const std::string& dir) {
  DatasetPaths p;
  auto pick = [&dir](const char* a, const char* b) {
    if (fs::exists(dir + "/" + a)) return dir + "/" + a;
    if (fs::exists(dir + "/" + b)) return dir + "/" + b;
    return std::string();
  };
  p.train = pick("train.tsv", "train.txt");
  p.valid = pick("valid.tsv", "valid.txt");
  p.test = pick("test.tsv", "test.txt");
  p.entity_text = pick("entity_text.tsv", "entity2text.txt");
  p.relation_text = pick("relation_text.tsv", "relation2text.txt");
  return p;
}

LoadedDataset load_tiny() {
  DatasetPaths p;
  p.train = kData + "/tiny/train.tsv";
  p.valid = kData + "/tiny/valid.tsv";
  p.test = kData + "/tiny/test.tsv";
  p.entity_text = kData + "/tiny/entity_text.tsv";
  p.relation_text = kData + "/tiny/relation_text.tsv";
  auto ds = load_dataset(p);
  augment_inverse(ds.graph, ds.split);
  return ds;
}

SplitSignalFixture load_fixture() {
  auto fx = generate_split_signal(SyntheticSpec{});
  augment_inverse(fx.graph, fx.split);
  return fx;
}

StructConfig fixture_struct_config() {
  StructConfig c;
  c.dim = 32;
  c.layers = 2;
  return c;
}

TextConfig fixture_text_config() {
  TextConfig c;
  c.dim = 32;
  c.use_attention = false;
  c.pooling = Pooling::kMean;
  return c;
}

TrainConfig fixture_train_config(uint64_t seed) {
  TrainConfig tc;
  tc.seed = seed;
  tc.lr_struct = 0.01;
  tc.lr_text = 0.01;
  tc.eval_every = 1000;  // dev evaluation at the end of each phase only
  tc.fusion_epochs = 30;
  return tc;
}

// Table-7-style fusion config for the fixture: VEM:ML weight ratio 4:1 as in
// the CN-100K row, matched distillation temperatures of 5.
FusionConfig fixture_fusion_config() {
  FusionConfig f;
  f.alpha_t = 0.2;
  f.alpha_s = 0.05;
  f.beta_t = 0.2;
  f.beta_s = 0.05;
  f.tx_vem_s = f.tx_vem_t = f.st_vem_s = f.st_vem_t = 5.0;
  f.tx_ml_s = f.tx_ml_t = f.st_ml_s = f.st_ml_t = 5.0;
  f.n_queries = 32;
  f.m_neighbors = 4;
  f.label_sample_temperature = 0.5;
  return f;
}

double median3(double a, double b, double c) {
  return a + b + c - std::min({a, b, c}) - std::max({a, b, c});
}

template <typename S>
uint64_t fingerprint(std::vector<Parameter<S>*> params) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : params) {
    for (S v : p->value.data) {
      uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof(S));
      h ^= bits;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---- criterion 1: evidence decomposition ------------------------------------

void criterion_elbo(std::string& note) {
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = load_tiny();
  require(ds.graph.num_entities() <= 6 && ds.graph.num_relations() <= 3 * 2,
          "tiny fixture exceeds the stated size bounds");
  StructConfig cfg;
  cfg.dim = 8;
  StructModel<double> p_model(ds.graph, cfg, 404);
  const ElboQuery uq{ds.graph.entity_ids.at("e2"), ds.graph.relation_ids.at("r1")};

  Rng rng(5);
  std::vector<double> q(static_cast<size_t>(ds.graph.num_entities()));
  double s = 0.0;
  for (auto& v : q) {
    v = rng.uniform() + 0.05;
    s += v;
  }
  for (auto& v : q) v /= s;
  auto rep = elbo_diagnostic(ds.graph, p_model, ds.split.train, {uq}, {q});
  require(rep.residual < 1e-8, "|log p - (ELBO + KL)| = " + std::to_string(rep.residual));
  require(rep.max_identity_residual < 1e-10,
          "per-triple KL/H/E identity residual = " + std::to_string(rep.max_identity_residual));

  auto posterior = exact_posterior_single(ds.graph, p_model, ds.split.train, uq);
  auto tight = elbo_diagnostic(ds.graph, p_model, ds.split.train, {uq}, {posterior});
  require(tight.kl < 1e-10, "KL at the exact posterior = " + std::to_string(tight.kl));
  require(std::fabs(tight.elbo - tight.log_likelihood) < 1e-10, "ELBO not tight at the posterior");

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  require(secs < 1.0, "runtime " + std::to_string(secs) + "s exceeds 1s");
  std::ostringstream os;
  os << "residual " << rep.residual << ", identity " << rep.max_identity_residual << ", "
     << secs << "s";
  note = os.str();
}

// ---- criterion 2: gradient correctness ---------------------------------------

void criterion_gradients(std::string& note) {
  const auto t0 = std::chrono::steady_clock::now();
  auto ds = load_tiny();
  StructConfig scfg;
  scfg.dim = 6;
  scfg.layers = 2;
  StructModel<double> p_model(ds.graph, scfg, 7);
  TextConfig tcfg;
  tcfg.dim = 6;
  TextModel<double> q_model(ds.graph, build_vocab(ds.graph.text, 1), tcfg, 8);

  FusionConfig fc;
  fc.tx_vem_s = 3.0;
  fc.st_vem_s = 0.7;
  fc.tx_ml_s = 2.0;
  fc.st_ml_s = 2.0;
  fc.n_queries = 2;
  fc.m_neighbors = 1;
  const TrainQueries tq = build_train_queries(ds.split);
  const auto seqs = assemble_all(q_model, ds.graph, tq);
  const auto pg = PreparedGraph<double>::build(ds.graph, nullptr);

  // Teacher tensors are fixed snapshots; overlay from a deterministic batch.
  auto dres = densify_batch(ds.graph, p_model, q_model, fc, Rng(33));
  std::vector<std::pair<int32_t, int32_t>> gen_queries;
  std::vector<std::vector<int32_t>> gen_seqs;
  for (const auto& gq : dres.queries) {
    gen_queries.emplace_back(gq.head, gq.relation);
    gen_seqs.push_back(q_model.assemble(gq.head, gq.relation, ds.graph.text));
  }
  const auto pg_ov = PreparedGraph<double>::build(ds.graph, &dres.overlay);

  auto to_tensor = [&](const std::vector<std::vector<double>>& rows) {
    Tensor<double> t = Tensor<double>::zeros({static_cast<int64_t>(rows.size()),
                                              ds.graph.num_entities()});
    for (size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].begin(), rows[i].end(), t.row_ptr(static_cast<int64_t>(i)));
    return t;
  };
  const Tensor<double> p_teacher_batch =
      to_tensor(p_model.predict_batch(tq.queries, ds.graph, nullptr, fc.st_ml_t));
  const Tensor<double> p_teacher_gen =
      to_tensor(p_model.predict_batch(gen_queries, ds.graph, &dres.overlay, fc.st_vem_t));
  std::vector<std::vector<double>> q_rows, q_rows_gen;
  for (const auto& [h, r] : tq.queries)
    q_rows.push_back(q_model.predict(h, r, ds.graph.text, fc.tx_ml_t));
  for (const auto& [h, r] : gen_queries)
    q_rows_gen.push_back(q_model.predict(h, r, ds.graph.text, fc.tx_vem_t));
  const Tensor<double> q_teacher_batch = to_tensor(q_rows);
  const Tensor<double> q_teacher_gen = to_tensor(q_rows_gen);

  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const char* name, auto&& build, std::vector<Parameter<double>*> params) {
    auto loss_value = [&]() {
      Tape<double> tape;
      return tape.scalar_val(build(tape));
    };
    for (auto* p : params) p->zero_grad();
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    Rng rng(101);
    const auto res = finite_diff_check(loss_value, params, 1e-5, 8, rng);
    if (res.max_rel_error > worst) {
      worst = res.max_rel_error;
      worst_name = name;
    }
    require(res.max_rel_error < 1e-4, std::string(name) + " rel err " +
                                          std::to_string(res.max_rel_error) + " at " +
                                          res.worst_param);
  };

  check("supervised(struct)",
        [&](Tape<double>& t) {
          auto enc = p_model.encode(t, pg);
          return supervised_loss(t, p_model.score_queries(t, enc, tq.queries), tq.labels, 0.1);
        },
        p_model.parameters());
  check("supervised(text)",
        [&](Tape<double>& t) {
          return supervised_loss(t, q_model.score_queries(t, seqs), tq.labels, 0.1);
        },
        q_model.parameters());
  check("ml_text(Eq1)",
        [&](Tape<double>& t) {
          return ml_loss_text(t, p_teacher_batch, q_model.score_queries(t, seqs), fc);
        },
        q_model.parameters());
  check("ml_struct(Eq2)",
        [&](Tape<double>& t) {
          auto enc = p_model.encode(t, pg);
          return ml_loss_struct(t, q_teacher_batch, p_model.score_queries(t, enc, tq.queries), fc);
        },
        p_model.parameters());
  check("vem_e(Eq8)",
        [&](Tape<double>& t) {
          return vem_e_loss(t, q_model.score_queries(t, gen_seqs), p_teacher_gen, fc);
        },
        q_model.parameters());
  check("vem_m(Eq11)",
        [&](Tape<double>& t) {
          auto enc = p_model.encode(t, pg_ov);
          return vem_m_loss(t, q_teacher_gen, p_model.score_queries(t, enc, gen_queries), fc);
        },
        p_model.parameters());
  check("combined_e",
        [&](Tape<double>& t) {
          auto logits = q_model.score_queries(t, seqs);
          auto sup = supervised_loss(t, logits, tq.labels, 0.1);
          auto ml = ml_loss_text(t, p_teacher_batch, logits, fc);
          auto vem = vem_e_loss(t, q_model.score_queries(t, gen_seqs), p_teacher_gen, fc);
          return combined_e_objective(t, sup, vem, ml, fc);
        },
        q_model.parameters());
  check("combined_m",
        [&](Tape<double>& t) {
          auto enc = p_model.encode(t, pg);
          auto logits = p_model.score_queries(t, enc, tq.queries);
          auto sup = supervised_loss(t, logits, tq.labels, 0.1);
          auto ml = ml_loss_struct(t, q_teacher_batch, logits, fc);
          auto enc_ov = p_model.encode(t, pg_ov);
          auto vem =
              vem_m_loss(t, q_teacher_gen, p_model.score_queries(t, enc_ov, gen_queries), fc);
          return combined_m_objective(t, sup, vem, ml, fc);
        },
        p_model.parameters());

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  require(secs < 60.0, "gradient suite exceeded 60s");
  std::ostringstream os;
  os << "max rel err " << worst << " (" << worst_name << "), " << secs << "s";
  note = os.str();
}

// ---- criterion 3: teacher detachment -----------------------------------------

void criterion_detachment(std::string& note) {
  auto ds = load_tiny();
  StructConfig scfg;
  scfg.dim = 6;
  StructModel<double> p_model(ds.graph, scfg, 3);
  TextConfig tcfg;
  tcfg.dim = 6;
  TextModel<double> q_model(ds.graph, build_vocab(ds.graph.text, 1), tcfg, 4);
  FusionConfig fc;
  const TrainQueries tq = build_train_queries(ds.split);
  const auto seqs = assemble_all(q_model, ds.graph, tq);
  const auto pg = PreparedGraph<double>::build(ds.graph, nullptr);

  auto to_tensor = [&](const std::vector<std::vector<double>>& rows) {
    Tensor<double> t = Tensor<double>::zeros({static_cast<int64_t>(rows.size()),
                                              ds.graph.num_entities()});
    for (size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].begin(), rows[i].end(), t.row_ptr(static_cast<int64_t>(i)));
    return t;
  };

  // Struct teaches text: every theta gradient stays bit-zero.
  p_model.zero_grad();
  q_model.zero_grad();
  {
    Tape<double> tape;
    auto teacher = to_tensor(p_model.predict_batch(tq.queries, ds.graph, nullptr, fc.st_ml_t));
    auto logits = q_model.score_queries(tape, seqs);
    auto vem = vem_e_loss(tape, logits, teacher, fc);
    auto ml = ml_loss_text(tape, teacher, logits, fc);
    tape.backward(tape.add(ml, vem));
  }
  for (auto* p : p_model.parameters())
    for (double g : p->grad.data) require(g == 0.0, "theta gradient nonzero in E-step losses");

  // Text teaches struct: every pi gradient stays bit-zero.
  p_model.zero_grad();
  q_model.zero_grad();
  {
    Tape<double> tape;
    std::vector<std::vector<double>> rows;
    for (const auto& [h, r] : tq.queries)
      rows.push_back(q_model.predict(h, r, ds.graph.text, fc.tx_ml_t));
    auto teacher = to_tensor(rows);
    auto enc = p_model.encode(tape, pg);
    auto logits = p_model.score_queries(tape, enc, tq.queries);
    auto ml = ml_loss_struct(tape, teacher, logits, fc);
    auto vem = vem_m_loss(tape, teacher, logits, fc);
    tape.backward(tape.add(ml, vem));
  }
  for (auto* p : q_model.parameters())
    for (double g : p->grad.data) require(g == 0.0, "pi gradient nonzero in M-step losses");
  note = "teacher-side gradients bit-zero for all four mimicry losses";
}

// ---- criterion 4: sparsifier exactness ----------------------------------------

void criterion_sparsifier(std::string& note) {
  DatasetPaths p;
  p.train = kData + "/synthetic1000/train.tsv";
  auto ds = load_dataset(p);
  require(ds.split.train.size() == 1000, "committed synthetic file is not 1000 triples");
  auto sub = sparsify(ds.split, 0.2, 7);
  require(sub.train.size() == 200, "fraction 0.2 of 1000 gave " +
                                       std::to_string(sub.train.size()) + " triples");
  std::set<Triple> full(ds.split.train.begin(), ds.split.train.end());
  for (const Triple& t : sub.train)
    require(full.count(t) == 1, "sparsified triple not a subset of the input");

  std::ostringstream os;
  os << "synthetic 1000 -> 200";
  const std::string fb = find_benchmark("fb15k-237");
  if (!fb.empty()) {
    auto fb_ds = load_dataset(benchmark_paths(fb));
    auto fb_sub = sparsify(fb_ds.split, 0.2, 7);
    require(fb_sub.train.size() == 54423,
            "FB15k-237 fraction 0.2 gave " + std::to_string(fb_sub.train.size()));
    os << "; FB15k-237 " << fb_ds.split.train.size() << " -> 54423";
  } else {
    os << "; FB15k-237 not present, skipped that part";
  }
  note = os.str();
}

// ---- criterion 5: ranking oracle --------------------------------------------

void criterion_ranking(std::string& note) {
  Rng rng(2718);
  for (int it = 0; it < 200; ++it) {
    const int ne = 5 + static_cast<int>(rng.uniform_int(60));
    std::vector<double> scores(static_cast<size_t>(ne));
    for (auto& s : scores) s = std::floor(rng.uniform() * 8.0);  // force ties
    const int32_t target = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(ne)));
    std::vector<int32_t> others;
    for (int e = 0; e < ne; ++e)
      if (e != target && rng.uniform() < 0.15) others.push_back(e);
    const double got =
        filtered_rank(scores, target, others, TiePolicy::kExpected, Rng(it));
    // Brute-force oracle.
    int64_t greater = 0, ties = 0;
    std::set<int32_t> filtered(others.begin(), others.end());
    for (int e = 0; e < ne; ++e) {
      if (e == target || filtered.count(e)) continue;
      if (scores[static_cast<size_t>(e)] > scores[static_cast<size_t>(target)]) ++greater;
      if (scores[static_cast<size_t>(e)] == scores[static_cast<size_t>(target)]) ++ties;
    }
    const double expect = static_cast<double>(greater) + 1.0 + static_cast<double>(ties) / 2.0;
    require(got == expect, "EXPECTED rank mismatch with brute force");
  }

  // RANDOM protocol mean on a ties fixture: s strictly greater, k ties.
  const int s = 3, k = 6, trials = 10000;
  std::vector<double> scores{9, 8, 7, 5, 5, 5, 5, 5, 5, 5, 1, 0};
  double total = 0.0;
  for (int t = 0; t < trials; ++t)
    total += filtered_rank(scores, 5, {}, TiePolicy::kRandom, Rng(40000 + t));
  const double mean = total / trials;
  const double expect = s + 1.0 + k / 2.0;
  const double se = std::sqrt(((k + 1.0) * (k + 1.0) - 1.0) / 12.0 / trials);
  require(std::fabs(mean - expect) < 3.0 * se,
          "RANDOM mean " + std::to_string(mean) + " vs " + std::to_string(expect));
  std::ostringstream os;
  os << "200 EXPECTED ranks exact; RANDOM mean " << mean << " vs " << expect << " (3se "
     << 3.0 * se << ")";
  note = os.str();
}

// ---- criterion 6: densification invariants -------------------------------------

void criterion_densify(std::string& note) {
  std::string source = "split-signal fixture";
  KnowledgeGraph graph;
  TripleSplit split;
  const std::string cn = find_benchmark("cn100k");
  if (!cn.empty()) {
    auto ds = load_dataset(benchmark_paths(cn));
    augment_inverse(ds.graph, ds.split);
    graph = std::move(ds.graph);
    split = std::move(ds.split);
    source = "CN-100K";
  } else {
    auto fx = load_fixture();
    graph = std::move(fx.graph);
    split = std::move(fx.split);
  }

  StructConfig scfg = fixture_struct_config();
  StructModel<float> p_model(graph, scfg, 5);
  DensifyCounters counters;
  auto queries = generate_queries(graph, p_model, 10000, Rng(51), &counters);
  require(queries.size() == 10000, "did not generate 10000 queries");
  for (const auto& q : queries) {
    require(graph.tails(q.head, q.relation).empty(),
            "generated (e, r, *) exists in the train graph");
    const auto connected = graph.connected_relations(q.head);
    require(std::find(connected.begin(), connected.end(), q.relation) == connected.end(),
            "generated relation is incident to its head");
  }

  TextConfig tcfg = fixture_text_config();
  TextModel<float> q_model(graph, build_vocab(graph.text, 1), tcfg, 6);
  FusionConfig fc = fixture_fusion_config();
  fc.n_queries = 8;
  const uint64_t hash0 = graph.structure_hash();
  for (int b = 0; b < 25; ++b) {
    densify_batch(graph, p_model, q_model, fc, Rng(7000 + b), &counters);
    require(graph.structure_hash() == hash0, "base graph hash changed after a densified batch");
  }
  std::ostringstream os;
  os << "10000 queries on " << source << ", 25 densified batches, base hash stable";
  note = os.str();
}

// ---- criterion 7: degenerate-config equivalence --------------------------------

void criterion_degenerate(std::string& note) {
  auto fx = load_fixture();
  TrainConfig tc = fixture_train_config(97);
  tc.fusion_epochs = 10;
  FusionConfig zero;
  zero.alpha_t = zero.alpha_s = zero.beta_t = zero.beta_s = 0.0;
  zero.n_queries = 0;
  zero.m_neighbors = 0;

  const int64_t start = 50;
  StructModel<float> p_fuse(fx.graph, fixture_struct_config(), 61);
  TextModel<float> q_fuse(fx.graph, build_vocab(fx.graph.text, 1), fixture_text_config(), 62);
  StructModel<float> p_solo = p_fuse;
  TextModel<float> q_solo = q_fuse;

  auto outcome = fuse(p_fuse, q_fuse, fx.graph, fx.split, zero, tc, start);

  const TrainQueries tq = build_train_queries(fx.split);
  const auto seqs = assemble_all(q_solo, fx.graph, tq);
  Adam<float> p_opt(p_solo.parameters(), tc.lr_struct, tc.grad_clip);
  Adam<float> q_opt(q_solo.parameters(), tc.lr_text, tc.grad_clip);
  const FusionConfig sup = supervised_only(zero);
  double max_diff = 0.0;
  StructModel<float>* volatile no_p = nullptr;
  TextModel<float>* volatile no_q = nullptr;
  for (int round = 0; round < tc.fusion_epochs; ++round) {
    auto q_losses = text_epoch(q_solo, no_p, fx.graph, tq, seqs, sup, tc, q_opt, start + round);
    auto p_losses = struct_epoch(p_solo, no_q, fx.graph, tq, sup, tc, p_opt, start + round);
    const auto& rec = outcome.log.records[static_cast<size_t>(round)];
    max_diff = std::max(max_diff, std::fabs(rec.losses.at("e.sup") - q_losses.at("sup")));
    max_diff = std::max(max_diff, std::fabs(rec.losses.at("m.sup") - p_losses.at("sup")));
  }
  require(max_diff <= 1e-7, "per-step loss difference " + std::to_string(max_diff));
  require(fingerprint(p_fuse.parameters()) == fingerprint(p_solo.parameters()),
          "theta diverged from the continued baseline");
  require(fingerprint(q_fuse.parameters()) == fingerprint(q_solo.parameters()),
          "pi diverged from the continued baseline");
  std::ostringstream os;
  os << "10 rounds, max per-step loss diff " << max_diff << ", final params bit-identical";
  note = os.str();
}

// ---- criterion 8: fusion gain surrogate ----------------------------------------

void criterion_fusion_gain(std::string& note) {
  const auto t0 = std::chrono::steady_clock::now();
  auto fx = load_fixture();
  const int pretrain_epochs = 200;
  const int half = fx.graph.num_relations() / 2;

  auto tag_mrr = [&](QueryScorer& s, QueryTag tag, const TrainConfig& tc) {
    std::vector<Triple> subset;
    for (const Triple& t : fx.split.valid) {
      if (t.relation >= half) continue;
      if (fx.tags.at(t) == tag) subset.push_back(t);
    }
    EvalOptions eo;
    eo.tie_policy = TiePolicy::kExpected;
    eo.seed = tc.seed;
    return evaluate(s, fx.graph, fx.split, subset, eo).metrics.mrr;
  };

  struct SeedOutcome {
    double base_best, baseline, combined, vem_only, ml_only;
    double p_struct_tag, p_text_tag, q_struct_tag, q_text_tag;
  };
  std::vector<SeedOutcome> seeds;

  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    TrainConfig tc = fixture_train_config(seed);
    FusionConfig fc;
    StructModel<float> p(fx.graph, fixture_struct_config(), seed * 2 + 1);
    TextModel<float> q(fx.graph, build_vocab(fx.graph.text, 1), fixture_text_config(),
                       seed * 2 + 2);
    pretrain_struct(p, fx.graph, fx.split, fc, tc, pretrain_epochs);
    pretrain_text(q, fx.graph, fx.split, fc, tc, pretrain_epochs);

    SeedOutcome so{};
    so.base_best = std::max(dev_mrr_struct(p, fx.graph, fx.split, tc, -1),
                            dev_mrr_text(q, fx.graph, fx.split, tc, -1));
    {
      StructScorer<float> ps(p, fx.graph);
      TextScorer<float> qs(q, fx.graph);
      so.p_struct_tag = tag_mrr(ps, QueryTag::kStructure, tc);
      so.p_text_tag = tag_mrr(ps, QueryTag::kText, tc);
      so.q_struct_tag = tag_mrr(qs, QueryTag::kStructure, tc);
      so.q_text_tag = tag_mrr(qs, QueryTag::kText, tc);
    }

    {  // independently continued baselines over the same number of rounds
      StructModel<float> pp = p;
      TextModel<float> qq = q;
      const FusionConfig zero = supervised_only(fc);
      const TrainQueries tq = build_train_queries(fx.split);
      const auto seqs = assemble_all(qq, fx.graph, tq);
      Adam<float> popt(pp.parameters(), tc.lr_struct, tc.grad_clip);
      Adam<float> qopt(qq.parameters(), tc.lr_text, tc.grad_clip);
      StructModel<float>* volatile no_p = nullptr;
      TextModel<float>* volatile no_q = nullptr;
      for (int r = 0; r < tc.fusion_epochs; ++r) {
        text_epoch(qq, no_p, fx.graph, tq, seqs, zero, tc, qopt, pretrain_epochs + r);
        struct_epoch(pp, no_q, fx.graph, tq, zero, tc, popt, pretrain_epochs + r);
      }
      so.baseline = std::max(dev_mrr_struct(pp, fx.graph, fx.split, tc, -1),
                             dev_mrr_text(qq, fx.graph, fx.split, tc, -1));
    }

    auto run_variant = [&](const FusionConfig& f) {
      StructModel<float> pp = p;
      TextModel<float> qq = q;
      auto out = fuse(pp, qq, fx.graph, fx.split, f, tc, pretrain_epochs);
      return std::max(out.final_dev_mrr_struct, out.final_dev_mrr_text);
    };
    so.combined = run_variant(fixture_fusion_config());
    FusionConfig vem = fixture_fusion_config();
    vem.alpha_s = vem.beta_s = 0.0;
    so.vem_only = run_variant(vem);
    FusionConfig ml = fixture_fusion_config();
    ml.alpha_t = ml.beta_t = 0.0;
    ml.n_queries = 0;
    ml.m_neighbors = 0;
    so.ml_only = run_variant(ml);
    seeds.push_back(so);
  }

  // Fixture validity oracle: each model is stronger on its own signal.
  const double p_margin = median3(seeds[0].p_struct_tag - seeds[0].p_text_tag,
                                  seeds[1].p_struct_tag - seeds[1].p_text_tag,
                                  seeds[2].p_struct_tag - seeds[2].p_text_tag);
  const double q_margin = median3(seeds[0].q_text_tag - seeds[0].q_struct_tag,
                                  seeds[1].q_text_tag - seeds[1].q_struct_tag,
                                  seeds[2].q_text_tag - seeds[2].q_struct_tag);
  require(p_margin > 0.0, "structure model not stronger on structure-tagged queries");
  require(q_margin > 0.0, "text model not stronger on text-tagged queries");

  const double gain = median3(seeds[0].combined - seeds[0].baseline,
                              seeds[1].combined - seeds[1].baseline,
                              seeds[2].combined - seeds[2].baseline);
  require(gain >= 0.02, "median fusion gain " + std::to_string(gain) + " < 0.02");
  const double vem_gain = median3(seeds[0].vem_only - seeds[0].base_best,
                                  seeds[1].vem_only - seeds[1].base_best,
                                  seeds[2].vem_only - seeds[2].base_best);
  require(vem_gain > 0.0, "VEM-only does not beat its pretrained baseline (median)");
  const double ml_gain = median3(seeds[0].ml_only - seeds[0].base_best,
                                 seeds[1].ml_only - seeds[1].base_best,
                                 seeds[2].ml_only - seeds[2].base_best);
  require(ml_gain > 0.0, "ML-only does not beat its pretrained baseline (median)");
  const double comb_vs_vem = median3(seeds[0].combined - seeds[0].vem_only,
                                     seeds[1].combined - seeds[1].vem_only,
                                     seeds[2].combined - seeds[2].vem_only);
  const double comb_vs_ml = median3(seeds[0].combined - seeds[0].ml_only,
                                    seeds[1].combined - seeds[1].ml_only,
                                    seeds[2].combined - seeds[2].ml_only);
  require(comb_vs_vem >= 0.0, "combined below VEM-only (median over shared seeds)");
  require(comb_vs_ml >= 0.0, "combined below ML-only (median over shared seeds)");

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  require(secs < 600.0, "fusion-gain protocol exceeded 10 minutes");
  std::ostringstream os;
  os << "median gain " << gain << " (VEM-only " << vem_gain << ", ML-only " << ml_gain
     << ", comb-vs-vem " << comb_vs_vem << ", comb-vs-ml " << comb_vs_ml << "), " << secs << "s";
  note = os.str();
}

// ---- criterion 9: inference-efficiency contract ---------------------------------

void criterion_inference(std::string& note) {
  auto build = [](int entities, uint64_t seed) {
    RandomGraphSpec spec;
    spec.entities = entities;
    spec.relations = 3;
    spec.triples = 90;
    spec.seed = seed;
    auto [graph, split] = generate_random_graph(spec);
    // Move 30 triples to the test split.
    split.test.assign(split.train.end() - 30, split.train.end());
    split.train.resize(split.train.size() - 30);
    graph.triples = split.train;
    graph.rebuild_index();
    split.rebuild_label_index();
    augment_inverse(graph, split);
    return std::make_pair(std::move(graph), std::move(split));
  };

  int64_t forwards[2];
  int i = 0;
  for (int entities : {50, 500}) {
    auto [graph, split] = build(entities, 9 + static_cast<uint64_t>(entities));
    require(split.test.size() == 60, "unexpected test size after augmentation");
    TextConfig cfg = fixture_text_config();
    TextModel<float> model(graph, build_vocab(graph.text, 1), cfg, 3);
    TextScorer<float> scorer(model, graph);
    EvalOptions opts;
    opts.tie_policy = TiePolicy::kExpected;
    model.reset_forward_count();
    auto res = evaluate(scorer, graph, split, split.test, opts);
    require(res.metrics.query_count == 60, "expected 60 rankings");
    forwards[i++] = model.forward_count();
  }
  require(forwards[0] == 60 && forwards[1] == 60,
          "encoder forwards depend on |E|: " + std::to_string(forwards[0]) + " vs " +
              std::to_string(forwards[1]));
  note = "2|T| = 60 encoder forwards at |E|=50 and |E|=500 (10x)";
}

// ---- criterion 10: metric sanity -------------------------------------------------

void criterion_metric_sanity(std::string& note) {
  auto fx = load_fixture();
  StructModel<float> model(fx.graph, fixture_struct_config(), 77);
  StructScorer<float> scorer(model, fx.graph);
  EvalOptions opts;
  opts.tie_policy = TiePolicy::kExpected;
  opts.seed = 13;
  auto r1 = evaluate(scorer, fx.graph, fx.split, fx.split.test, opts);
  auto r2 = evaluate(scorer, fx.graph, fx.split, fx.split.test, opts);
  require(metrics_to_json(r1.metrics) == metrics_to_json(r2.metrics),
          "metrics JSON differs across reruns");
  for (const auto& res : {r1}) {
    require(res.metrics.hits_at.at(1) <= res.metrics.hits_at.at(3), "hits@1 > hits@3");
    require(res.metrics.hits_at.at(3) <= res.metrics.hits_at.at(10), "hits@3 > hits@10");
    require(res.metrics.mrr >= res.metrics.hits_at.at(1), "mrr below hits@1");
    require(res.metrics.mrr <= 1.0, "mrr above 1");
  }
  EvalOptions rnd = opts;
  rnd.tie_policy = TiePolicy::kRandom;
  auto r3 = evaluate(scorer, fx.graph, fx.split, fx.split.test, rnd);
  require(r3.metrics.hits_at.at(1) <= r3.metrics.hits_at.at(3) &&
              r3.metrics.hits_at.at(3) <= r3.metrics.hits_at.at(10),
          "hits ordering violated under RANDOM");
  require(r3.metrics.mrr >= r3.metrics.hits_at.at(1) && r3.metrics.mrr <= 1.0,
          "mrr outside [hits@1, 1] under RANDOM");
  note = "ordering holds; EXPECTED reruns byte-identical";
}

// ---- criterion 11: relation-Jaccard tool ------------------------------------------

void criterion_jaccard(std::string& note) {
  auto [graph, split] = generate_random_graph({12, 5, 45, 67});
  auto m = relation_jaccard(graph);
  std::vector<std::set<int32_t>> heads(5);
  for (const Triple& t : graph.triples) heads[static_cast<size_t>(t.relation)].insert(t.head);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      std::set<int32_t> inter, uni;
      std::set_intersection(heads[i].begin(), heads[i].end(), heads[j].begin(), heads[j].end(),
                            std::inserter(inter, inter.begin()));
      std::set_union(heads[i].begin(), heads[i].end(), heads[j].begin(), heads[j].end(),
                     std::inserter(uni, uni.begin()));
      double expect = 0.0;
      if (!heads[i].empty() && !heads[j].empty())
        expect = static_cast<double>(inter.size()) / static_cast<double>(uni.size());
      require(m[static_cast<size_t>(i)][static_cast<size_t>(j)] == expect,
              "Jaccard entry differs from the set-based oracle");
    }
  }

  std::ostringstream os;
  os << "matrix equals the set-based oracle";
  const std::string wn = find_benchmark("wn18rr");
  const std::string cn = find_benchmark("cn100k");
  if (!wn.empty() && !cn.empty()) {
    auto off_diag_mean = [](const std::vector<std::vector<double>>& j) {
      double total = 0.0;
      int64_t n = 0;
      for (size_t a = 0; a < j.size(); ++a)
        for (size_t b = 0; b < j.size(); ++b)
          if (a != b) {
            total += j[a][b];
            ++n;
          }
      return n == 0 ? 0.0 : total / static_cast<double>(n);
    };
    auto wn_ds = load_dataset(benchmark_paths(wn));
    auto cn_ds = load_dataset(benchmark_paths(cn));
    const double wn_mean = off_diag_mean(relation_jaccard(wn_ds.graph));
    const double cn_mean = off_diag_mean(relation_jaccard(cn_ds.graph));
    require(wn_mean < cn_mean, "WN18RR off-diagonal mean not below CN-100K");
    os << "; WN18RR mean " << wn_mean << " < CN-100K mean " << cn_mean;
  } else {
    os << "; WN18RR/CN-100K not both present, direction check skipped";
  }
  note = os.str();
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(std::string&)> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "ELBO decomposition and per-triple identity", criterion_elbo},
      {2, "gradient correctness of all loss objectives", criterion_gradients},
      {3, "teacher detachment", criterion_detachment},
      {4, "sparsifier exactness", criterion_sparsifier},
      {5, "ranking oracle equivalence", criterion_ranking},
      {6, "densification invariants", criterion_densify},
      {7, "degenerate-config equivalence", criterion_degenerate},
      {8, "fusion gain surrogate", criterion_fusion_gain},
      {9, "inference-efficiency contract", criterion_inference},
      {10, "metric sanity", criterion_metric_sanity},
      {11, "relation-Jaccard tool", criterion_jaccard},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.fn(detail);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("PASS criterion %2d: %s [%s] (%.2fs)\n", c.id, c.name, detail.c_str(), secs);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("FAIL criterion %2d: %s [%s]\n", c.id, c.name, e.what());
    }
    std::fflush(stdout);
  }
  if (failures == 0) std::printf("all %zu criteria passed\n", criteria.size());
  return failures;
}
