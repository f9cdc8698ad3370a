// vemfuse: command-line surface for the knowledge-fusion pipeline.
// Subcommands: prepare, pretrain, fuse, eval, densify-stats, diag.
//
// Exit codes: 0 success, 1 diagnostic failure, 2 validation/config error,
// 3 missing checkpoint, 4 non-finite training loss.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vemfuse/checkpoint.hpp"
#include "vemfuse/densify.hpp"
#include "vemfuse/elbo.hpp"
#include "vemfuse/eval.hpp"
#include "vemfuse/fixtures.hpp"
#include "vemfuse/grad_check.hpp"
#include "vemfuse/kg_io.hpp"
#include "vemfuse/losses.hpp"
#include "vemfuse/trainer.hpp"

namespace fs = std::filesystem;
using namespace vemfuse;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitDiagFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitMissingCheckpoint = 3;
constexpr int kExitDiverged = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << content;
}

DatasetPaths data_dir_paths(const std::string& dir) {
  auto pick = [&dir](std::initializer_list<const char*> names) {
    for (const char* n : names)
      if (fs::exists(dir + "/" + n)) return dir + "/" + n;
    return std::string();
  };
  DatasetPaths p;
  p.train = pick({"train.tsv", "train.txt"});
  if (p.train.empty()) p.train = dir + "/train.tsv";  // error message points here
  p.valid = pick({"valid.tsv", "valid.txt"});
  p.test = pick({"test.tsv", "test.txt"});
  p.entity_text = pick({"entity_text.tsv", "entity2text.txt"});
  p.relation_text = pick({"relation_text.tsv", "relation2text.txt"});
  return p;
}

std::string run_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("VEMFUSE_RUN_DIR")) return env;
  return "runs";
}

struct StructArch {
  StructConfig cfg;
  uint64_t init_seed = 0;
};
struct TextArch {
  TextConfig cfg;
  uint64_t init_seed = 0;
  int32_t vocab_size = 0;
};

std::string composition_name(Composition c) {
  switch (c) {
    case Composition::kSubtract: return "subtract";
    case Composition::kMultiply: return "multiply";
    case Composition::kCircularCorrelation: return "ccorr";
  }
  return "subtract";
}

Composition composition_from(const std::string& s) {
  if (s == "subtract") return Composition::kSubtract;
  if (s == "multiply") return Composition::kMultiply;
  if (s == "ccorr") return Composition::kCircularCorrelation;
  throw std::runtime_error("unknown composition: " + s);
}

void save_struct_arch(const std::string& prefix, const StructArch& a) {
  nlohmann::ordered_json j;
  j["type"] = "struct";
  j["dim"] = a.cfg.dim;
  j["layers"] = a.cfg.layers;
  j["composition"] = composition_name(a.cfg.composition);
  j["activation"] = a.cfg.activation == Activation::kTanh
                        ? "tanh"
                        : (a.cfg.activation == Activation::kRelu ? "relu" : "identity");
  j["init_seed"] = a.init_seed;
  write_file(prefix + ".arch.json", j.dump(2));
}

void save_text_arch(const std::string& prefix, const TextArch& a) {
  nlohmann::ordered_json j;
  j["type"] = "text";
  j["dim"] = a.cfg.dim;
  j["max_len"] = a.cfg.max_len;
  j["attention"] = a.cfg.use_attention;
  j["pooling"] = a.cfg.pooling == Pooling::kCls ? "cls" : "mean";
  j["min_count"] = a.cfg.min_count;
  j["vocab_size"] = a.vocab_size;
  j["init_seed"] = a.init_seed;
  write_file(prefix + ".arch.json", j.dump(2));
}

nlohmann::json load_arch(const std::string& prefix) {
  return nlohmann::json::parse(read_file(prefix + ".arch.json"));
}

StructArch struct_arch_from(const nlohmann::json& j) {
  StructArch a;
  a.cfg.dim = j.value("dim", 64);
  a.cfg.layers = j.value("layers", 1);
  a.cfg.composition = composition_from(j.value("composition", "subtract"));
  const std::string act = j.value("activation", "tanh");
  a.cfg.activation = act == "tanh" ? Activation::kTanh
                                   : (act == "relu" ? Activation::kRelu : Activation::kIdentity);
  a.init_seed = j.value("init_seed", 0);
  return a;
}

TextArch text_arch_from(const nlohmann::json& j) {
  TextArch a;
  a.cfg.dim = j.value("dim", 64);
  a.cfg.max_len = j.value("max_len", 64);
  a.cfg.use_attention = j.value("attention", true);
  a.cfg.pooling = j.value("pooling", "cls") == std::string("cls") ? Pooling::kCls : Pooling::kMean;
  a.cfg.min_count = j.value("min_count", 1);
  a.init_seed = j.value("init_seed", 0);
  a.vocab_size = j.value("vocab_size", 0);
  return a;
}

void require_checkpoint(const std::string& prefix) {
  if (!checkpoint_exists(prefix) || !fs::exists(prefix + ".arch.json"))
    throw std::system_error(std::make_error_code(std::errc::no_such_file_or_directory),
                            "checkpoint not found: " + prefix);
}

void write_manifest(const std::string& run_dir, const std::string& command,
                    const std::string& data_dir, const TrainConfig& tc, const FusionConfig& fc,
                    const nlohmann::ordered_json& extra) {
  nlohmann::ordered_json j;
  j["tool"] = "vemfuse";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = tc.seed;
  j["data_dir"] = data_dir;
  nlohmann::ordered_json hashes;
  for (const char* f :
       {"train.tsv", "valid.tsv", "test.tsv", "entity_text.tsv", "relation_text.tsv"}) {
    const std::string path = data_dir + "/" + std::string(f);
    if (fs::exists(path)) hashes[f] = file_content_hash(path);
  }
  j["data_hashes"] = hashes;
  j["train_config"] = nlohmann::json::parse(train_config_to_json_text(tc));
  j["fusion_config"] = nlohmann::json::parse(fusion_config_to_json_text(fc));
  j["extra"] = extra;
  write_file(run_dir + "/manifest.json", j.dump(2));
}

struct LoadedBundle {
  LoadedDataset ds;
  Vocab vocab;
};

LoadedBundle load_bundle(const std::string& dir, int max_text_len, int min_count) {
  LoadedBundle b;
  LoadOptions opts;
  opts.max_text_len = max_text_len;
  b.ds = load_dataset(data_dir_paths(dir), opts);
  augment_inverse(b.ds.graph, b.ds.split);
  b.vocab = build_vocab(b.ds.graph.text, min_count);
  return b;
}

std::string ranks_to_jsonl(const std::vector<RankResult>& ranks) {
  std::string out;
  for (const RankResult& r : ranks) {
    nlohmann::ordered_json j;
    j["head"] = r.head;
    j["relation"] = r.relation;
    j["target"] = r.target;
    j["head_direction"] = r.head_direction;
    j["rank"] = r.rank;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<RankResult> ranks_from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rank stream: " + path);
  std::vector<RankResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    RankResult r;
    r.head = j.at("head");
    r.relation = j.at("relation");
    r.target = j.at("target");
    r.head_direction = j.at("head_direction");
    r.rank = j.at("rank");
    out.push_back(r);
  }
  return out;
}

// ---- prepare -------------------------------------------------------------------

int cmd_prepare(const DatasetPaths& paths, double fraction, uint64_t seed, int max_text_len,
                const std::string& out_dir, const std::string& jaccard_csv) {
  LoadOptions opts;
  opts.max_text_len = max_text_len;
  auto ds = load_dataset(paths, opts);

  if (fraction < 1.0) {
    ds.split = sparsify(ds.split, fraction, seed);
    ds.graph.triples = ds.split.train;
    ds.graph.rebuild_index();
  }
  ds.graph.validate();

  write_dataset(out_dir, ds.graph, ds.split);

  // Stats are reported for both the raw bundle and the augmented view; the
  // bundle itself stays raw and is augmented deterministically at load time.
  KnowledgeGraph aug_graph = ds.graph;
  TripleSplit aug_split = ds.split;
  augment_inverse(aug_graph, aug_split);
  nlohmann::ordered_json stats =
      nlohmann::ordered_json::parse(dataset_stats_json(ds.graph, ds.split, ds.report));
  stats["augmented_relations"] = aug_graph.num_relations();
  stats["augmented_train_triples"] = aug_split.train.size();
  stats["fraction"] = fraction;
  stats["seed"] = seed;
  write_file(out_dir + "/stats.json", stats.dump(2));
  std::cout << stats.dump(2) << std::endl;

  if (!jaccard_csv.empty()) {
    auto m = relation_jaccard(ds.graph);
    std::ostringstream csv;
    csv << "relation";
    for (int32_t r = 0; r < ds.graph.num_relations(); ++r)
      csv << ',' << ds.graph.relation_names[static_cast<size_t>(r)];
    csv << '\n';
    for (int32_t i = 0; i < ds.graph.num_relations(); ++i) {
      csv << ds.graph.relation_names[static_cast<size_t>(i)];
      for (int32_t j = 0; j < ds.graph.num_relations(); ++j)
        csv << ',' << m[static_cast<size_t>(i)][static_cast<size_t>(j)];
      csv << '\n';
    }
    write_file(jaccard_csv, csv.str());
  }
  return 0;
}

// ---- pretrain ------------------------------------------------------------------

int cmd_pretrain(const std::string& data_dir, const std::string& model_kind,
                 const TrainConfig& tc, const FusionConfig& fc, const StructArch& sa,
                 const TextArch& ta, int max_text_len, const std::string& run_dir,
                 const std::string& resume, int64_t start_epoch) {
  auto bundle = load_bundle(data_dir, max_text_len, ta.cfg.min_count);
  nlohmann::ordered_json extra;
  extra["model"] = model_kind;
  extra["resume"] = resume;
  extra["start_epoch"] = start_epoch;
  write_manifest(run_dir, "pretrain", data_dir, tc, fc, extra);

  RunLog log;
  if (model_kind == "struct") {
    StructModel<float> model(bundle.ds.graph, sa.cfg, sa.init_seed);
    if (!resume.empty()) {
      require_checkpoint(resume);
      load_checkpoint_f32(resume, model.parameters());
    }
    log = pretrain_struct(model, bundle.ds.graph, bundle.ds.split, fc, tc, tc.pretrain_epochs,
                          start_epoch);
    save_checkpoint_f32(run_dir + "/struct", model.parameters());
    save_struct_arch(run_dir + "/struct", sa);
  } else {
    TextModel<float> model(bundle.ds.graph, bundle.vocab, ta.cfg, ta.init_seed);
    if (!resume.empty()) {
      require_checkpoint(resume);
      load_checkpoint_f32(resume, model.parameters());
    }
    log = pretrain_text(model, bundle.ds.graph, bundle.ds.split, fc, tc, tc.pretrain_epochs,
                        start_epoch);
    save_checkpoint_f32(run_dir + "/text", model.parameters());
    TextArch out_arch = ta;
    out_arch.vocab_size = bundle.vocab.size();
    save_text_arch(run_dir + "/text", out_arch);
    save_vocab(bundle.vocab, run_dir + "/vocab.tsv");
  }
  write_file(run_dir + "/runlog.jsonl", runlog_to_jsonl(log));
  if (!log.records.empty()) {
    const auto& last = log.records.back();
    std::cout << "final losses:";
    for (const auto& [k, v] : last.losses) std::cout << ' ' << k << '=' << v;
    std::cout << std::endl;
  }
  return 0;
}

// ---- fuse ----------------------------------------------------------------------

int cmd_fuse(const std::string& data_dir, const std::string& struct_ckpt,
             const std::string& text_ckpt, const TrainConfig& tc, const FusionConfig& fc,
             int max_text_len, const std::string& run_dir, int64_t start_epoch) {
  require_checkpoint(struct_ckpt);
  require_checkpoint(text_ckpt);
  const StructArch sa = struct_arch_from(load_arch(struct_ckpt));
  const TextArch ta = text_arch_from(load_arch(text_ckpt));
  auto bundle = load_bundle(data_dir, max_text_len, ta.cfg.min_count);
  if (ta.vocab_size != 0 && ta.vocab_size != bundle.vocab.size())
    throw std::runtime_error("vocabulary size mismatch with the text checkpoint");

  nlohmann::ordered_json extra;
  extra["struct_ckpt"] = struct_ckpt;
  extra["text_ckpt"] = text_ckpt;
  extra["start_epoch"] = start_epoch;
  write_manifest(run_dir, "fuse", data_dir, tc, fc, extra);

  StructModel<float> p_model(bundle.ds.graph, sa.cfg, sa.init_seed);
  load_checkpoint_f32(struct_ckpt, p_model.parameters());
  TextModel<float> q_model(bundle.ds.graph, bundle.vocab, ta.cfg, ta.init_seed);
  load_checkpoint_f32(text_ckpt, q_model.parameters());

  auto outcome = fuse(p_model, q_model, bundle.ds.graph, bundle.ds.split, fc, tc, start_epoch);

  save_checkpoint_f32(run_dir + "/struct", p_model.parameters());
  save_struct_arch(run_dir + "/struct", sa);
  save_checkpoint_f32(run_dir + "/text", q_model.parameters());
  TextArch out_ta = ta;
  out_ta.vocab_size = bundle.vocab.size();
  save_text_arch(run_dir + "/text", out_ta);
  write_file(run_dir + "/runlog.jsonl", runlog_to_jsonl(outcome.log));

  nlohmann::ordered_json sel;
  sel["chosen"] = outcome.chosen == ModelTag::kText ? "text" : "struct";
  sel["dev_mrr_struct"] = outcome.final_dev_mrr_struct;
  sel["dev_mrr_text"] = outcome.final_dev_mrr_text;
  write_file(run_dir + "/chosen.json", sel.dump(2));
  std::cout << sel.dump(2) << std::endl;
  return 0;
}

// ---- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& data_dir, const std::string& ckpt, const std::string& split_name,
             const std::string& tie_policy, uint64_t seed, int dump_k, int workers,
             int max_text_len, const std::string& out_file, const std::string& ranks_file,
             const std::string& compare_ranks, const std::string& improvement_csv) {
  require_checkpoint(ckpt);
  const auto arch = load_arch(ckpt);
  const std::string type = arch.value("type", "struct");
  const int min_count = type == "text" ? text_arch_from(arch).cfg.min_count : 1;
  auto bundle = load_bundle(data_dir, max_text_len, min_count);
  const auto& triples = split_name == "test" ? bundle.ds.split.test : bundle.ds.split.valid;

  EvalOptions opts;
  opts.tie_policy = tie_policy == "expected" ? TiePolicy::kExpected : TiePolicy::kRandom;
  opts.seed = seed;
  opts.top_k = dump_k;

  EvalResult res;
  int64_t text_forwards = -1;
  if (type == "struct") {
    const StructArch sa = struct_arch_from(arch);
    StructModel<float> model(bundle.ds.graph, sa.cfg, sa.init_seed);
    load_checkpoint_f32(ckpt, model.parameters());
    // The graph is encoded once per scorer; workers share the cached values.
    std::vector<std::unique_ptr<StructScorer<float>>> adapters;
    std::vector<QueryScorer*> scorers;
    for (int w = 0; w < std::max(1, workers); ++w) {
      adapters.push_back(std::make_unique<StructScorer<float>>(model, bundle.ds.graph));
      scorers.push_back(adapters.back().get());
    }
    res = evaluate_parallel(scorers, bundle.ds.graph, bundle.ds.split, triples, opts);
  } else {
    const TextArch ta = text_arch_from(arch);
    std::vector<std::unique_ptr<TextModel<float>>> models;
    std::vector<std::unique_ptr<TextScorer<float>>> adapters;
    std::vector<QueryScorer*> scorers;
    for (int w = 0; w < std::max(1, workers); ++w) {
      models.push_back(
          std::make_unique<TextModel<float>>(bundle.ds.graph, bundle.vocab, ta.cfg, ta.init_seed));
      load_checkpoint_f32(ckpt, models.back()->parameters());
      adapters.push_back(std::make_unique<TextScorer<float>>(*models.back(), bundle.ds.graph));
      scorers.push_back(adapters.back().get());
    }
    res = evaluate_parallel(scorers, bundle.ds.graph, bundle.ds.split, triples, opts);
    text_forwards = 0;
    for (auto& m : models) text_forwards += m->forward_count();
  }

  nlohmann::ordered_json out = nlohmann::ordered_json::parse(metrics_to_json(res.metrics));
  if (text_forwards >= 0) out["encoder_forwards"] = text_forwards;
  const std::string payload = out.dump(2);
  std::cout << payload << std::endl;
  if (!out_file.empty()) write_file(out_file, payload);
  if (!ranks_file.empty()) write_file(ranks_file, ranks_to_jsonl(res.ranks));

  if (dump_k > 0) {
    nlohmann::ordered_json dump = nlohmann::ordered_json::array();
    for (const RankResult& r : res.ranks) {
      nlohmann::ordered_json e;
      e["query_head"] = bundle.ds.graph.entity_names[static_cast<size_t>(r.head)];
      e["query_relation"] = bundle.ds.graph.relation_names[static_cast<size_t>(r.relation)];
      e["gold"] = bundle.ds.graph.entity_names[static_cast<size_t>(r.target)];
      e["gold_rank"] = r.rank;
      nlohmann::ordered_json cands = nlohmann::ordered_json::array();
      for (const auto& [ent, score] : r.top_k) {
        nlohmann::ordered_json c;
        c["entity"] = bundle.ds.graph.entity_names[static_cast<size_t>(ent)];
        c["score"] = score;
        cands.push_back(c);
      }
      e["top_k"] = cands;
      dump.push_back(e);
    }
    write_file(out_file.empty() ? "topk.json" : out_file + ".topk.json", dump.dump(2));
  }

  if (!compare_ranks.empty()) {
    const auto before = ranks_from_jsonl(compare_ranks);
    const auto counts = improvement_diff(before, res.ranks);
    std::ostringstream csv;
    csv << "relation,improved_queries\n";
    for (const auto& [rel, n] : counts)
      csv << bundle.ds.graph.relation_names[static_cast<size_t>(rel)] << ',' << n << '\n';
    if (!improvement_csv.empty())
      write_file(improvement_csv, csv.str());
    else
      std::cout << csv.str();
  }
  return 0;
}

// ---- densify-stats --------------------------------------------------------------

int cmd_densify_stats(const std::string& data_dir, const std::string& struct_ckpt,
                      const std::string& text_ckpt, const FusionConfig& fc, uint64_t seed,
                      int batches, int max_text_len) {
  require_checkpoint(struct_ckpt);
  require_checkpoint(text_ckpt);
  const StructArch sa = struct_arch_from(load_arch(struct_ckpt));
  const TextArch ta = text_arch_from(load_arch(text_ckpt));
  auto bundle = load_bundle(data_dir, max_text_len, ta.cfg.min_count);
  StructModel<float> p_model(bundle.ds.graph, sa.cfg, sa.init_seed);
  load_checkpoint_f32(struct_ckpt, p_model.parameters());
  TextModel<float> q_model(bundle.ds.graph, bundle.vocab, ta.cfg, ta.init_seed);
  load_checkpoint_f32(text_ckpt, q_model.parameters());

  DensifyCounters counters;
  const uint64_t hash_before = bundle.ds.graph.structure_hash();
  Rng master(seed);
  for (int b = 0; b < batches; ++b)
    densify_batch(bundle.ds.graph, p_model, q_model, fc,
                  master.fork("densify-stats", static_cast<uint64_t>(b)), &counters);

  nlohmann::ordered_json j;
  j["batches"] = batches;
  j["generated_queries"] = counters.generated;
  j["overlay_edges"] = counters.overlay_edges;
  j["mean_teacher_confidence"] = counters.mean_label_confidence;
  j["skipped_no_candidate"] = counters.skipped_no_candidate;
  j["short_neighbor_lists"] = counters.short_neighbor_lists;
  j["ground_truth_labels"] = counters.ground_truth_labels;
  j["base_graph_unchanged"] = bundle.ds.graph.structure_hash() == hash_before;
  std::cout << j.dump(2) << std::endl;
  return 0;
}

// ---- diag ------------------------------------------------------------------------

// Tiny evidence-decomposition fixture, constructed in code: 5 entities,
// 2 base relations, 4 observed triples, 1 enumerable unobserved query.
LoadedDataset tiny_diag_dataset() {
  KnowledgeGraph g;
  const char* texts[] = {"alpha source", "beta node", "gamma node", "delta sink", "epsilon sink"};
  for (int i = 0; i < 5; ++i) {
    g.entity_ids.emplace("e" + std::to_string(i), i);
    g.entity_names.push_back("e" + std::to_string(i));
    g.text.entity_text.push_back(texts[i]);
  }
  g.relation_ids.emplace("r0", 0);
  g.relation_names.push_back("r0");
  g.text.relation_text.push_back("feeds into");
  g.relation_ids.emplace("r1", 1);
  g.relation_names.push_back("r1");
  g.text.relation_text.push_back("drains from");
  LoadedDataset ds;
  ds.split.train = {Triple{0, 0, 1}, Triple{1, 1, 2}, Triple{3, 0, 4}, Triple{0, 1, 3}};
  ds.split.valid = {Triple{2, 0, 3}};
  ds.split.test = {Triple{4, 1, 0}};
  g.triples = ds.split.train;
  g.rebuild_index();
  ds.split.rebuild_label_index();
  ds.graph = std::move(g);
  augment_inverse(ds.graph, ds.split);
  return ds;
}

int cmd_diag() {
  auto ds = tiny_diag_dataset();
  StructConfig scfg;
  scfg.dim = 8;
  StructModel<double> p_model(ds.graph, scfg, 2024);
  TextConfig tcfg;
  tcfg.dim = 8;
  TextModel<double> q_model(ds.graph, build_vocab(ds.graph.text, 1), tcfg, 2025);

  const ElboQuery uq{2, 1};  // (e2, r1, ?) is absent from the train graph
  auto q_dist = q_model.predict(uq.head, uq.relation, ds.graph.text, 1.0);
  auto rep = elbo_diagnostic(ds.graph, p_model, ds.split.train, {uq}, {q_dist});
  auto posterior = exact_posterior_single(ds.graph, p_model, ds.split.train, uq);
  auto tight = elbo_diagnostic(ds.graph, p_model, ds.split.train, {uq}, {posterior});

  // Finite-difference sweep across the combined objectives on toy models.
  FusionConfig fc;
  fc.n_queries = 2;
  fc.m_neighbors = 1;
  const TrainQueries tq = build_train_queries(ds.split);
  const auto seqs = assemble_all(q_model, ds.graph, tq);
  auto pg = PreparedGraph<double>::build(ds.graph, nullptr);

  double max_err = 0.0;
  {
    auto build = [&](Tape<double>& t) {
      auto enc = p_model.encode(t, pg);
      auto logits = p_model.score_queries(t, enc, tq.queries);
      auto sup = supervised_loss(t, logits, tq.labels, fc.label_smoothing);
      Tensor<double> teacher =
          Tensor<double>::zeros({static_cast<int64_t>(tq.queries.size()), ds.graph.num_entities()});
      for (size_t i = 0; i < tq.queries.size(); ++i) {
        auto d =
            q_model.predict(tq.queries[i].first, tq.queries[i].second, ds.graph.text, fc.tx_ml_t);
        std::copy(d.begin(), d.end(), teacher.row_ptr(static_cast<int64_t>(i)));
      }
      auto ml = ml_loss_struct(t, teacher, logits, fc);
      auto vem = vem_m_loss(t, teacher, logits, fc);
      return combined_m_objective(t, sup, vem, ml, fc);
    };
    auto loss_value = [&]() {
      Tape<double> tape;
      return tape.scalar_val(build(tape));
    };
    p_model.zero_grad();
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    Rng rng(17);
    max_err = std::max(
        max_err, finite_diff_check(loss_value, p_model.parameters(), 1e-5, 10, rng).max_rel_error);
  }
  {
    auto build = [&](Tape<double>& t) {
      auto logits = q_model.score_queries(t, seqs);
      auto sup = supervised_loss(t, logits, tq.labels, fc.label_smoothing);
      const auto teacher_rows = p_model.predict_batch(tq.queries, ds.graph, nullptr, fc.st_ml_t);
      Tensor<double> teacher =
          Tensor<double>::zeros({static_cast<int64_t>(tq.queries.size()), ds.graph.num_entities()});
      for (size_t i = 0; i < teacher_rows.size(); ++i)
        std::copy(teacher_rows[i].begin(), teacher_rows[i].end(),
                  teacher.row_ptr(static_cast<int64_t>(i)));
      auto ml = ml_loss_text(t, teacher, logits, fc);
      auto vem = vem_e_loss(t, logits, teacher, fc);
      return combined_e_objective(t, sup, vem, ml, fc);
    };
    auto loss_value = [&]() {
      Tape<double> tape;
      return tape.scalar_val(build(tape));
    };
    q_model.zero_grad();
    {
      Tape<double> tape;
      tape.backward(build(tape));
    }
    Rng rng(19);
    max_err = std::max(
        max_err, finite_diff_check(loss_value, q_model.parameters(), 1e-5, 10, rng).max_rel_error);
  }

  nlohmann::ordered_json j;
  j["elbo_residual"] = rep.residual;
  j["identity_residual"] = rep.max_identity_residual;
  j["posterior_kl"] = tight.kl;
  j["posterior_elbo_gap"] = std::fabs(tight.elbo - tight.log_likelihood);
  j["max_grad_rel_error"] = max_err;
  const bool ok = rep.residual < 1e-8 && rep.max_identity_residual < 1e-10 && tight.kl < 1e-10 &&
                  j["posterior_elbo_gap"].get<double>() < 1e-10 && max_err < 1e-4;
  j["ok"] = ok;
  std::cout << j.dump(2) << std::endl;
  return ok ? 0 : kExitDiagFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VEM and mutual-learning knowledge fusion for sparse KG completion"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // prepare
  auto* prep = app.add_subcommand("prepare", "Load, validate, sparsify and bundle a dataset");
  std::string p_train, p_valid, p_test, p_ent, p_rel, p_out, p_jaccard, p_data;
  double p_fraction = 1.0;
  uint64_t p_seed = 0;
  int p_maxlen = 64;
  prep->add_option("--data", p_data, "Directory with train/valid/test + text TSVs");
  prep->add_option("--train", p_train);
  prep->add_option("--valid", p_valid);
  prep->add_option("--test", p_test);
  prep->add_option("--entity-text", p_ent);
  prep->add_option("--relation-text", p_rel);
  prep->add_option("--fraction", p_fraction, "Uniform train subsample fraction in (0,1]");
  prep->add_option("--seed", p_seed);
  prep->add_option("--max-text-len", p_maxlen);
  prep->add_option("--out", p_out)->required();
  prep->add_option("--jaccard-csv", p_jaccard, "Write the relation-Jaccard matrix as CSV");

  // shared training options
  std::string data_dir, train_cfg_file, fusion_cfg_file, run_dir_flag, run_name = "run";
  uint64_t seed_flag = 0;
  bool seed_set = false;
  int epochs_flag = -1;
  int maxlen_flag = 64;
  int64_t start_epoch = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_dir)->required();
    cmd->add_option("--train-config", train_cfg_file);
    cmd->add_option("--config", fusion_cfg_file,
                    "Fusion config JSON (weights, temperatures, N, M)");
    cmd->add_option("--run-dir", run_dir_flag, "Output root (default $VEMFUSE_RUN_DIR or ./runs)");
    cmd->add_option("--name", run_name, "Run directory name under the root");
    cmd->add_option_function<uint64_t>(
        "--seed",
        [&](uint64_t s) {
          seed_flag = s;
          seed_set = true;
        },
        "Master seed override");
    cmd->add_option("--max-text-len", maxlen_flag);
    cmd->add_option("--start-epoch", start_epoch, "Stream index of the first epoch");
  };

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Supervised pre-training for one encoder");
  std::string model_kind = "struct", resume;
  int dim_flag = 64, layers_flag = 1;
  std::string comp_flag = "subtract", pooling_flag = "cls";
  bool no_attention = false;
  int min_count_flag = 1;
  add_common(pre);
  pre->add_option("--model", model_kind)->check(CLI::IsMember({"struct", "text"}));
  pre->add_option("--epochs", epochs_flag);
  pre->add_option("--dim", dim_flag);
  pre->add_option("--layers", layers_flag);
  pre->add_option("--composition", comp_flag)
      ->check(CLI::IsMember({"subtract", "multiply", "ccorr"}));
  pre->add_flag("--no-attention", no_attention);
  pre->add_option("--pooling", pooling_flag)->check(CLI::IsMember({"cls", "mean"}));
  pre->add_option("--min-count", min_count_flag);
  pre->add_option("--resume", resume, "Checkpoint prefix to continue from");

  // fuse
  auto* fz = app.add_subcommand("fuse", "Alternating VEM/ML fusion of two pretrained encoders");
  std::string struct_ckpt, text_ckpt;
  add_common(fz);
  fz->add_option("--struct-ckpt", struct_ckpt)->required();
  fz->add_option("--text-ckpt", text_ckpt)->required();
  fz->add_option("--epochs", epochs_flag, "Fusion rounds override");

  // eval
  auto* ev = app.add_subcommand("eval", "Filtered bidirectional ranking evaluation");
  std::string ckpt, split_name = "test", tie_policy = "random", out_file, ranks_file;
  std::string compare_ranks, improvement_csv;
  int dump_k = 0, workers = 1;
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--split", split_name)->check(CLI::IsMember({"valid", "test"}));
  ev->add_option("--tie-policy", tie_policy)->check(CLI::IsMember({"random", "expected"}));
  ev->add_option("--seed", seed_flag);
  ev->add_option("--dump-topk", dump_k);
  ev->add_option("--workers", workers)->check(CLI::PositiveNumber);
  ev->add_option("--max-text-len", maxlen_flag);
  ev->add_option("--out", out_file, "Metrics JSON output path");
  ev->add_option("--ranks", ranks_file, "Rank stream JSONL output path");
  ev->add_option("--compare-ranks", compare_ranks, "Earlier rank stream for improvement counts");
  ev->add_option("--improvement-csv", improvement_csv);

  // densify-stats
  auto* dn = app.add_subcommand("densify-stats", "Run densification batches and report counters");
  std::string dn_struct, dn_text;
  int dn_batches = 10;
  dn->add_option("--data", data_dir)->required();
  dn->add_option("--struct-ckpt", dn_struct)->required();
  dn->add_option("--text-ckpt", dn_text)->required();
  dn->add_option("--config", fusion_cfg_file);
  dn->add_option("--seed", seed_flag);
  dn->add_option("--batches", dn_batches);
  dn->add_option("--max-text-len", maxlen_flag);

  // diag
  auto* dg = app.add_subcommand(
      "diag", "Evidence-decomposition and gradient diagnostics on the tiny fixture");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) {
      DatasetPaths paths;
      if (!p_data.empty()) paths = data_dir_paths(p_data);
      if (!p_train.empty()) paths.train = p_train;
      if (!p_valid.empty()) paths.valid = p_valid;
      if (!p_test.empty()) paths.test = p_test;
      if (!p_ent.empty()) paths.entity_text = p_ent;
      if (!p_rel.empty()) paths.relation_text = p_rel;
      try {
        return cmd_prepare(paths, p_fraction, p_seed, p_maxlen, p_out, p_jaccard);
      } catch (const std::exception& e) {
        std::cerr << "prepare: " << e.what() << std::endl;
        return kExitValidation;
      }
    }

    TrainConfig tc;
    if (!train_cfg_file.empty()) tc = train_config_from_json_text(read_file(train_cfg_file));
    FusionConfig fc;
    if (!fusion_cfg_file.empty()) fc = fusion_config_from_json_text(read_file(fusion_cfg_file));
    if (seed_set) tc.seed = seed_flag;
    if (epochs_flag >= 0) {
      tc.pretrain_epochs = epochs_flag;
      tc.fusion_epochs = epochs_flag;
    }
    const std::string run_dir = run_root(run_dir_flag) + "/" + run_name;

    if (pre->parsed()) {
      StructArch sa;
      sa.cfg.dim = dim_flag;
      sa.cfg.layers = layers_flag;
      sa.cfg.composition = composition_from(comp_flag);
      sa.init_seed = tc.seed;
      TextArch ta;
      ta.cfg.dim = dim_flag;
      ta.cfg.max_len = maxlen_flag;
      ta.cfg.use_attention = !no_attention;
      ta.cfg.pooling = pooling_flag == "cls" ? Pooling::kCls : Pooling::kMean;
      ta.cfg.min_count = min_count_flag;
      ta.init_seed = tc.seed;
      return cmd_pretrain(data_dir, model_kind, tc, fc, sa, ta, maxlen_flag, run_dir, resume,
                          start_epoch);
    }
    if (fz->parsed())
      return cmd_fuse(data_dir, struct_ckpt, text_ckpt, tc, fc, maxlen_flag, run_dir, start_epoch);
    if (ev->parsed())
      return cmd_eval(data_dir, ckpt, split_name, tie_policy, seed_flag, dump_k, workers,
                      maxlen_flag, out_file, ranks_file, compare_ranks, improvement_csv);
    if (dn->parsed())
      return cmd_densify_stats(data_dir, dn_struct, dn_text, fc, seed_flag, dn_batches,
                               maxlen_flag);
    if (dg->parsed()) return cmd_diag();
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << std::endl;
    return kExitDiverged;
  } catch (const std::system_error& e) {
    std::cerr << e.what() << std::endl;
    return kExitMissingCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitValidation;
  }
  return 0;
}
