#include "vemfuse/kg_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace vemfuse {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string truncate_words(const std::string& s, int max_words) {
  if (max_words <= 0) return s;
  int words = 0;
  bool in_word = false;
  for (size_t i = 0; i < s.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(s[i])) != 0;
    if (!space && !in_word) {
      in_word = true;
      ++words;
      if (words > max_words) return s.substr(0, i);
    } else if (space) {
      in_word = false;
    }
  }
  return s;
}

struct RawTriple {
  std::string head, relation, tail;
};

std::vector<RawTriple> read_triple_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triple file: " + path);
  std::vector<RawTriple> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty() || cols[2].empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed triple line (expected head<TAB>relation<TAB>tail)");
    out.push_back({cols[0], cols[1], cols[2]});
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> read_tsv(const std::string& path, size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < min_cols)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected at least " +
                               std::to_string(min_cols) + " tab-separated columns");
    rows.push_back(std::move(cols));
  }
  return rows;
}

LoadedDataset load_dataset(const DatasetPaths& paths, const LoadOptions& opts) {
  LoadedDataset ds;
  KnowledgeGraph& g = ds.graph;

  auto entity_id = [&g](const std::string& name) {
    auto it = g.entity_ids.find(name);
    if (it != g.entity_ids.end()) return it->second;
    const int32_t id = g.num_entities();
    g.entity_ids.emplace(name, id);
    g.entity_names.push_back(name);
    return id;
  };
  auto relation_id = [&g](const std::string& name) {
    auto it = g.relation_ids.find(name);
    if (it != g.relation_ids.end()) return it->second;
    const int32_t id = g.num_relations();
    g.relation_ids.emplace(name, id);
    g.relation_names.push_back(name);
    return id;
  };

  const auto raw_train = read_triple_file(paths.train);
  const auto raw_valid = paths.valid.empty() ? std::vector<RawTriple>{} : read_triple_file(paths.valid);
  const auto raw_test = paths.test.empty() ? std::vector<RawTriple>{} : read_triple_file(paths.test);

  // Train vocabulary first so train-only ids are dense and come first.
  auto intern = [&](const std::vector<RawTriple>& raw, std::vector<Triple>& out) {
    out.reserve(raw.size());
    for (const RawTriple& rt : raw)
      out.push_back(Triple{entity_id(rt.head), relation_id(rt.relation), entity_id(rt.tail)});
  };
  TripleSplit& split = ds.split;
  intern(raw_train, split.train);
  const int32_t train_entities = g.num_entities();
  const int32_t train_relations = g.num_relations();
  intern(raw_valid, split.valid);
  intern(raw_test, split.test);
  ds.report.unseen_eval_entities = g.num_entities() - train_entities;
  ds.report.unseen_eval_relations = g.num_relations() - train_relations;

  // Per-split dedup (warn), cross-split duplicate is a leakage error.
  std::unordered_set<Triple, TripleHash> seen;
  auto dedup = [&](std::vector<Triple>& ts, const char* split_name, bool check_cross) {
    std::unordered_set<Triple, TripleHash> local;
    std::vector<Triple> kept;
    kept.reserve(ts.size());
    for (const Triple& t : ts) {
      if (!local.insert(t).second) {
        ds.report.duplicate_triples++;
        continue;
      }
      if (check_cross && seen.count(t))
        throw std::runtime_error(std::string("cross-split duplicate triple in ") + split_name +
                                 " (leakage check failed)");
      kept.push_back(t);
    }
    ts = std::move(kept);
    for (const Triple& t : ts) seen.insert(t);
  };
  dedup(split.train, "train", false);
  dedup(split.valid, "valid", true);
  dedup(split.test, "test", true);

  // Text store: entries may be missing (empty string) and new names in text
  // files extend the vocabulary.
  std::vector<std::pair<int32_t, std::string>> ent_text_rows, rel_text_rows;
  if (!paths.entity_text.empty())
    for (const auto& row : read_tsv(paths.entity_text, 2))
      ent_text_rows.emplace_back(entity_id(row[0]), truncate_words(row[1], opts.max_text_len));
  if (!paths.relation_text.empty())
    for (const auto& row : read_tsv(paths.relation_text, 2))
      rel_text_rows.emplace_back(relation_id(row[0]), truncate_words(row[1], opts.max_text_len));

  g.text.max_len = opts.max_text_len;
  g.text.entity_text.assign(static_cast<size_t>(g.num_entities()), "");
  g.text.relation_text.assign(static_cast<size_t>(g.num_relations()), "");
  for (auto& [id, text] : ent_text_rows) g.text.entity_text[static_cast<size_t>(id)] = text;
  for (auto& [id, text] : rel_text_rows) g.text.relation_text[static_cast<size_t>(id)] = text;
  // Relations with no text entry fall back to their name so the text encoder
  // always has a usable relation segment.
  for (int32_t r = 0; r < g.num_relations(); ++r)
    if (g.text.relation_text[static_cast<size_t>(r)].empty())
      g.text.relation_text[static_cast<size_t>(r)] = g.relation_names[static_cast<size_t>(r)];

  ds.report.empty_entity_text = g.text.empty_entity_entries();
  ds.report.empty_relation_text = g.text.empty_relation_entries();

  g.triples = split.train;
  g.rebuild_index();
  split.rebuild_label_index();
  return ds;
}

void write_dataset(const std::string& dir, const KnowledgeGraph& graph, const TripleSplit& split) {
  std::filesystem::create_directories(dir);
  auto write_triples = [&](const std::string& name, const std::vector<Triple>& ts) {
    std::ofstream out(dir + "/" + name);
    if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
    for (const Triple& t : ts)
      out << graph.entity_names[static_cast<size_t>(t.head)] << '\t'
          << graph.relation_names[static_cast<size_t>(t.relation)] << '\t'
          << graph.entity_names[static_cast<size_t>(t.tail)] << '\n';
  };
  write_triples("train.tsv", split.train);
  write_triples("valid.tsv", split.valid);
  write_triples("test.tsv", split.test);
  {
    std::ofstream out(dir + "/entity_text.tsv");
    for (int32_t e = 0; e < graph.num_entities(); ++e)
      out << graph.entity_names[static_cast<size_t>(e)] << '\t'
          << graph.text.entity_text[static_cast<size_t>(e)] << '\n';
  }
  {
    std::ofstream out(dir + "/relation_text.tsv");
    for (int32_t r = 0; r < graph.num_relations(); ++r)
      out << graph.relation_names[static_cast<size_t>(r)] << '\t'
          << graph.text.relation_text[static_cast<size_t>(r)] << '\n';
  }
}

std::string dataset_stats_json(const KnowledgeGraph& graph, const TripleSplit& split,
                               const LoadReport& report) {
  const DegreeStats deg = degree_stats(graph);
  nlohmann::ordered_json j;
  j["entities"] = graph.num_entities();
  j["relations"] = graph.num_relations();
  j["inverse_augmented"] = graph.inverse_augmented;
  j["train_triples"] = split.train.size();
  j["valid_triples"] = split.valid.size();
  j["test_triples"] = split.test.size();
  j["average_out_degree"] = deg.average_out_degree;
  j["average_out_degree_active"] = deg.average_out_degree_active;
  j["duplicate_triples_dropped"] = report.duplicate_triples;
  j["unseen_eval_entities"] = report.unseen_eval_entities;
  j["unseen_eval_relations"] = report.unseen_eval_relations;
  j["empty_entity_text"] = report.empty_entity_text;
  j["empty_relation_text"] = report.empty_relation_text;
  return j.dump(2);
}

uint64_t file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

}  // namespace vemfuse
