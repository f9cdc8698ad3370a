#include "vemfuse/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "vemfuse/kg_io.hpp"

namespace vemfuse {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocab build_vocab(const TextStore& store, int min_count) {
  std::map<std::string, int64_t> counts;
  auto count_all = [&counts](const std::vector<std::string>& texts) {
    for (const std::string& s : texts)
      for (const std::string& tok : tokenize(s)) counts[tok]++;
  };
  count_all(store.entity_text);
  count_all(store.relation_text);

  std::vector<std::pair<std::string, int64_t>> kept;
  for (const auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  v.tokens.reserve(kept.size());
  for (const auto& [tok, n] : kept) {
    v.token_ids.emplace(tok, v.size());
    v.tokens.push_back(tok);
  }
  return v;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocab: " + path);
  out << "[CLS]\t" << Vocab::kCls << "\n[SEP]\t" << Vocab::kSep << "\n[PAD]\t" << Vocab::kPad
      << "\n[UNK]\t" << Vocab::kUnk << "\n[INV]\t" << Vocab::kInv << "\n";
  for (size_t i = 0; i < vocab.tokens.size(); ++i)
    out << vocab.tokens[i] << '\t' << (Vocab::kNumSpecial + i) << '\n';
}

Vocab load_vocab(const std::string& path) {
  Vocab v;
  for (const auto& row : read_tsv(path, 2)) {
    const int32_t id = static_cast<int32_t>(std::stol(row[1]));
    if (id < Vocab::kNumSpecial) continue;  // specials are implicit
    if (id != v.size()) throw std::runtime_error("vocab file has non-dense ids: " + path);
    v.token_ids.emplace(row[0], id);
    v.tokens.push_back(row[0]);
  }
  return v;
}

std::vector<int32_t> assemble_input(int32_t head, int32_t relation, const TextStore& store,
                                    const Vocab& vocab, int max_len, AssembleStats* stats) {
  if (head < 0 || head >= static_cast<int32_t>(store.entity_text.size()))
    throw std::out_of_range("assemble_input: head id out of range");
  if (relation < 0 || relation >= static_cast<int32_t>(store.relation_text.size()))
    throw std::out_of_range("assemble_input: relation id out of range");

  const std::string& head_text = store.entity_text[static_cast<size_t>(head)];
  const std::string& rel_text = store.relation_text[static_cast<size_t>(relation)];

  std::vector<int32_t> head_ids;
  for (const std::string& tok : tokenize(head_text)) head_ids.push_back(vocab.lookup(tok));

  std::vector<int32_t> rel_ids;
  std::string rel_rest = rel_text;
  const size_t marker_len = std::strlen(kInverseTextMarker);
  if (rel_rest.rfind(kInverseTextMarker, 0) == 0) {
    rel_ids.push_back(Vocab::kInv);
    rel_rest = rel_rest.substr(marker_len);
  }
  for (const std::string& tok : tokenize(rel_rest)) rel_ids.push_back(vocab.lookup(tok));

  if (head_ids.empty() && rel_ids.empty()) {
    if (stats) stats->empty_text_queries++;
    return {Vocab::kCls, Vocab::kSep, Vocab::kSep};
  }

  // Budget after the three special tokens. The relation segment is protected
  // up to max_len/4 tokens; the head segment absorbs the remaining cut.
  const int64_t budget = std::max<int64_t>(max_len - 3, 1);
  int64_t rel_keep = std::min<int64_t>(static_cast<int64_t>(rel_ids.size()), budget);
  int64_t head_keep = static_cast<int64_t>(head_ids.size());
  if (head_keep + rel_keep > budget) {
    rel_keep = std::min(rel_keep, std::max<int64_t>(budget - head_keep, max_len / 4));
    head_keep = std::max<int64_t>(budget - rel_keep, 0);
  }

  std::vector<int32_t> seq;
  seq.reserve(static_cast<size_t>(head_keep + rel_keep + 3));
  seq.push_back(Vocab::kCls);
  seq.insert(seq.end(), head_ids.begin(), head_ids.begin() + head_keep);
  seq.push_back(Vocab::kSep);
  seq.insert(seq.end(), rel_ids.begin(), rel_ids.begin() + rel_keep);
  seq.push_back(Vocab::kSep);
  return seq;
}

}  // namespace vemfuse
