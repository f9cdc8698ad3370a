#pragma once
// Dataset I/O: TSV triple and text files, prepared-bundle directories and
// the stats JSON report.

#include <string>
#include <vector>

#include "vemfuse/kg.hpp"

namespace vemfuse {

struct DatasetPaths {
  std::string train;
  std::string valid;
  std::string test;
  std::string entity_text;    // optional: empty means no text file
  std::string relation_text;  // optional
};

struct LoadOptions {
  int max_text_len = 64;  // retained words per description
};

struct LoadedDataset {
  KnowledgeGraph graph;
  TripleSplit split;
  LoadReport report;
};

// Builds the graph from the union vocabulary of all splits plus text files;
// adjacency comes from the train split only. Malformed lines raise with the
// file name and line number; within-split duplicates are dropped and counted;
// cross-split duplicates raise (leakage).
LoadedDataset load_dataset(const DatasetPaths& paths, const LoadOptions& opts = {});

// Writes split TSVs plus text TSVs into `dir` (created if needed).
void write_dataset(const std::string& dir, const KnowledgeGraph& graph, const TripleSplit& split);

// Stats JSON (counts, degree stats, report counters) for a loaded dataset.
std::string dataset_stats_json(const KnowledgeGraph& graph, const TripleSplit& split,
                               const LoadReport& report);

// FNV-1a content hash of a file, for run manifests.
uint64_t file_content_hash(const std::string& path);

std::vector<std::vector<std::string>> read_tsv(const std::string& path, size_t min_cols);

}  // namespace vemfuse
