// Writes the split-signal synthetic dataset (and its tags) to a directory.
#include <cstdio>
#include <string>

#include "vemfuse/fixtures.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: vemfuse-make-fixture <out-dir> [seed]\n");
    return 2;
  }
  vemfuse::SyntheticSpec spec;
  if (argc > 2) spec.seed = std::strtoull(argv[2], nullptr, 10);
  vemfuse::write_split_signal(vemfuse::generate_split_signal(spec), argv[1]);
  std::printf("wrote split-signal dataset to %s\n", argv[1]);
  return 0;
}
