// Writes a tiny corpus for the CLI round-trip: pairs.jsonl, dialogs.jsonl,
// noise.jsonl and a user.wav / model.wav pair under the given directory.
#include <cstdio>

#include "support.hpp"

int main(int argc, char** argv) {
  using namespace fdse::test;
  if (argc != 2) {
    std::fprintf(stderr, "usage: fdse_fixture DIR\n");
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::remove_all(dir);
  write_pair_corpus(dir, 8, 3);
  write_dialog_corpus(dir, 4, 5, 2);
  write_noise_manifest(dir, 7);
  fdse::write_wav((dir / "user.wav").string(), sine(220.0, 0.3, 24 * 1920));
  fdse::write_wav((dir / "model.wav").string(), sine(660.0, 0.2, 24 * 1920));
  return 0;
}
