// Acceptance suite runner: one pass/fail line per criterion; exit status 0
// only when every criterion holds.
#include <cstdio>
#include <iostream>

#include "brwlab/acceptance.hpp"

int main(int argc, char** argv) {
  std::uint64_t seed = 20240001;
  unsigned threads = 1;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--seed" && i + 1 < argc) seed = std::strtoull(argv[++i], nullptr, 10);
    else if (arg == "--threads" && i + 1 < argc) threads = unsigned(std::strtoul(argv[++i], nullptr, 10));
  }
  auto results = brwlab::run_acceptance(seed, threads, &std::cout);
  bool all = true;
  double total = 0.0;
  for (const auto& r : results) {
    all = all && r.pass;
    total += r.seconds;
  }
  std::printf("%zu criteria, %s, %.1f s total\n", results.size(), all ? "all passed" : "FAILURES",
              total);
  return all ? 0 : 1;
}
