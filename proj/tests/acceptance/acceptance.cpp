#include <iostream>
#include <map>
#include <string>

#include "wasep/config.hpp"
#include "wasep/verify.hpp"

using namespace wasep;

int main(int argc, char** argv) {
  ExperimentConfig config;
  if (argc > 1) config = parse_config(argv[1]);
  Verifier verifier(config, {0, &std::clog});
  std::map<int, CriterionResult> results;
  for (const auto& suite : Verifier::suite_names()) {
    try {
      for (const auto& c : verifier.run(suite).criteria) results[std::stoi(c.id.substr(1))] = c;
    } catch (const std::exception& e) {
      std::cout << "[FAIL] suite " << suite << ": " << e.what() << std::endl;
      return 1;
    }
  }
  int failed = 0;
  std::cout << "\n";
  for (const auto& [k, c] : results) {
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.id << " " << c.title << ": " << c.message << "\n";
    failed += !c.passed;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << results.size() - failed << "/" << results.size() << std::endl;
  return failed ? 1 : 0;
}
