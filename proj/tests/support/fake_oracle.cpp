// Oracle peer for tests: serves a toy model over stdio, with fault injection.
//   fake_oracle [--kind K] [--seed S] [--shape C,H,W] [--classes N]
//               [--die-after N] [--hang-after N] [--bad-id] [--ambiguous]
//               [--slow-describe SECONDS] [--rewrite]
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>
#include <unistd.h>

#include "advlm/harness.hpp"
#include "advlm/oracle_server.hpp"
#include "advlm/prompts.hpp"

namespace {

class UpperRewriter : public advlm::RewriterClient {
 public:
  std::string rewrite(std::string_view, std::string_view question) override {
    return "please answer: " + std::string(question);
  }
  std::string source() const override { return "fake"; }
};

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);
  advlm::ModelSpec spec;
  spec.kind = "toy-linear";
  spec.shape = advlm::Shape{1, 2, 2};
  spec.classes = 3;
  long die_after = -1, hang_after = -1;
  bool bad_id = false, ambiguous = false, rewrite = false;
  double slow_describe = 0.0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&] { return std::string(i + 1 < argc ? argv[++i] : ""); };
    if (a == "--kind") spec.kind = next();
    else if (a == "--seed") spec.seed = std::stoull(next());
    else if (a == "--classes") spec.classes = std::stoul(next());
    else if (a == "--shape") {
      const std::string s = next();
      std::sscanf(s.c_str(), "%zu,%zu,%zu", &spec.shape.channels, &spec.shape.height, &spec.shape.width);
    } else if (a == "--die-after") die_after = std::stol(next());
    else if (a == "--hang-after") hang_after = std::stol(next());
    else if (a == "--bad-id") bad_id = true;
    else if (a == "--ambiguous") ambiguous = true;
    else if (a == "--rewrite") rewrite = true;
    else if (a == "--slow-describe") slow_describe = std::stod(next());
    else {
      std::cerr << "unknown flag " << a << '\n';
      return 2;
    }
  }
  const auto model = advlm::make_model(spec);
  UpperRewriter rewriter;
  advlm::OracleServer server(*model, rewrite ? &rewriter : nullptr);

  long answered = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    if (die_after >= 0 && answered >= die_after) std::_Exit(1);
    if (hang_after >= 0 && answered >= hang_after) {
      for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
    }
    if (slow_describe > 0 && answered == 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(slow_describe));
    }
    std::string reply = server.handle(line);
    if (answered > 0 && bad_id) {
      reply = R"({"id":"someone-else","text":"x"})" "\n";
    } else if (answered > 0 && ambiguous) {
      reply = R"({"id":"r1","loss":1.0,"grads":[],"error":{"code":"x","message":"y"}})" "\n";
    }
    std::cout << reply << std::flush;
    ++answered;
  }
  return 0;
}
