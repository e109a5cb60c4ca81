#ifndef ADVLM_TARGET_HPP_
#define ADVLM_TARGET_HPP_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "advlm/tensor.hpp"

namespace advlm {

struct ClassIndex {
  std::uint32_t value = 0;
  bool operator==(const ClassIndex&) const = default;
};

struct TokenSequence {
  std::vector<std::uint32_t> tokens;
  bool operator==(const TokenSequence&) const = default;
};

// Human references (VQA answers or captions). Models map these into their own
// label space; remote models forward them to the sidecar unchanged.
struct ReferenceSet {
  std::vector<std::string> texts;
  bool operator==(const ReferenceSet&) const = default;
};

using Target = std::variant<ClassIndex, TokenSequence, ReferenceSet>;

struct Sample {
  std::string id;
  std::vector<ImageTensor> inputs;  // one per model input slot
  std::string prompt;
  Target target;
};

}  // namespace advlm

#endif  // ADVLM_TARGET_HPP_
