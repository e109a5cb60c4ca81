#ifndef ADVLM_ADVT_HPP_
#define ADVLM_ADVT_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "advlm/tensor.hpp"

namespace advlm {

enum class AdvtKind : std::uint16_t {
  kTensor = 0,
  kToyLinear = 1,
  kToyMlp = 2,
  kToyTwoBranch = 3,
  kToyCaption = 4,
};

inline constexpr std::uint16_t kAdvtVersion = 1;

/// In-memory form of the ADVT binary container: little-endian header
/// (magic "ADVT", u16 version, u16 kind, u32 slot count, per-slot u32 C/H/W,
/// u32 hyperparameter count + values, u64 payload count) then f32 payload.
struct AdvtFile {
  AdvtKind kind = AdvtKind::kTensor;
  std::vector<Shape> shapes;
  std::vector<std::uint32_t> hyper;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode_advt(const AdvtFile& file);
AdvtFile decode_advt(const std::vector<std::uint8_t>& bytes);

void write_advt(const AdvtFile& file, const std::filesystem::path& path);
AdvtFile read_advt(const std::filesystem::path& path);

}  // namespace advlm

#endif  // ADVLM_ADVT_HPP_
