#ifndef ADVLM_PROMPTS_HPP_
#define ADVLM_PROMPTS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace advlm {

class Transport;

// ---------------------------------------------------------------------------
// Captioning

enum class CaptionStrategy { kOriginal, kAC, kAP, kRandomString, kRandomSentence };

inline constexpr std::string_view kBaseCaptionPrompt = "Provide a short caption for this image.";

std::string_view caption_strategy_name(CaptionStrategy s);
std::optional<CaptionStrategy> parse_caption_strategy(std::string_view name);

struct CaptionPromptOptions {
  // Replace the fixed random prefixes with seed-generated ones.
  bool generate_random = false;
  std::uint64_t seed = 0;
};

std::string apply_caption_strategy(CaptionStrategy strategy, const CaptionPromptOptions& options = {});

// 50 characters drawn from [A-Za-z0-9] with SplitMix64(seed).
std::string random_alphanumeric(std::uint64_t seed, std::size_t length = 50);

// ---------------------------------------------------------------------------
// VQA

enum class VqaStrategy { kOriginal, kRephrase, kExpand, kAC, kAP };

std::string_view vqa_strategy_name(VqaStrategy s);
std::optional<VqaStrategy> parse_vqa_strategy(std::string_view name);

// Rewriter instruction for a strategy; throws InvalidArgument for Original.
std::string_view build_vqa_instruction(VqaStrategy strategy);
// Inverse of build_vqa_instruction.
std::optional<VqaStrategy> vqa_strategy_for_instruction(std::string_view instruction);

/// Turns (instruction, question) into a rewritten question.
class RewriterClient {
 public:
  virtual ~RewriterClient() = default;
  virtual std::string rewrite(std::string_view instruction, std::string_view question) = 0;
  virtual std::string source() const = 0;
};

// Returns the question unchanged.
class IdentityRewriter : public RewriterClient {
 public:
  std::string rewrite(std::string_view, std::string_view question) override {
    return std::string(question);
  }
  std::string source() const override { return "identity"; }
};

struct RewriteRecord {
  std::string strategy;
  std::string question;
  std::string rewritten;
  std::string source;
};

/// Replays recorded rewrites (rewrite-cache JSONL format). Unknown pairs throw.
class FixtureRewriter : public RewriterClient {
 public:
  explicit FixtureRewriter(const std::filesystem::path& path);
  explicit FixtureRewriter(std::vector<RewriteRecord> records);

  std::string rewrite(std::string_view instruction, std::string_view question) override;
  std::string source() const override { return "fixture"; }

 private:
  std::map<std::pair<std::string, std::string>, std::string> table_;
};

/// Sends op "rewrite" over the oracle transport (newline-delimited JSON).
/// Requests are serialized on the one connection.
class RemoteRewriter : public RewriterClient {
 public:
  RemoteRewriter(std::unique_ptr<Transport> transport, double timeout_seconds = 120.0);
  ~RemoteRewriter() override;

  std::string rewrite(std::string_view instruction, std::string_view question) override;
  std::string source() const override { return "remote"; }

 private:
  std::mutex mu_;
  std::unique_ptr<Transport> transport_;
  double timeout_seconds_;
  std::uint64_t next_id_ = 0;
};

/// Append-only JSONL cache of rewrites keyed by (strategy, sha256(question)).
/// Safe for concurrent use within a process; each new record is appended
/// with a single write.
class RewriteCache {
 public:
  explicit RewriteCache(std::filesystem::path path);

  std::optional<std::string> find(VqaStrategy strategy, std::string_view question) const;
  void insert(const RewriteRecord& record);
  std::vector<RewriteRecord> records() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, RewriteRecord> entries_;
  std::vector<std::pair<std::string, std::string>> order_;
};

std::string sha256_hex(std::string_view bytes);

struct RewriteOptions {
  bool fallback_to_original = true;
};

struct RewriteOutcome {
  std::string text;
  bool fell_back = false;
  bool from_cache = false;
  std::string warning;
};

/// Rewrites `question` for a VQA strategy. Original returns the question.
/// A failing client falls back to the original question when enabled, with
/// the warning set; an empty rewrite is always an error.
RewriteOutcome rewrite_question(RewriterClient& client, VqaStrategy strategy, std::string_view question,
                                const RewriteOptions& options = {}, RewriteCache* cache = nullptr);

}  // namespace advlm

#endif  // ADVLM_PROMPTS_HPP_
