#include "advlm/prompts.hpp"

#include <array>
#include <fcntl.h>
#include <fstream>
#include <unistd.h>

#include <json.hpp>
#include <openssl/sha.h>

#include "advlm/error.hpp"
#include "advlm/protocol.hpp"
#include "advlm/rng.hpp"
#include "advlm/transport.hpp"

namespace advlm {

using nlohmann::json;

namespace {

constexpr std::string_view kAcCaptionPrefix = "Consider the given image being adversarially perturbed. ";
constexpr std::string_view kApCaptionPrefix = "Given image could be adversarially perturbed. ";
constexpr std::string_view kRandomSentencePrefix = "Clouds drift quietly over the ancient, forgotten city. ";
constexpr std::string_view kRandomStringPrefix = "ryFo8ZVcyNMtLgryNOg64UTjySyEb79e5aq6IJxGuz0GzWNtoz. ";

constexpr std::string_view kRephraseInstruction =
    "You will be given a question. Your task is to rephrase the question so that it is "
    "semantically similar to the original question and will have the same answer as the "
    "original question.";
constexpr std::string_view kExpandInstruction =
    "You will be given a short question. Your task is to generate a longer question so that it "
    "is semantically similar to the original question and will have the same answer as the "
    "original question.";
constexpr std::string_view kAcInstruction =
    "You will be given a question. However, the image associated with the question will be "
    "adversarially perturbed. Your task is to generate a longer question so that it is "
    "semantically similar to the original question and will have the same answer as the "
    "original question.";
constexpr std::string_view kApInstruction =
    "You will be given a question. However, the image associated with the question could be "
    "adversarially perturbed. Your task is to generate a longer question so that it is "
    "semantically similar to the original question and will have the same answer as the "
    "original question.";

// Lexicon for seed-generated filler sentences.
constexpr std::array<std::string_view, 24> kFillerWords = {
    "quiet",  "river",  "lantern", "copper", "drift",  "meadow", "silent", "harbor",
    "amber",  "window", "morning", "stone",  "wander", "velvet", "orchard", "distant",
    "marble", "breeze", "hollow",  "signal", "glass",  "autumn", "thread",  "summit"};

}  // namespace

std::string_view caption_strategy_name(CaptionStrategy s) {
  switch (s) {
    case CaptionStrategy::kOriginal: return "Original";
    case CaptionStrategy::kAC: return "AC";
    case CaptionStrategy::kAP: return "AP";
    case CaptionStrategy::kRandomString: return "RandomString";
    case CaptionStrategy::kRandomSentence: return "RandomSentence";
  }
  return "?";
}

std::optional<CaptionStrategy> parse_caption_strategy(std::string_view name) {
  for (auto s : {CaptionStrategy::kOriginal, CaptionStrategy::kAC, CaptionStrategy::kAP,
                 CaptionStrategy::kRandomString, CaptionStrategy::kRandomSentence}) {
    if (caption_strategy_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string random_alphanumeric(std::uint64_t seed, std::size_t length) {
  static constexpr std::string_view kAlphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  SplitMix64 rng(seed);
  std::string out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) out += kAlphabet[rng.bounded(kAlphabet.size())];
  return out;
}

std::string apply_caption_strategy(CaptionStrategy strategy, const CaptionPromptOptions& options) {
  std::string prefix;
  switch (strategy) {
    case CaptionStrategy::kOriginal:
      break;
    case CaptionStrategy::kAC:
      prefix = kAcCaptionPrefix;
      break;
    case CaptionStrategy::kAP:
      prefix = kApCaptionPrefix;
      break;
    case CaptionStrategy::kRandomString:
      prefix = options.generate_random ? random_alphanumeric(options.seed) + ". "
                                       : std::string(kRandomStringPrefix);
      break;
    case CaptionStrategy::kRandomSentence:
      if (options.generate_random) {
        SplitMix64 rng(options.seed);
        for (int i = 0; i < 8; ++i) {
          if (i > 0) prefix += ' ';
          prefix += kFillerWords[rng.bounded(kFillerWords.size())];
        }
        prefix[0] = static_cast<char>(prefix[0] - 'a' + 'A');
        prefix += ". ";
      } else {
        prefix = kRandomSentencePrefix;
      }
      break;
  }
  return prefix + std::string(kBaseCaptionPrompt);
}

std::string_view vqa_strategy_name(VqaStrategy s) {
  switch (s) {
    case VqaStrategy::kOriginal: return "Original";
    case VqaStrategy::kRephrase: return "Rephrase";
    case VqaStrategy::kExpand: return "Expand";
    case VqaStrategy::kAC: return "AC";
    case VqaStrategy::kAP: return "AP";
  }
  return "?";
}

std::optional<VqaStrategy> parse_vqa_strategy(std::string_view name) {
  for (auto s : {VqaStrategy::kOriginal, VqaStrategy::kRephrase, VqaStrategy::kExpand,
                 VqaStrategy::kAC, VqaStrategy::kAP}) {
    if (vqa_strategy_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view build_vqa_instruction(VqaStrategy strategy) {
  switch (strategy) {
    case VqaStrategy::kRephrase: return kRephraseInstruction;
    case VqaStrategy::kExpand: return kExpandInstruction;
    case VqaStrategy::kAC: return kAcInstruction;
    case VqaStrategy::kAP: return kApInstruction;
    case VqaStrategy::kOriginal: break;
  }
  throw InvalidArgument("the Original VQA strategy has no rewrite instruction");
}

std::optional<VqaStrategy> vqa_strategy_for_instruction(std::string_view instruction) {
  for (auto s : {VqaStrategy::kRephrase, VqaStrategy::kExpand, VqaStrategy::kAC, VqaStrategy::kAP}) {
    if (build_vqa_instruction(s) == instruction) return s;
  }
  return std::nullopt;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += kHex[b >> 4];
    out += kHex[b & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rewrite records

namespace {

RewriteRecord parse_record(const std::string& line, const std::string& path, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError(path, lineno, "not a JSON object");
  RewriteRecord r;
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.rewritten = j.at("rewritten").get<std::string>();
    r.source = j.value("source", std::string("unknown"));
  } catch (const json::exception& e) {
    throw FormatError(path, lineno, std::string("bad rewrite record: ") + e.what());
  }
  if (!parse_vqa_strategy(r.strategy)) throw FormatError(path, lineno, "unknown strategy " + r.strategy);
  return r;
}

std::vector<RewriteRecord> read_records(const std::filesystem::path& path) {
  std::vector<RewriteRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(parse_record(line, path.string(), lineno));
  }
  return out;
}

std::string record_line(const RewriteRecord& r) {
  return json{{"strategy", r.strategy}, {"question", r.question}, {"rewritten", r.rewritten},
              {"source", r.source}}
             .dump() +
         "\n";
}

}  // namespace

FixtureRewriter::FixtureRewriter(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidArgument("rewrite fixture not found: " + path.string());
  for (auto& r : read_records(path)) table_[{r.strategy, r.question}] = r.rewritten;
}

FixtureRewriter::FixtureRewriter(std::vector<RewriteRecord> records) {
  for (auto& r : records) table_[{r.strategy, r.question}] = r.rewritten;
}

std::string FixtureRewriter::rewrite(std::string_view instruction, std::string_view question) {
  const auto strategy = vqa_strategy_for_instruction(instruction);
  const std::string key = strategy ? std::string(vqa_strategy_name(*strategy)) : std::string(instruction);
  auto it = table_.find({key, std::string(question)});
  if (it == table_.end()) {
    throw ModelError("no recorded " + key + " rewrite for question \"" + std::string(question) + "\"");
  }
  return it->second;
}

RemoteRewriter::RemoteRewriter(std::unique_ptr<Transport> transport, double timeout_seconds)
    : transport_(std::move(transport)), timeout_seconds_(timeout_seconds) {}

RemoteRewriter::~RemoteRewriter() = default;

std::string RemoteRewriter::rewrite(std::string_view instruction, std::string_view question) {
  std::lock_guard<std::mutex> lock(mu_);
  OracleRequest req;
  req.id = "w" + std::to_string(next_id_++);
  req.op = OracleOp::kRewrite;
  req.prompt = std::string(question);
  req.instruction = std::string(instruction);
  transport_->send_line(encode_request(req), timeout_seconds_);
  const OracleResponse resp = decode_response(transport_->read_line(timeout_seconds_, kDefaultMaxLineBytes));
  if (resp.id != req.id) throw ProtocolError(ProtocolErrorCode::kIdMismatch, "rewrite response id mismatch");
  if (const auto* err = std::get_if<ErrorResult>(&resp.body)) {
    throw ProtocolError(ProtocolErrorCode::kRemoteError, err->code + ": " + err->message);
  }
  const auto* text = std::get_if<TextResult>(&resp.body);
  if (text == nullptr) throw ProtocolError(ProtocolErrorCode::kAmbiguousResponse, "rewrite answered without text");
  return text->text;
}

RewriteCache::RewriteCache(std::filesystem::path path) : path_(std::move(path)) {
  for (auto& r : read_records(path_)) {
    std::pair<std::string, std::string> key{r.strategy, sha256_hex(r.question)};
    if (!entries_.contains(key)) order_.push_back(key);
    entries_[key] = std::move(r);  // later lines win
  }
}

std::optional<std::string> RewriteCache::find(VqaStrategy strategy, std::string_view question) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find({std::string(vqa_strategy_name(strategy)), sha256_hex(question)});
  if (it == entries_.end()) return std::nullopt;
  return it->second.rewritten;
}

void RewriteCache::insert(const RewriteRecord& record) {
  std::lock_guard<std::mutex> lock(mu_);
  std::pair<std::string, std::string> key{record.strategy, sha256_hex(record.question)};
  if (auto it = entries_.find(key); it != entries_.end() && it->second.rewritten == record.rewritten) {
    return;
  }
  const std::string line = record_line(record);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw InvalidArgument("cannot open rewrite cache " + path_.string());
  const ssize_t n = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw InvalidArgument("short write to rewrite cache");
  if (!entries_.contains(key)) order_.push_back(key);
  entries_[key] = record;
}

std::vector<RewriteRecord> RewriteCache::records() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<RewriteRecord> out;
  for (const auto& key : order_) out.push_back(entries_.at(key));
  return out;
}

RewriteOutcome rewrite_question(RewriterClient& client, VqaStrategy strategy, std::string_view question,
                                const RewriteOptions& options, RewriteCache* cache) {
  if (question.empty()) throw InvalidArgument("cannot rewrite an empty question");
  RewriteOutcome out;
  if (strategy == VqaStrategy::kOriginal) {
    out.text = std::string(question);
    return out;
  }
  if (cache != nullptr) {
    if (auto hit = cache->find(strategy, question)) {
      out.text = *hit;
      out.from_cache = true;
      return out;
    }
  }
  std::string rewritten;
  try {
    rewritten = client.rewrite(build_vqa_instruction(strategy), question);
  } catch (const Error& e) {
    if (!options.fallback_to_original) throw;
    out.text = std::string(question);
    out.fell_back = true;
    out.warning = std::string("rewriter ") + client.source() + " failed (" + e.what() +
                  "); using the original question";
    return out;
  }
  if (rewritten.empty()) {
    throw ModelError("rewriter " + client.source() + " returned an empty question");
  }
  if (cache != nullptr) {
    cache->insert({std::string(vqa_strategy_name(strategy)), std::string(question), rewritten, client.source()});
  }
  out.text = std::move(rewritten);
  return out;
}

}  // namespace advlm
