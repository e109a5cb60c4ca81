#include "advlm/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "advlm/error.hpp"

namespace advlm {

namespace detail {
extern const std::string_view kContractionsTable;
extern const std::string_view kNumberWordsTable;
}  // namespace detail

namespace {

std::map<std::string, std::string, std::less<>> parse_table(std::string_view text) {
  std::map<std::string, std::string, std::less<>> table;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    table.emplace(line.substr(0, eq), line.substr(eq + 1));
  }
  return table;
}

const auto& contractions() {
  static const auto table = parse_table(detail::kContractionsTable);
  return table;
}

const auto& number_words() {
  static const auto table = parse_table(detail::kNumberWordsTable);
  return table;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

std::string normalize_answer(std::string_view raw) {
  std::string lower(raw);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  std::string cleaned;
  cleaned.reserve(lower.size());
  for (std::size_t i = 0; i < lower.size(); ++i) {
    const char c = lower[i];
    const char prev = i > 0 ? lower[i - 1] : ' ';
    const char next = i + 1 < lower.size() ? lower[i + 1] : ' ';
    if (c == ',' && is_digit(prev) && is_digit(next)) continue;
    if (c == '.' && is_digit(prev) && is_digit(next)) {
      cleaned += c;
    } else if (c == '\'' && is_alnum(prev) && is_alpha(next)) {
      cleaned += c;
    } else if (std::ispunct(static_cast<unsigned char>(c)) || std::isspace(static_cast<unsigned char>(c))) {
      cleaned += ' ';
    } else {
      cleaned += c;
    }
  }

  std::string out;
  auto emit = [&out](std::string_view word) {
    if (word == "a" || word == "an" || word == "the") return;
    if (!out.empty()) out += ' ';
    out += word;
  };
  for (const std::string& tok : split_whitespace(cleaned)) {
    if (auto it = number_words().find(tok); it != number_words().end()) {
      emit(it->second);
    } else if (auto ct = contractions().find(tok); ct != contractions().end()) {
      for (const std::string& w : split_whitespace(ct->second)) emit(w);
    } else {
      emit(tok);
    }
  }
  return out;
}

double vqa_accuracy(std::string_view prediction, std::span<const std::string> answers) {
  if (answers.size() != kVqaAnswerCount) {
    throw InvalidArgument("VQA accuracy needs exactly 10 answers, got " +
                          std::to_string(answers.size()));
  }
  const std::string pred = normalize_answer(prediction);
  std::array<bool, kVqaAnswerCount> match{};
  int total_matches = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    match[i] = normalize_answer(answers[i]) == pred;
    total_matches += match[i] ? 1 : 0;
  }
  // Sum of min(matches among the other nine, 3) over the ten subsets, then
  // divided once by 30 so that k/30 is correctly rounded.
  int sum = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    sum += std::min(total_matches - (match[i] ? 1 : 0), 3);
  }
  return static_cast<double>(sum) / 30.0;
}

double vqa_accuracy(std::string_view prediction, const AnnotationSet& annotations) {
  return vqa_accuracy(prediction, std::span<const std::string>(annotations.answers));
}

// ---------------------------------------------------------------------------
// CIDEr-D

std::vector<std::string> tokenize_caption(std::string_view text) {
  std::string cleaned(text);
  for (char& c : cleaned) {
    const auto u = static_cast<unsigned char>(c);
    c = std::ispunct(u) ? ' ' : static_cast<char>(std::tolower(u));
  }
  return split_whitespace(cleaned);
}

namespace {

using NgramCounts = std::array<std::map<std::string, int>, kCiderMaxN>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens) {
  NgramCounts counts;
  for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string key = tokens[i];
      for (std::size_t j = 1; j < n; ++j) key += ' ' + tokens[i + j];
      ++counts[n - 1][key];
    }
  }
  return counts;
}

struct TfIdf {
  std::array<std::map<std::string, double>, kCiderMaxN> vec;
  std::array<double, kCiderMaxN> norm{};
  double length = 0.0;
};

TfIdf to_tfidf(const NgramCounts& counts, const CaptionCorpus& corpus) {
  TfIdf out;
  for (std::size_t n = 0; n < kCiderMaxN; ++n) {
    for (const auto& [ngram, tf] : counts[n]) {
      const double w = tf * corpus.idf(ngram);
      out.vec[n][ngram] = w;
      out.norm[n] += w * w;
      // Length is measured in bigrams, as in the COCO reference scorer.
      if (n == 1) out.length += tf;
    }
    out.norm[n] = std::sqrt(out.norm[n]);
  }
  return out;
}

std::array<double, kCiderMaxN> similarity(const TfIdf& hyp, const TfIdf& ref) {
  const double delta = hyp.length - ref.length;
  const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
  std::array<double, kCiderMaxN> val{};
  for (std::size_t n = 0; n < kCiderMaxN; ++n) {
    for (const auto& [ngram, h] : hyp.vec[n]) {
      auto it = ref.vec[n].find(ngram);
      if (it == ref.vec[n].end()) continue;
      val[n] += std::min(h, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val[n] /= hyp.norm[n] * ref.norm[n];
    val[n] *= penalty;
  }
  return val;
}

}  // namespace

std::size_t CaptionCorpus::document_frequency(const std::string& ngram) const {
  auto it = df_.find(ngram);
  return it == df_.end() ? 0 : it->second;
}

double CaptionCorpus::idf(const std::string& ngram) const {
  const double df = static_cast<double>(std::max<std::size_t>(1, document_frequency(ngram)));
  return log_image_count_ - std::log(df);
}

CaptionCorpus compute_document_frequencies(const std::vector<std::vector<std::string>>& references) {
  if (references.empty()) throw InvalidArgument("caption corpus needs at least one image");
  bool any = false;
  CaptionCorpus corpus;
  for (const auto& refs : references) {
    std::set<std::string> seen;
    for (const std::string& ref : refs) {
      any = true;
      const NgramCounts counts = count_ngrams(tokenize_caption(ref));
      for (const auto& per_n : counts) {
        for (const auto& kv : per_n) seen.insert(kv.first);
      }
    }
    for (const std::string& ngram : seen) ++corpus.df_[ngram];
  }
  if (!any) throw InvalidArgument("caption corpus needs at least one reference caption");
  corpus.image_count_ = references.size();
  corpus.log_image_count_ = std::log(static_cast<double>(references.size()));
  return corpus;
}

double cider_score(std::string_view candidate, std::span<const std::string> references,
                   const CaptionCorpus& corpus) {
  if (references.empty()) throw InvalidArgument("CIDEr needs at least one reference caption");
  const TfIdf hyp = to_tfidf(count_ngrams(tokenize_caption(candidate)), corpus);
  std::array<double, kCiderMaxN> total{};
  for (const std::string& ref : references) {
    const auto val = similarity(hyp, to_tfidf(count_ngrams(tokenize_caption(ref)), corpus));
    for (std::size_t n = 0; n < kCiderMaxN; ++n) total[n] += val[n];
  }
  double mean = std::accumulate(total.begin(), total.end(), 0.0) / static_cast<double>(kCiderMaxN);
  mean /= static_cast<double>(references.size());
  return mean * 10.0;
}

// ---------------------------------------------------------------------------

std::string_view metric_name(MetricKind kind) {
  return kind == MetricKind::kVqaAccuracy ? "vqa_accuracy" : "cider";
}

double aggregate(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("cannot aggregate an empty set of scores");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace advlm
