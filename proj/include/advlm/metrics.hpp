#ifndef ADVLM_METRICS_HPP_
#define ADVLM_METRICS_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace advlm {

// ---------------------------------------------------------------------------
// VQA accuracy

/// Official-style answer normalization: lowercase, punctuation stripped
/// (apostrophes inside words kept, "1,000" -> "1000", "2.5" kept), number
/// words zero..ten to digits, contractions expanded from
/// data/contractions.txt, articles a/an/the dropped, whitespace collapsed.
std::string normalize_answer(std::string_view raw);

struct AnnotationSet {
  std::string question_id;
  std::vector<std::string> answers;  // exactly kVqaAnswerCount
};

inline constexpr std::size_t kVqaAnswerCount = 10;

/// Mean over the ten leave-one-out subsets of min(#matches / 3, 1), on
/// normalized strings.
double vqa_accuracy(std::string_view prediction, const AnnotationSet& annotations);
double vqa_accuracy(std::string_view prediction, std::span<const std::string> answers);

// ---------------------------------------------------------------------------
// CIDEr-D

// Lowercase, ASCII punctuation replaced by spaces, whitespace split.
std::vector<std::string> tokenize_caption(std::string_view text);

inline constexpr std::size_t kCiderMaxN = 4;
inline constexpr double kCiderSigma = 6.0;

/// Document frequencies of 1..4-grams over per-image reference lists: the
/// number of images whose references contain the n-gram at least once.
class CaptionCorpus {
 public:
  std::size_t image_count() const { return image_count_; }
  // n-gram given as space-joined tokens; 0 when unseen.
  std::size_t document_frequency(const std::string& ngram) const;
  // log(N / df), the weight CIDEr applies to an n-gram seen in df images.
  double idf(const std::string& ngram) const;
  std::size_t vocabulary_size() const { return df_.size(); }

 private:
  friend CaptionCorpus compute_document_frequencies(
      const std::vector<std::vector<std::string>>& references);

  std::size_t image_count_ = 0;
  double log_image_count_ = 0.0;
  std::unordered_map<std::string, std::size_t> df_;
};

CaptionCorpus compute_document_frequencies(const std::vector<std::vector<std::string>>& references);

/// CIDEr-D of one candidate against one image's references, with n-gram
/// weights from `corpus`. Matches the COCO caption evaluation: clipped tf-idf
/// cosine per n, Gaussian length penalty (sigma 6) on the bigram counts,
/// mean over n = 1..4 and over references, times 10.
double cider_score(std::string_view candidate, std::span<const std::string> references,
                   const CaptionCorpus& corpus);

// ---------------------------------------------------------------------------

enum class MetricKind { kVqaAccuracy, kCider };

std::string_view metric_name(MetricKind kind);

/// Arithmetic mean; throws on empty input.
double aggregate(std::span<const double> values);

// Both metrics are reported x100: VQA as a percentage, CIDEr per the COCO
// convention (a per-image score of 1.19 shows as 119).
inline constexpr double kReportScale = 100.0;

}  // namespace advlm

#endif  // ADVLM_METRICS_HPP_
