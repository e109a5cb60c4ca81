#include <gtest/gtest.h>

#include "advlm/error.hpp"
#include "advlm/metrics.hpp"

namespace advlm {
namespace {

std::vector<std::string> answers_with(std::size_t matches) {
  std::vector<std::string> a(matches, "yes");
  a.resize(10, "no");
  return a;
}

// tests/oracles/vqa_table.py, exact rationals rounded to double.
TEST(VqaAccuracyTest, MatchCountTable) {
  const double want[11] = {0.0, 0.3, 0.6, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  for (std::size_t k = 0; k <= 10; ++k) {
    EXPECT_EQ(vqa_accuracy("yes", answers_with(k)), want[k]) << k;
  }
  EXPECT_NEAR(vqa_accuracy("yes", answers_with(3)), 0.9, 1e-12);
}

TEST(VqaAccuracyTest, NormalizesBothSides) {
  std::vector<std::string> answers(10, "two dogs");
  EXPECT_EQ(vqa_accuracy("2 Dogs!", answers), 1.0);
  std::vector<std::string> b(10, "don't know");
  EXPECT_EQ(vqa_accuracy("do not know", b), 1.0);
}

TEST(VqaAccuracyTest, RequiresTenAnswers) {
  EXPECT_THROW(vqa_accuracy("yes", std::vector<std::string>(9, "yes")), InvalidArgument);
  AnnotationSet set{"q1", answers_with(4)};
  EXPECT_EQ(vqa_accuracy("yes", set), 1.0);
}

TEST(NormalizeAnswerTest, Examples) {
  EXPECT_EQ(normalize_answer("Yes."), "yes");
  EXPECT_EQ(normalize_answer("  The   Red  bus "), "red bus");
  EXPECT_EQ(normalize_answer("an apple"), "apple");
  EXPECT_EQ(normalize_answer("1,000"), "1000");
  EXPECT_EQ(normalize_answer("2.5"), "2.5");
  EXPECT_EQ(normalize_answer("end."), "end");
  EXPECT_EQ(normalize_answer("three"), "3");
  EXPECT_EQ(normalize_answer("ten cats"), "10 cats");
  EXPECT_EQ(normalize_answer("don't"), "do not");
  EXPECT_EQ(normalize_answer("dont"), "do not");
  EXPECT_EQ(normalize_answer("man's hat"), "man's hat");
  EXPECT_EQ(normalize_answer("left/right"), "left right");
  EXPECT_EQ(normalize_answer(""), "");
}

TEST(TokenizeCaptionTest, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize_caption("A dog, running."), (std::vector<std::string>{"a", "dog", "running"}));
  EXPECT_TRUE(tokenize_caption("  ").empty());
}

const std::vector<std::vector<std::string>> kRefs = {
    {"a man riding a horse on a beach", "a person rides a brown horse near the ocean",
     "man on horseback at the shore"},
    {"two dogs playing with a red ball in the grass", "a pair of dogs chase a ball",
     "dogs run across a green field"},
    {"a plate of pasta with tomato sauce", "spaghetti on a white plate", "a bowl of noodles covered in red sauce"},
    {"a red bus driving down a city street", "a double decker bus on the road", "a bus parked next to a sidewalk"},
    {"a cat sleeping on a laptop keyboard", "a kitten lying on a computer", "a gray cat resting on a keyboard"},
};

struct CiderCase {
  std::size_t image;
  const char* candidate;
  double want;
};

// tests/oracles/cider_cases.py (pycocoevalcap CiderScorer, sigma 6).
TEST(CiderTest, MatchesReferenceImplementation) {
  const CiderCase cases[] = {
      {0, "a man riding a horse on a beach", 3.6967449309251688},
      {1, "dogs playing with a ball", 1.9261990250952779},
      {2, "a plate of spaghetti with red sauce", 1.8460574675166397},
      {3, "a bus on a city street", 1.8535179804481658},
      {4, "a cat on a laptop", 1.5103003553259295},
      {0, "a horse on the beach at sunset with a man riding it", 1.3020336736577118},
      {1, "a red ball", 0.8063585578584094},
      {2, "pasta", 0.23443712312236634},
      {3, "the red double decker bus driving down the road", 2.0376586258408813},
      {4, "zebra giraffe elephant", 0.0},
  };
  const CaptionCorpus corpus = compute_document_frequencies(kRefs);
  EXPECT_EQ(corpus.image_count(), 5u);
  for (const auto& c : cases) {
    EXPECT_NEAR(cider_score(c.candidate, kRefs[c.image], corpus), c.want, 1e-9) << c.candidate;
  }
}

TEST(CiderTest, IdenticalCaptionScoresTen) {
  const std::vector<std::vector<std::string>> refs = {{"a small brown dog sleeps on the sofa"},
                                                      {"two people ride bikes down a hill"}};
  const CaptionCorpus corpus = compute_document_frequencies(refs);
  EXPECT_NEAR(cider_score("a small brown dog sleeps on the sofa", refs[0], corpus), 10.0, 1e-9);
}

TEST(CiderTest, DisjointVocabularyScoresZero) {
  const CaptionCorpus corpus = compute_document_frequencies(kRefs);
  EXPECT_EQ(cider_score("quantum flux capacitor", kRefs[0], corpus), 0.0);
  EXPECT_EQ(cider_score("", kRefs[0], corpus), 0.0);
}

TEST(CiderTest, SingleImageCorpusHasZeroWeights) {
  const std::vector<std::vector<std::string>> refs = {{"a dog on a sofa"}};
  const CaptionCorpus corpus = compute_document_frequencies(refs);
  EXPECT_EQ(corpus.idf("dog"), 0.0);
  EXPECT_EQ(cider_score("a dog on a sofa", refs[0], corpus), 0.0);
}

TEST(CiderTest, DocumentFrequencyCountsImagesNotOccurrences) {
  const CaptionCorpus corpus = compute_document_frequencies(kRefs);
  EXPECT_EQ(corpus.document_frequency("a"), 5u);
  EXPECT_EQ(corpus.document_frequency("horse"), 1u);
  EXPECT_EQ(corpus.document_frequency("on a"), 3u);
  EXPECT_EQ(corpus.document_frequency("unicorn"), 0u);
}

TEST(CiderTest, RejectsEmptyInputs) {
  EXPECT_THROW(compute_document_frequencies({}), InvalidArgument);
  const CaptionCorpus corpus = compute_document_frequencies(kRefs);
  EXPECT_THROW(cider_score("a", std::vector<std::string>{}, corpus), InvalidArgument);
}

TEST(AggregateTest, MeanAndEmpty) {
  const std::vector<double> v = {1.0, 2.0, 4.5};
  EXPECT_DOUBLE_EQ(aggregate(v), 2.5);
  EXPECT_THROW(aggregate(std::vector<double>{}), InvalidArgument);
  EXPECT_EQ(metric_name(MetricKind::kCider), "cider");
  EXPECT_EQ(metric_name(MetricKind::kVqaAccuracy), "vqa_accuracy");
}

}  // namespace
}  // namespace advlm
