#include <algorithm>
#include <fstream>

#include <gtest/gtest.h>

#include "advlm/dataset.hpp"
#include "advlm/error.hpp"
#include "test_models.hpp"

namespace advlm {
namespace {

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string ppm(int w, int h, const std::string& pixels, const std::string& header_extra = "") {
  return "P6\n" + header_extra + std::to_string(w) + " " + std::to_string(h) + "\n255\n" + pixels;
}

std::string vqa_line(const std::string& id, const std::string& image, int answers = 10) {
  std::string a;
  for (int i = 0; i < answers; ++i) a += std::string(i ? "," : "") + "\"red\"";
  return R"({"id":")" + id + R"(","task":"vqa","images":[")" + image +
         R"("],"question":"What color?","answers":[)" + a + "]}";
}

class DatasetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(dir_ / "img");
    write_file(dir_ / "img" / "a.ppm", ppm(1, 1, std::string("\xff\x00\x80", 3)));
  }
  testing::TempDir dir_;
};

TEST_F(DatasetTest, EmptyFileGivesEmptyDataset) {
  write_file(dir_ / "d.jsonl", "");
  EXPECT_EQ(load_dataset(dir_ / "d.jsonl").size(), 0u);
}

TEST_F(DatasetTest, RoundTripThroughWriter) {
  Dataset d;
  DatasetRecord cap{"c1", TaskType::kCaptioning, {"img/a.ppm"}, "", {}, {"a red dot", "a \"quoted\" dot"}};
  DatasetRecord vqa{"v1", TaskType::kVqa, {"img/a.ppm"}, "What color?", std::vector<std::string>(10, "red"), {}};
  DatasetRecord two{"c2", TaskType::kCaptioning, {"img/a.ppm", "img/a.ppm"}, "", {}, {"two dots"}};
  d.records = {cap, vqa, two};
  write_dataset(d, dir_ / "d.jsonl");
  const Dataset back = load_dataset(dir_ / "d.jsonl");
  EXPECT_EQ(back.records, d.records);
  EXPECT_EQ(back.source, "d.jsonl");
  EXPECT_EQ(back.count(TaskType::kVqa), 1u);
  EXPECT_EQ(back.image_path(back.records[0], 0), dir_ / "img" / "a.ppm");
  EXPECT_EQ(back.loaded_at.size(), 20u);
}

TEST_F(DatasetTest, WrongAnswerCountNamesLineAndField) {
  write_file(dir_ / "d.jsonl", vqa_line("v1", "img/a.ppm") + "\n\n" + vqa_line("v2", "img/a.ppm", 9) + "\n");
  try {
    load_dataset(dir_ / "d.jsonl");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("answers"), std::string::npos);
  }
}

TEST_F(DatasetTest, RejectsInvalidRecords) {
  const std::vector<std::string> bad = {
      "{not json",
      R"(["array"])",
      R"({"task":"vqa","images":["img/a.ppm"]})",
      R"({"id":"x","task":"detection","images":["img/a.ppm"]})",
      R"({"id":"x","task":"captioning","images":[],"references":["a"]})",
      R"({"id":"x","task":"captioning","images":["img/a.ppm"],"references":[]})",
      R"({"id":"x","task":"vqa","images":["img/a.ppm"],"answers":[]})",
  };
  for (const auto& line : bad) {
    EXPECT_THROW(parse_record(line, "t", 1), FormatError) << line;
  }
}

TEST_F(DatasetTest, DuplicateIdAndMissingImage) {
  write_file(dir_ / "dup.jsonl", vqa_line("v1", "img/a.ppm") + "\n" + vqa_line("v1", "img/a.ppm") + "\n");
  EXPECT_THROW(load_dataset(dir_ / "dup.jsonl"), FormatError);
  write_file(dir_ / "miss.jsonl", vqa_line("v1", "img/nope.ppm") + "\n");
  try {
    load_dataset(dir_ / "miss.jsonl");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("nope.ppm"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(dir_ / "absent.jsonl"), InvalidArgument);
}

Dataset numbered(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.records.push_back({std::to_string(i), TaskType::kCaptioning, {"x"}, "", {}, {"r"}});
  }
  return d;
}

std::vector<int> ids(const Dataset& d) {
  std::vector<int> out;
  for (const auto& r : d.records) out.push_back(std::stoi(r.id));
  return out;
}

TEST(SubsetTest, MatchesReferenceDraws) {
  const Dataset d = numbered(100);
  EXPECT_EQ(ids(sample_subset(d, 10, 1)), (std::vector<int>{65, 53, 66, 56, 61, 18, 43, 40, 20, 27}));
  EXPECT_EQ(ids(sample_subset(d, 10, 2)), (std::vector<int>{10, 60, 65, 33, 77, 59, 24, 18, 5, 31}));
}

TEST(SubsetTest, OversizedRequestIsAPermutation) {
  const Dataset d = numbered(20);
  auto got = ids(sample_subset(d, 50, 3));
  ASSERT_EQ(got.size(), 20u);
  std::sort(got.begin(), got.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(got[i], i);
  EXPECT_THROW(sample_subset(d, 0, 3), InvalidArgument);
}

TEST(SubsetTest, PrefixProperty) {
  const Dataset d = numbered(50);
  const auto small = ids(sample_subset(d, 5, 9));
  const auto large = ids(sample_subset(d, 20, 9));
  EXPECT_TRUE(std::equal(small.begin(), small.end(), large.begin()));
}

TEST_F(DatasetTest, LoadsPpmPixels) {
  const ImageTensor img = load_image(dir_ / "img" / "a.ppm");
  EXPECT_EQ(img.shape(), (Shape{3, 1, 1}));
  EXPECT_EQ(img[0], 1.0);
  EXPECT_EQ(img[1], 0.0);
  EXPECT_DOUBLE_EQ(img[2], 128.0 / 255.0);
}

TEST_F(DatasetTest, PpmLayoutIsChannelsFirst) {
  // Two pixels: (10, 20, 30) then (40, 50, 60).
  write_file(dir_ / "b.ppm", ppm(2, 1, std::string("\x0a\x14\x1e\x28\x32\x3c", 6), "# comment\n"));
  const ImageTensor img = load_image(dir_ / "b.ppm");
  EXPECT_EQ(img.shape(), (Shape{3, 1, 2}));
  EXPECT_DOUBLE_EQ(img.at(0, 0, 1), 40.0 / 255.0);
  EXPECT_DOUBLE_EQ(img.at(2, 0, 0), 30.0 / 255.0);
}

TEST_F(DatasetTest, AllZeroImageIsValid) {
  write_file(dir_ / "z.ppm", ppm(2, 2, std::string(12, '\0')));
  const ImageTensor img = load_image(dir_ / "z.ppm");
  EXPECT_TRUE(std::all_of(img.values().begin(), img.values().end(), [](double v) { return v == 0.0; }));
}

TEST_F(DatasetTest, RejectsUnsupportedImages) {
  write_file(dir_ / "g.pgm", "P5\n1 1\n255\n\x01");
  EXPECT_THROW(load_image(dir_ / "g.pgm"), InvalidArgument);
  write_file(dir_ / "m.ppm", "P6\n1 1\n65535\n" + std::string(6, '\x01'));
  EXPECT_THROW(load_image(dir_ / "m.ppm"), InvalidArgument);
  write_file(dir_ / "t.ppm", ppm(2, 2, std::string(5, '\x01')));
  EXPECT_THROW(load_image(dir_ / "t.ppm"), InvalidArgument);
  EXPECT_THROW(load_image(dir_ / "missing.ppm"), InvalidArgument);
}

TEST_F(DatasetTest, PpmWriteReadRoundTrip) {
  const ImageTensor img = random_tensor({3, 4, 5}, 11);
  write_ppm(img, dir_ / "r.ppm");
  const ImageTensor back = load_image(dir_ / "r.ppm");
  EXPECT_LE(img.max_abs_diff(back), 0.5 / 255.0 + 1e-12);
  EXPECT_THROW(write_ppm(random_tensor({1, 2, 2}, 1), dir_ / "bad.ppm"), InvalidArgument);
}

TEST_F(DatasetTest, LoadsAdvtImages) {
  const ImageTensor img = random_tensor({2, 3, 3}, 4);
  save_tensor(img, dir_ / "x.advt");
  EXPECT_LE(load_image(dir_ / "x.advt").max_abs_diff(img), 1e-7);
  ImageTensor out_of_range({1, 1, 1}, 1.5);
  save_tensor(out_of_range, dir_ / "o.advt");
  EXPECT_THROW(load_image(dir_ / "o.advt"), InvalidArgument);
}

TEST(ConvertTest, CocoCaptions) {
  const std::string ann = R"({
    "images": [{"id": 42, "file_name": "COCO_val2014_000000000042.jpg"}, {"id": 7, "file_name": "b.jpg"}],
    "annotations": [{"image_id": 42, "caption": "a dog"}, {"image_id": 42, "caption": "a brown dog"},
                    {"image_id": 7, "caption": "a cat"}]})";
  const auto recs = convert_coco_captions(ann, "images/{file_stem}.ppm");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id, "coco-42");
  EXPECT_EQ(recs[0].images[0], "images/COCO_val2014_000000000042.ppm");
  EXPECT_EQ(recs[0].references, (std::vector<std::string>{"a dog", "a brown dog"}));
  EXPECT_EQ(convert_coco_captions(ann, "{image_id:012}.ppm")[1].images[0], "000000000007.ppm");
  EXPECT_THROW(convert_coco_captions("[]", "x"), InvalidArgument);
}

TEST(ConvertTest, VqaV2) {
  std::string answers;
  for (int i = 0; i < 10; ++i) answers += std::string(i ? "," : "") + R"({"answer": "yes"})";
  const std::string q = R"({"questions": [{"question_id": 5, "image_id": 9, "question": "Is it?"}]})";
  const std::string a = R"({"annotations": [{"question_id": 5, "answers": [)" + answers + "]}]}";
  const auto recs = convert_vqav2(q, a, "img/{image_id}.ppm");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].id, "vqa-5");
  EXPECT_EQ(recs[0].task, TaskType::kVqa);
  EXPECT_EQ(recs[0].images[0], "img/9.ppm");
  EXPECT_EQ(recs[0].answers.size(), 10u);
  const std::string short_a = R"({"annotations": [{"question_id": 5, "answers": [{"answer": "yes"}]}]})";
  EXPECT_THROW(convert_vqav2(q, short_a, "x"), InvalidArgument);
}

}  // namespace
}  // namespace advlm
