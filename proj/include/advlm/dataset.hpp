#ifndef ADVLM_DATASET_HPP_
#define ADVLM_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advlm/tensor.hpp"

namespace advlm {

enum class TaskType { kCaptioning, kVqa };

std::string_view task_name(TaskType task);  // "captioning" | "vqa"
std::optional<TaskType> parse_task(std::string_view name);

/// One line of a dataset JSONL file (docs/dataset.schema.json).
struct DatasetRecord {
  std::string id;
  TaskType task = TaskType::kCaptioning;
  std::vector<std::string> images;       // as written, relative to the dataset file
  std::string question;                  // vqa only
  std::vector<std::string> answers;      // vqa only, exactly 10
  std::vector<std::string> references;   // captioning only, at least 1

  bool operator==(const DatasetRecord&) const = default;
};

struct Dataset {
  std::string source;               // file name the records came from
  std::filesystem::path base_dir;   // image paths resolve against this
  std::string loaded_at;            // UTC, ISO 8601
  std::vector<DatasetRecord> records;

  std::size_t size() const { return records.size(); }
  std::filesystem::path image_path(const DatasetRecord& record, std::size_t index) const;
  std::size_t count(TaskType task) const;
};

// Parses and validates a JSONL dataset. Errors are FormatError with the line.
Dataset load_dataset(const std::filesystem::path& path);
DatasetRecord parse_record(std::string_view line, const std::string& source, std::size_t lineno);

// Serializes with a fixed key order; load_dataset(write_dataset(d)) == d.
std::string record_to_json(const DatasetRecord& record);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// min(n, size) records drawn without replacement by a partial Fisher-Yates
/// shuffle driven by SplitMix64(seed); output order is draw order.
Dataset sample_subset(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Binary PPM (P6, maxval 255) as (3, H, W) with v / 255, or an ADVT tensor.
ImageTensor load_image(const std::filesystem::path& path);
ImageTensor load_record_image(const Dataset& dataset, const DatasetRecord& record, std::size_t index);

// Writes a 3-channel tensor as P6, rounding v * 255.
void write_ppm(const ImageTensor& image, const std::filesystem::path& path);

// Converters from the official annotation JSON. `image_pattern` maps an
// image to a path; {image_id}, {file_name} and {file_stem} are substituted
// (COCO's numeric id is also available zero-padded as {image_id:012}).
std::vector<DatasetRecord> convert_coco_captions(std::string_view annotations_json,
                                                 std::string_view image_pattern);
std::vector<DatasetRecord> convert_vqav2(std::string_view questions_json, std::string_view annotations_json,
                                         std::string_view image_pattern);

}  // namespace advlm

#endif  // ADVLM_DATASET_HPP_
