#include "advlm/dataset.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "advlm/error.hpp"
#include "advlm/metrics.hpp"
#include "advlm/rng.hpp"

namespace advlm {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view task_name(TaskType task) {
  return task == TaskType::kVqa ? "vqa" : "captioning";
}

std::optional<TaskType> parse_task(std::string_view name) {
  if (name == "vqa") return TaskType::kVqa;
  if (name == "captioning") return TaskType::kCaptioning;
  return std::nullopt;
}

std::filesystem::path Dataset::image_path(const DatasetRecord& record, std::size_t index) const {
  const std::filesystem::path p(record.images.at(index));
  return p.is_absolute() ? p : base_dir / p;
}

std::size_t Dataset::count(TaskType task) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.task == task;
  return n;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* field, const std::string& source,
                                     std::size_t lineno) {
  auto it = j.find(field);
  if (it == j.end()) throw FormatError(source, lineno, std::string("missing field '") + field + "'");
  if (!it->is_array()) throw FormatError(source, lineno, std::string("field '") + field + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) {
      throw FormatError(source, lineno, std::string("field '") + field + "' must hold strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

DatasetRecord parse_record(std::string_view line, const std::string& source, std::size_t lineno) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw FormatError(source, lineno, "malformed JSON");
  if (!j.is_object()) throw FormatError(source, lineno, "record must be a JSON object");

  DatasetRecord r;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    throw FormatError(source, lineno, "missing field 'id'");
  }
  r.id = id->get<std::string>();

  auto task = j.find("task");
  if (task == j.end() || !task->is_string()) throw FormatError(source, lineno, "missing field 'task'");
  const auto parsed = parse_task(task->get<std::string>());
  if (!parsed) throw FormatError(source, lineno, "field 'task' must be 'captioning' or 'vqa'");
  r.task = *parsed;

  r.images = string_list(j, "images", source, lineno);
  if (r.images.empty()) throw FormatError(source, lineno, "field 'images' must not be empty");

  if (r.task == TaskType::kVqa) {
    auto q = j.find("question");
    if (q == j.end() || !q->is_string() || q->get<std::string>().empty()) {
      throw FormatError(source, lineno, "missing field 'question'");
    }
    r.question = q->get<std::string>();
    r.answers = string_list(j, "answers", source, lineno);
    if (r.answers.size() != kVqaAnswerCount) {
      throw FormatError(source, lineno,
                        "field 'answers' must hold " + std::to_string(kVqaAnswerCount) +
                            " strings, got " + std::to_string(r.answers.size()));
    }
  } else {
    r.references = string_list(j, "references", source, lineno);
    if (r.references.empty()) throw FormatError(source, lineno, "field 'references' must not be empty");
  }
  return r;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read dataset " + path.string());
  Dataset ds;
  ds.source = path.filename().string();
  ds.base_dir = path.parent_path();
  ds.loaded_at = now_utc();

  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    DatasetRecord r = parse_record(line, path.string(), lineno);
    if (!seen.insert(r.id).second) throw FormatError(path.string(), lineno, "duplicate id '" + r.id + "'");
    for (std::size_t i = 0; i < r.images.size(); ++i) {
      if (!std::filesystem::is_regular_file(ds.image_path(r, i))) {
        throw FormatError(path.string(), lineno, "image not found: " + ds.image_path(r, i).string());
      }
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::string record_to_json(const DatasetRecord& record) {
  ordered_json j;
  j["id"] = record.id;
  j["task"] = task_name(record.task);
  j["images"] = record.images;
  if (record.task == TaskType::kVqa) {
    j["question"] = record.question;
    j["answers"] = record.answers;
  } else {
    j["references"] = record.references;
  }
  return j.dump();
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write dataset " + path.string());
  for (const auto& r : dataset.records) out << record_to_json(r) << '\n';
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

Dataset sample_subset(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample size must be at least 1");
  const std::size_t size = dataset.size();
  const std::size_t m = std::min(n, size);
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.bounded(size - i));
    std::swap(idx[i], idx[j]);
  }
  Dataset out;
  out.source = dataset.source;
  out.base_dir = dataset.base_dir;
  out.loaded_at = dataset.loaded_at;
  out.records.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.records.push_back(dataset.records[idx[i]]);
  return out;
}

namespace {

// Reads one whitespace-delimited PPM header token, skipping # comments.
std::string header_token(const std::string& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

std::size_t header_number(const std::string& bytes, std::size_t& pos, const std::string& path) {
  const std::string tok = header_token(bytes, pos);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos || tok.size() > 9) {
    throw InvalidArgument(path + ": truncated or malformed PPM header");
  }
  return std::stoul(tok);
}

ImageTensor decode_ppm(const std::string& bytes, const std::string& path) {
  std::size_t pos = 2;
  const std::size_t width = header_number(bytes, pos, path);
  const std::size_t height = header_number(bytes, pos, path);
  const std::size_t maxval = header_number(bytes, pos, path);
  if (width == 0 || height == 0) throw InvalidArgument(path + ": empty image");
  if (maxval != 255) throw InvalidArgument(path + ": unsupported PPM maxval " + std::to_string(maxval));
  if (pos >= bytes.size()) throw InvalidArgument(path + ": truncated PPM");
  ++pos;  // single whitespace byte before the raster
  const std::size_t pixels = width * height;
  if (bytes.size() - pos < 3 * pixels) throw InvalidArgument(path + ": truncated PPM raster");

  ImageTensor img(Shape{3, height, width});
  auto data = img.data();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      data[c * pixels + p] = static_cast<unsigned char>(bytes[pos + 3 * p + c]) / 255.0;
    }
  }
  return img;
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 4 && bytes.compare(0, 4, "ADVT") == 0) {
    ImageTensor t = load_tensor(path);
    t.require_unit_range(path.string());
    return t;
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path.string());
  throw InvalidArgument(path.string() + ": unsupported image format (expected binary PPM P6 or ADVT)");
}

ImageTensor load_record_image(const Dataset& dataset, const DatasetRecord& record, std::size_t index) {
  return load_image(dataset.image_path(record, index));
}

void write_ppm(const ImageTensor& image, const std::filesystem::path& path) {
  const Shape& s = image.shape();
  if (s.channels != 3) throw InvalidArgument("PPM output needs 3 channels, got shape " + s.str());
  image.require_unit_range("image");
  const std::size_t pixels = s.height * s.width;
  std::string out = "P6\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  out.reserve(out.size() + 3 * pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      out += static_cast<char>(static_cast<unsigned char>(std::lround(image[c * pixels + p] * 255.0)));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

namespace {

std::string substitute(std::string_view pattern, std::uint64_t image_id, const std::string& file_name) {
  std::string stem = file_name;
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
  std::string padded = std::to_string(image_id);
  if (padded.size() < 12) padded.insert(0, 12 - padded.size(), '0');

  std::string out(pattern);
  auto replace_all = [&out](const std::string& key, const std::string& value) {
    for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace_all("{image_id:012}", padded);
  replace_all("{image_id}", std::to_string(image_id));
  replace_all("{file_name}", file_name);
  replace_all("{file_stem}", stem);
  return out;
}

json parse_annotations(std::string_view text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidArgument(std::string(what) + " is not a JSON object");
  return j;
}

}  // namespace

std::vector<DatasetRecord> convert_coco_captions(std::string_view annotations_json,
                                                 std::string_view image_pattern) {
  const json j = parse_annotations(annotations_json, "COCO caption annotations");
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, std::string> file_names;
  std::map<std::uint64_t, std::vector<std::string>> captions;
  try {
    for (const auto& img : j.at("images")) {
      const auto id = img.at("id").get<std::uint64_t>();
      file_names[id] = img.value("file_name", std::string());
      order.push_back(id);
    }
    for (const auto& ann : j.at("annotations")) {
      captions[ann.at("image_id").get<std::uint64_t>()].push_back(ann.at("caption").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed COCO caption annotations: ") + e.what());
  }
  std::vector<DatasetRecord> out;
  for (auto id : order) {
    auto it = captions.find(id);
    if (it == captions.end()) continue;
    DatasetRecord r;
    r.id = "coco-" + std::to_string(id);
    r.task = TaskType::kCaptioning;
    r.images = {substitute(image_pattern, id, file_names[id])};
    r.references = it->second;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DatasetRecord> convert_vqav2(std::string_view questions_json, std::string_view annotations_json,
                                         std::string_view image_pattern) {
  const json q = parse_annotations(questions_json, "VQAv2 questions");
  const json a = parse_annotations(annotations_json, "VQAv2 annotations");
  std::map<std::uint64_t, std::vector<std::string>> answers;
  std::vector<DatasetRecord> out;
  try {
    for (const auto& ann : a.at("annotations")) {
      auto& list = answers[ann.at("question_id").get<std::uint64_t>()];
      for (const auto& ans : ann.at("answers")) list.push_back(ans.at("answer").get<std::string>());
    }
    for (const auto& item : q.at("questions")) {
      const auto qid = item.at("question_id").get<std::uint64_t>();
      const auto image_id = item.at("image_id").get<std::uint64_t>();
      auto it = answers.find(qid);
      if (it == answers.end()) continue;
      if (it->second.size() != kVqaAnswerCount) {
        throw InvalidArgument("question " + std::to_string(qid) + " has " + std::to_string(it->second.size()) +
                              " answers, expected 10");
      }
      DatasetRecord r;
      r.id = "vqa-" + std::to_string(qid);
      r.task = TaskType::kVqa;
      r.images = {substitute(image_pattern, image_id, "")};
      r.question = item.at("question").get<std::string>();
      r.answers = it->second;
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed VQAv2 annotations: ") + e.what());
  }
  return out;
}

}  // namespace advlm
