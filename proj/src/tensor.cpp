#include "advlm/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "advlm/advt.hpp"
#include "advlm/error.hpp"
#include "advlm/rng.hpp"

namespace advlm {

static_assert(std::endian::native == std::endian::little,
              "the ADVT and wire formats assume a little-endian host");

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << channels << "," << height << "," << width << ")";
  return os.str();
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }
}

double& ImageTensor::at(std::size_t c, std::size_t y, std::size_t x) {
  return data_[(c * shape_.height + y) * shape_.width + x];
}

double ImageTensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[(c * shape_.height + y) * shape_.width + x];
}

bool ImageTensor::in_unit_range() const {
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

void ImageTensor::require_unit_range(const std::string& what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      std::ostringstream os;
      os << what << ": element " << i << " = " << v << " is outside [0, 1]";
      throw InvalidArgument(os.str());
    }
  }
}

double ImageTensor::max_abs_diff(const ImageTensor& other) const {
  if (shape_ != other.shape_) {
    throw InvalidArgument("shape mismatch " + shape_.str() + " vs " + other.shape_.str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    m = std::max(m, std::abs(data_[i] - other.data_[i]));
  }
  return m;
}

ImageTensor random_tensor(Shape shape, std::uint64_t seed, double lo, double hi) {
  SplitMix64 rng(seed);
  std::vector<double> data(shape.numel());
  for (double& v : data) v = rng.uniform(lo, hi);
  return ImageTensor(shape, std::move(data));
}

// ---------------------------------------------------------------------------
// ADVT container

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* field) {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw InvalidArgument(std::string("ADVT file truncated while reading ") + field);
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'A', 'D', 'V', 'T'};
constexpr std::uint32_t kMaxSlots = 64;
constexpr std::uint32_t kMaxHyper = 64;

}  // namespace

std::vector<std::uint8_t> encode_advt(const AdvtFile& file) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint16_t>(out, kAdvtVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(file.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.shapes.size()));
  for (const Shape& s : file.shapes) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.height));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.width));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.hyper.size()));
  for (std::uint32_t h : file.hyper) put<std::uint32_t>(out, h);
  put<std::uint64_t>(out, file.payload.size());
  for (float f : file.payload) put<float>(out, f);
  return out;
}

AdvtFile decode_advt(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw InvalidArgument("not an ADVT file (bad magic)");
  }
  std::vector<std::uint8_t> rest(bytes.begin() + 4, bytes.end());
  Reader r(rest);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kAdvtVersion) {
    throw InvalidArgument("unsupported ADVT version " + std::to_string(version));
  }
  AdvtFile file;
  const auto kind = r.get<std::uint16_t>("kind");
  if (kind > static_cast<std::uint16_t>(AdvtKind::kToyCaption)) {
    throw InvalidArgument("unknown ADVT kind " + std::to_string(kind));
  }
  file.kind = static_cast<AdvtKind>(kind);
  const auto slots = r.get<std::uint32_t>("slot count");
  if (slots > kMaxSlots) throw InvalidArgument("ADVT slot count too large");
  for (std::uint32_t i = 0; i < slots; ++i) {
    Shape s;
    s.channels = r.get<std::uint32_t>("shape");
    s.height = r.get<std::uint32_t>("shape");
    s.width = r.get<std::uint32_t>("shape");
    file.shapes.push_back(s);
  }
  const auto nhyper = r.get<std::uint32_t>("hyperparameter count");
  if (nhyper > kMaxHyper) throw InvalidArgument("ADVT hyperparameter count too large");
  for (std::uint32_t i = 0; i < nhyper; ++i) file.hyper.push_back(r.get<std::uint32_t>("hyper"));
  const auto count = r.get<std::uint64_t>("payload count");
  if (count * sizeof(float) != r.remaining()) {
    throw InvalidArgument("ADVT payload holds " + std::to_string(r.remaining()) +
                          " bytes, header announces " + std::to_string(count) + " f32 values");
  }
  file.payload.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) file.payload.push_back(r.get<float>("payload"));
  return file;
}

void write_advt(const AdvtFile& file, const std::filesystem::path& path) {
  const auto bytes = encode_advt(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidArgument("write failed: " + path.string());
}

AdvtFile read_advt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_advt(bytes);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void save_tensor(const ImageTensor& tensor, const std::filesystem::path& path) {
  AdvtFile file;
  file.kind = AdvtKind::kTensor;
  file.shapes = {tensor.shape()};
  file.payload.assign(tensor.data().begin(), tensor.data().end());
  write_advt(file, path);
}

ImageTensor load_tensor(const std::filesystem::path& path) {
  AdvtFile file = read_advt(path);
  if (file.kind != AdvtKind::kTensor || file.shapes.size() != 1) {
    throw InvalidArgument(path.string() + ": ADVT file does not hold a single tensor");
  }
  if (file.payload.size() != file.shapes[0].numel()) {
    throw InvalidArgument(path.string() + ": payload size does not match tensor shape");
  }
  return ImageTensor(file.shapes[0], std::vector<double>(file.payload.begin(), file.payload.end()));
}

}  // namespace advlm
