#include "closer/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>

#include "closer/error.hpp"

namespace closer {

Dataset::Dataset(std::size_t dim, std::optional<ImageShape> image) : dim_(dim), image_(image) {
  require(dim > 0, ErrorCode::kInvalidArgument, "dataset dimension must be positive");
  if (image_) {
    require(image_->rows * image_->cols == dim, ErrorCode::kInvalidArgument,
            "image shape does not match dataset dimension");
  }
}

void Dataset::add(std::span<const double> input, int label) {
  require(input.size() == dim_, ErrorCode::kShapeMismatch,
          "dataset: sample has " + std::to_string(input.size()) + " values, expected " +
              std::to_string(dim_));
  inputs_.insert(inputs_.end(), input.begin(), input.end());
  labels_.push_back(label);
}

void Dataset::append(const Dataset& other) {
  require(other.dim_ == dim_, ErrorCode::kShapeMismatch, "dataset: appending mismatched dims");
  inputs_.insert(inputs_.end(), other.inputs_.begin(), other.inputs_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

std::span<const double> Dataset::input(std::size_t i) const {
  return std::span<const double>(inputs_).subspan(i * dim_, dim_);
}

Sample Dataset::sample(std::size_t i) const {
  auto in = input(i);
  return Sample{{in.begin(), in.end()}, labels_[i]};
}

std::vector<int> Dataset::classes() const {
  std::set<int> s(labels_.begin(), labels_.end());
  return {s.begin(), s.end()};
}

std::vector<std::size_t> Dataset::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) out.push_back(i);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(dim_, image_);
  out.inputs_.reserve(indices.size() * dim_);
  for (auto i : indices) {
    require(i < size(), ErrorCode::kInvalidArgument, "dataset: subset index out of range");
    out.add(input(i), labels_[i]);
  }
  return out;
}

Dataset Dataset::filter_classes(std::span<const int> keep) const {
  std::set<int> k(keep.begin(), keep.end());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); ++i)
    if (k.contains(labels_[i])) idx.push_back(i);
  return subset(idx);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  require(!indices.empty(), ErrorCode::kInvalidArgument, "dataset: empty batch");
  std::vector<double> data;
  data.reserve(indices.size() * dim_);
  for (auto i : indices) {
    auto in = input(i);
    data.insert(data.end(), in.begin(), in.end());
  }
  return Tensor::matrix(indices.size(), dim_, std::move(data));
}

Tensor Dataset::all_inputs() const {
  require(!empty(), ErrorCode::kInvalidArgument, "dataset: empty");
  return Tensor::matrix(size(), dim_, inputs_);
}

Dataset synth_gaussian_classes(const GaussianClassesSpec& spec) {
  require(spec.classes >= 2, ErrorCode::kInvalidArgument, "synth: need at least two classes");
  require(spec.n_per_class >= 1, ErrorCode::kInvalidArgument, "synth: need samples per class");
  require(spec.input_dim >= 1, ErrorCode::kInvalidArgument, "synth: input_dim must be positive");
  require(spec.center_separation > 0.0, ErrorCode::kInvalidArgument,
          "synth: center separation must be positive");
  require(spec.cluster_std >= 0.0, ErrorCode::kInvalidArgument, "synth: negative cluster std");
  require(spec.modes_per_class >= 1 && spec.mode_spread >= 0.0, ErrorCode::kInvalidArgument,
          "synth: need at least one mode and a non-negative mode spread");
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out(spec.input_dim, spec.image);
  std::vector<double> center(spec.input_dim), x(spec.input_dim);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (auto& v : center) {
        v = normal(rng);
        n2 += v * v;
      }
    } while (n2 == 0.0);
    const double s = spec.center_separation / std::sqrt(n2);
    for (auto& v : center) v *= s;
    std::vector<std::vector<double>> modes(spec.modes_per_class, center);
    if (spec.modes_per_class > 1) {
      for (auto& m : modes)
        for (auto& v : m) v += spec.mode_spread * normal(rng);
    }
    std::uniform_int_distribution<std::size_t> pick(0, spec.modes_per_class - 1);
    for (std::size_t k = 0; k < spec.n_per_class; ++k) {
      const auto& mode = spec.modes_per_class > 1 ? modes[pick(rng)] : center;
      for (std::size_t j = 0; j < spec.input_dim; ++j)
        x[j] = mode[j] + (spec.cluster_std > 0.0 ? spec.cluster_std * normal(rng) : 0.0);
      out.add(x, static_cast<int>(c));
    }
  }
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data, std::size_t test_per_class,
                                             std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (int c : data.classes()) {
    auto idx = data.indices_of(c);
    require(idx.size() > test_per_class, ErrorCode::kInvalidArgument,
            "split: class " + std::to_string(c) + " has only " + std::to_string(idx.size()) +
                " samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + test_per_class);
    train_idx.insert(train_idx.end(), idx.begin() + test_per_class, idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.subset(train_idx), data.subset(test_idx)};
}

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* what) {
  if (offset + 4 > bytes.size()) {
    fail(ErrorCode::kFormat, std::string(what) + ": truncated header at byte offset " +
                                 std::to_string(offset) + " (file has " +
                                 std::to_string(bytes.size()) + " bytes)");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  os.write(b, 4);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  const auto image_magic = read_be32(images, 0, "idx images");
  if (image_magic != kIdxImageMagic) {
    fail(ErrorCode::kFormat, "idx images: bad magic " + hex32(image_magic) +
                                 " at byte offset 0, expected " + hex32(kIdxImageMagic));
  }
  const auto label_magic = read_be32(labels, 0, "idx labels");
  if (label_magic != kIdxLabelMagic) {
    fail(ErrorCode::kFormat, "idx labels: bad magic " + hex32(label_magic) +
                                 " at byte offset 0, expected " + hex32(kIdxLabelMagic));
  }
  const std::size_t count = read_be32(images, 4, "idx images");
  const std::size_t rows = read_be32(images, 8, "idx images");
  const std::size_t cols = read_be32(images, 12, "idx images");
  const std::size_t label_count = read_be32(labels, 4, "idx labels");
  if (count != label_count) {
    fail(ErrorCode::kFormat, "idx: image count " + std::to_string(count) +
                                 " (byte offset 4 of images) differs from label count " +
                                 std::to_string(label_count) + " (byte offset 4 of labels)");
  }
  require(rows > 0 && cols > 0, ErrorCode::kFormat, "idx images: zero image extent at offset 8");
  const std::size_t pixels = rows * cols;
  const std::size_t image_end = 16 + count * pixels;
  if (images.size() < image_end) {
    fail(ErrorCode::kFormat, "idx images: truncated payload, data ends at byte offset " +
                                 std::to_string(images.size()) + " but " +
                                 std::to_string(image_end) + " bytes are required");
  }
  if (labels.size() < 8 + count) {
    fail(ErrorCode::kFormat, "idx labels: truncated payload, data ends at byte offset " +
                                 std::to_string(labels.size()) + " but " +
                                 std::to_string(8 + count) + " bytes are required");
  }
  Dataset out(pixels, ImageShape{rows, cols});
  std::vector<double> x(pixels);
  for (std::size_t i = 0; i < count; ++i) {
    const auto* p = images.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j) x[j] = static_cast<double>(p[j]) / 255.0;
    out.add(x, static_cast<int>(labels[8 + i]));
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels);
}

void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  require(data.image_shape().has_value(), ErrorCode::kInvalidArgument,
          "write_idx: dataset is not an image dataset");
  const auto shape = *data.image_shape();
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  require(img && lab, ErrorCode::kIo, "write_idx: cannot open output files");
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(shape.rows));
  write_be32(img, static_cast<std::uint32_t>(shape.cols));
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.input(i))
      img.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    require(data.label(i) >= 0 && data.label(i) < 256, ErrorCode::kInvalidArgument,
            "write_idx: label does not fit in a byte");
    lab.put(static_cast<char>(data.label(i)));
  }
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::kIo, "cannot write " + path.string());
  os << "label";
  for (std::size_t j = 0; j < data.dim(); ++j) os << ",x" << j;
  os << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.label(i);
    for (double v : data.input(i)) os << ',' << v;
    os << '\n';
  }
}

Dataset load_csv(const std::filesystem::path& path, std::optional<ImageShape> image) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::optional<Dataset> out;
  std::size_t line_no = 0;
  std::vector<double> x;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.rfind("label", 0) == 0 || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    int label = 0;
    try {
      label = std::stoi(cell);
      x.clear();
      while (std::getline(ss, cell, ',')) x.push_back(std::stod(cell));
    } catch (const std::exception&) {
      fail(ErrorCode::kFormat, path.string() + ": unparsable value on line " +
                                   std::to_string(line_no));
    }
    if (!out) out.emplace(x.size(), image);
    require(x.size() == out->dim(), ErrorCode::kFormat,
            path.string() + ": line " + std::to_string(line_no) + " has " +
                std::to_string(x.size()) + " inputs, expected " + std::to_string(out->dim()));
    out->add(x, label);
  }
  require(out.has_value(), ErrorCode::kFormat, path.string() + ": no samples");
  return *out;
}

void AugmentationSpec::validate() const {
  require(hflip_probability >= 0.0 && hflip_probability <= 1.0, ErrorCode::kInvalidArgument,
          "augmentation: flip probability outside [0, 1]");
  require(noise_std >= 0.0, ErrorCode::kInvalidArgument, "augmentation: negative noise std");
}

std::vector<double> augment(std::span<const double> input, const std::optional<ImageShape>& image,
                            const AugmentationSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> x(input.begin(), input.end());
  const bool needs_image = spec.crop.has_value() || spec.hflip_probability > 0.0;
  if (needs_image) {
    require(image.has_value(), ErrorCode::kInvalidArgument,
            "augment: crop/flip requested on non-image data");
    require(image->rows * image->cols == x.size(), ErrorCode::kShapeMismatch,
            "augment: image shape does not match input length");
  }
  if (spec.crop) {
    const auto rows = image->rows, cols = image->cols, pad = spec.crop->pad;
    require(image->square() && spec.crop->size == rows, ErrorCode::kInvalidArgument,
            "augment: crop size must equal the side of a square image");
    std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
    const auto dr = offset(rng), dc = offset(rng);
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        // position in the padded canvas, shifted back into source coordinates
        const auto pr = r + dr, pc = c + dc;
        if (pr < pad || pc < pad || pr - pad >= rows || pc - pad >= cols) continue;
        out[r * cols + c] = x[(pr - pad) * cols + (pc - pad)];
      }
    }
    x = std::move(out);
  }
  if (spec.hflip_probability > 0.0) {
    std::bernoulli_distribution flip(spec.hflip_probability);
    if (flip(rng)) {
      for (std::size_t r = 0; r < image->rows; ++r) {
        auto begin = x.begin() + static_cast<std::ptrdiff_t>(r * image->cols);
        std::reverse(begin, begin + static_cast<std::ptrdiff_t>(image->cols));
      }
    }
  }
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& v : x) {
      v += noise(rng);
      if (image) v = std::clamp(v, 0.0, 1.0);
    }
  }
  return x;
}

Sample augment(const Sample& sample, const std::optional<ImageShape>& image,
               const AugmentationSpec& spec, Rng& rng) {
  return Sample{augment(sample.input, image, spec, rng), sample.label};
}

std::uint64_t augmentation_seed(std::uint64_t base_seed, const AugmentationSpec& spec,
                                std::size_t epoch, std::size_t sample_index) {
  auto s = derive_seed(base_seed, stream::kAugment + spec.stream);
  s = derive_seed(s, epoch);
  return derive_seed(s, sample_index);
}

std::vector<double> rotate_image(std::span<const double> image, std::size_t side,
                                 int quarter_turns) {
  require(image.size() == side * side, ErrorCode::kShapeMismatch,
          "rotate_image: input is not a square image of the given side");
  std::vector<double> cur(image.begin(), image.end()), next(cur.size());
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    for (std::size_t r = 0; r < side; ++r)
      for (std::size_t c = 0; c < side; ++c) next[c * side + (side - 1 - r)] = cur[r * side + c];
    std::swap(cur, next);
  }
  return cur;
}

Dataset rotate_class_synthesis(const Dataset& data, int source_class, int degrees,
                               std::optional<int> new_label) {
  require(data.image_shape().has_value() && data.image_shape()->square(),
          ErrorCode::kInvalidArgument, "rotation needs square image data");
  require(degrees == 90 || degrees == 180 || degrees == 270, ErrorCode::kInvalidArgument,
          "rotation angle must be 90, 180 or 270 degrees, got " + std::to_string(degrees));
  const auto existing = data.classes();
  const int label = new_label.value_or(existing.empty() ? 0 : existing.back() + 1);
  require(!std::binary_search(existing.begin(), existing.end(), label),
          ErrorCode::kInvalidArgument,
          "rotation: synthetic label " + std::to_string(label) + " already in use");
  const auto idx = data.indices_of(source_class);
  require(!idx.empty(), ErrorCode::kInvalidArgument,
          "rotation: source class " + std::to_string(source_class) + " has no samples");
  const auto side = data.image_shape()->rows;
  Dataset out(data.dim(), data.image_shape());
  for (auto i : idx) out.add(rotate_image(data.input(i), side, degrees / 90), label);
  return out;
}

}  // namespace closer
