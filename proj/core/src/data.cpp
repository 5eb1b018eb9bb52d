#include "osr/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "osr/error.hpp"

namespace osr {

namespace fs = std::filesystem;

namespace {

bool ends_with_gz(const fs::path& path) { return path.extension() == ".gz"; }

class GzReader {
 public:
  explicit GzReader(const fs::path& path) : path_(path), file_(gzopen(path.c_str(), "rb")) {
    if (file_ == nullptr) fail(ErrorKind::Io, "cannot open " + path.string());
  }
  ~GzReader() { gzclose(file_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, size_t n, const char* what) {
    auto* out = static_cast<uint8_t*>(dst);
    while (n > 0) {
      auto chunk = static_cast<unsigned>(std::min<size_t>(n, 1u << 30));
      int got = gzread(file_, out, chunk);
      if (got <= 0) fail(ErrorKind::Io, path_.string() + ": truncated " + what);
      out += got;
      n -= static_cast<size_t>(got);
    }
  }

 private:
  fs::path path_;
  gzFile file_;
};

uint32_t read_be32(GzReader& in) {
  uint8_t b[4];
  in.read(b, 4, "header");
  return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) | (uint32_t{b[2]} << 8) | uint32_t{b[3]};
}

void put_be32(std::string& out, uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::vector<uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset Dataset::subset(const torch::Tensor& rows) const {
  Dataset out;
  out.name = name;
  out.num_classes = num_classes;
  out.norm = norm;
  out.images = images.index_select(0, rows);
  out.labels = labels.index_select(0, rows);
  out.source_index = source_index.index_select(0, rows);
  return out;
}

// --- IDX ------------------------------------------------------------------

IdxArray read_idx(const fs::path& path) {
  GzReader in(path);
  uint8_t magic[4];
  in.read(magic, 4, "magic");
  if (magic[0] != 0 || magic[1] != 0 || magic[2] != 0x08 || magic[3] == 0)
    fail(ErrorKind::Io, path.string() + ": bad IDX magic (expected unsigned-byte data)");
  IdxArray out;
  size_t total = 1;
  for (int d = 0; d < magic[3]; ++d) {
    auto dim = read_be32(in);
    out.dims.push_back(dim);
    total *= dim;
  }
  out.data.resize(total);
  if (total > 0) in.read(out.data.data(), total, "payload");
  return out;
}

void write_idx(const fs::path& path, const IdxArray& array) {
  size_t total = 1;
  for (auto d : array.dims) total *= static_cast<size_t>(d);
  if (array.dims.empty() || array.dims.size() > 255 || total != array.data.size())
    fail(ErrorKind::Input, "write_idx: dims do not match payload size");
  std::string bytes{'\0', '\0', '\x08', static_cast<char>(array.dims.size())};
  for (auto d : array.dims) put_be32(bytes, static_cast<uint32_t>(d));
  bytes.append(reinterpret_cast<const char*>(array.data.data()), array.data.size());

  if (ends_with_gz(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) fail(ErrorKind::Io, "cannot write " + path.string());
    auto ok = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) == static_cast<int>(bytes.size());
    gzclose(f);
    if (!ok) fail(ErrorKind::Io, "short write to " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  }
}

torch::Tensor prepare_images(const torch::Tensor& pixels, const ImageSpec& spec) {
  if (pixels.dim() != 4) fail(ErrorKind::Input, "prepare_images: expected [N, C, H, W]");
  auto x = pixels.to(torch::kFloat).div(255.0);
  if (x.size(2) != spec.size || x.size(3) != spec.size) {
    namespace F = torch::nn::functional;
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{spec.size, spec.size})
                              .mode(torch::kBilinear)
                              .align_corners(false))
            .clamp(0.0, 1.0);
  }
  if (x.size(1) != spec.channels) {
    if (x.size(1) == 1)
      x = x.expand({x.size(0), spec.channels, spec.size, spec.size}).contiguous();
    else if (spec.channels == 1)
      x = x.mean(1, /*keepdim=*/true);
    else
      fail(ErrorKind::Input, "prepare_images: cannot map channel count");
  }
  return ((x - spec.norm.mean) / spec.norm.std).contiguous();
}

Dataset load_idx(const fs::path& images, const std::optional<fs::path>& labels, const ImageSpec& spec,
                 std::string name) {
  auto img = read_idx(images);
  if (img.dims.size() != 3 && img.dims.size() != 4)
    fail(ErrorKind::Io, images.string() + ": expected 3-D [N,H,W] or 4-D [N,C,H,W] image data");
  const int64_t n = img.dims[0];
  std::vector<int64_t> shape =
      img.dims.size() == 3 ? std::vector<int64_t>{n, 1, img.dims[1], img.dims[2]} : img.dims;
  auto pixels = torch::from_blob(img.data.data(), shape, torch::kUInt8).clone();

  Dataset out;
  out.name = std::move(name);
  out.norm = spec.norm;
  out.images = prepare_images(pixels, spec);
  out.source_index = torch::arange(n, torch::kLong);
  if (labels) {
    auto lbl = read_idx(*labels);
    if (lbl.dims.size() != 1 || lbl.dims[0] != n)
      fail(ErrorKind::Io, labels->string() + ": label count does not match image count");
    out.labels = torch::from_blob(lbl.data.data(), {n}, torch::kUInt8).to(torch::kLong);
    out.num_classes = n > 0 ? out.labels.max().item<int64_t>() + 1 : 0;
  } else {
    out.labels = torch::zeros({n}, torch::kLong);
    out.num_classes = 0;
  }
  return out;
}

Dataset load_mnist(const fs::path& root, Part part, const ImageSpec& spec) {
  const std::string prefix = part == Part::Train ? "train" : "t10k";
  auto find = [&](const std::string& stem) {
    for (const auto* ext : {"", ".gz"}) {
      auto p = root / (prefix + stem + ext);
      if (fs::exists(p)) return p;
    }
    fail(ErrorKind::NotFound, "MNIST file " + prefix + stem + "[.gz] not found under " + root.string());
  };
  auto out = load_idx(find("-images-idx3-ubyte"), find("-labels-idx1-ubyte"), spec, "mnist");
  out.num_classes = 10;
  return out;
}

Dataset load_cifar_binary(const std::vector<fs::path>& files, bool cifar100, const ImageSpec& spec,
                          std::string name) {
  const size_t label_bytes = cifar100 ? 2 : 1;
  const size_t record = label_bytes + 3072;
  std::vector<uint8_t> pixels;
  std::vector<int64_t> labels;
  for (const auto& file : files) {
    auto bytes = read_all(file);
    if (bytes.size() % record != 0) fail(ErrorKind::Io, file.string() + ": truncated CIFAR record");
    for (size_t off = 0; off < bytes.size(); off += record) {
      labels.push_back(bytes[off + label_bytes - 1]);
      pixels.insert(pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off + label_bytes),
                    bytes.begin() + static_cast<std::ptrdiff_t>(off + record));
    }
  }
  const auto n = static_cast<int64_t>(labels.size());
  Dataset out;
  out.name = std::move(name);
  out.norm = spec.norm;
  out.images = prepare_images(torch::from_blob(pixels.data(), {n, 3, 32, 32}, torch::kUInt8).clone(), spec);
  out.labels = torch::tensor(labels, torch::kLong);
  out.source_index = torch::arange(n, torch::kLong);
  out.num_classes = cifar100 ? 100 : 10;
  return out;
}

Dataset load_cifar10(const fs::path& root, Part part, const ImageSpec& spec) {
  std::vector<fs::path> files;
  if (part == Part::Train)
    for (int b = 1; b <= 5; ++b) files.push_back(root / ("data_batch_" + std::to_string(b) + ".bin"));
  else
    files.push_back(root / "test_batch.bin");
  for (const auto& f : files)
    if (!fs::exists(f)) fail(ErrorKind::NotFound, "CIFAR-10 file not found: " + f.string());
  return load_cifar_binary(files, false, spec, "cifar10");
}

Dataset load_cifar100(const fs::path& root, Part part, const ImageSpec& spec) {
  auto f = root / (part == Part::Train ? "train.bin" : "test.bin");
  if (!fs::exists(f)) fail(ErrorKind::NotFound, "CIFAR-100 file not found: " + f.string());
  return load_cifar_binary({f}, true, spec, "cifar100");
}

// --- synthetic sets -------------------------------------------------------

Dataset make_noise_dataset(int64_t n, uint64_t seed, const ImageSpec& spec) {
  if (n <= 0) fail(ErrorKind::Input, "make_noise_dataset: n must be positive");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  Dataset out;
  out.name = "noise";
  out.norm = spec.norm;
  out.images = torch::randn({n, spec.channels, spec.size, spec.size}, gen, torch::TensorOptions(torch::kFloat))
                   .clamp(spec.norm.lower(), spec.norm.upper());
  out.labels = torch::zeros({n}, torch::kLong);
  out.source_index = torch::arange(n, torch::kLong);
  out.num_classes = 1;
  return out;
}

Dataset make_mnist_noise(const Dataset& mnist, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const double threshold = (0.5 - mnist.norm.mean) / mnist.norm.std;
  auto noise = torch::randn(mnist.images.sizes(), gen, mnist.images.options());
  auto noisy = (mnist.images + noise).clamp(mnist.norm.lower(), mnist.norm.upper());
  Dataset out = mnist;
  out.name = mnist.name + "-noise";
  out.images = torch::where(mnist.images > threshold, mnist.images, noisy);
  return out;
}

// --- splits ---------------------------------------------------------------

std::string_view to_string(Protocol protocol) { return protocol == Protocol::Auroc ? "auroc" : "f1"; }

Protocol parse_protocol(std::string_view text) {
  if (text == "auroc") return Protocol::Auroc;
  if (text == "f1") return Protocol::F1;
  fail(ErrorKind::Config, "unknown protocol '" + std::string(text) + "' (expected auroc or f1)");
}

SplitData build_split(const Dataset& train, const Dataset& test, const SplitSpec& spec,
                      const Dataset* open_source) {
  if (spec.known.empty()) fail(ErrorKind::Input, "build_split: no known classes");
  std::set<int64_t> known(spec.known.begin(), spec.known.end());
  if (known.size() != spec.known.size()) fail(ErrorKind::Input, "build_split: duplicate known class index");
  const Dataset& open_src = open_source != nullptr ? *open_source : test;
  std::set<int64_t> open(spec.open.begin(), spec.open.end());
  if (open.size() != spec.open.size()) fail(ErrorKind::Input, "build_split: duplicate open class index");
  if (open_source == nullptr)
    for (auto c : open)
      if (known.contains(c)) fail(ErrorKind::Input, "build_split: class " + std::to_string(c) + " is both known and open");
  for (auto c : known)
    if (c < 0 || c >= train.num_classes)
      fail(ErrorKind::Input, "build_split: known class " + std::to_string(c) + " not in dataset " + train.name);
  for (auto c : open)
    if (c < 0 || c >= open_src.num_classes)
      fail(ErrorKind::Input, "build_split: open class " + std::to_string(c) + " not in dataset " + open_src.name);

  // Original index -> position in ascending order.
  auto remap = torch::full({std::max(train.num_classes, test.num_classes)}, -1, torch::kLong);
  int64_t next = 0;
  for (auto c : known) remap[c] = next++;

  auto select = [](const Dataset& d, const std::set<int64_t>& classes) {
    auto cls = torch::tensor(std::vector<int64_t>(classes.begin(), classes.end()), torch::kLong);
    auto mask = torch::isin(d.labels, cls);
    return d.subset(mask.nonzero().flatten());
  };

  SplitData out;
  out.known.assign(known.begin(), known.end());
  const auto k = static_cast<int64_t>(known.size());
  for (auto [dst, src] : {std::pair{&out.closed_train, &train}, std::pair{&out.closed_test, &test}}) {
    *dst = select(*src, known);
    dst->labels = remap.index_select(0, dst->labels);
    dst->num_classes = k;
  }
  out.open_test = open.empty() ? open_src.subset(torch::zeros({0}, torch::kLong)) : select(open_src, open);
  return out;
}

Dataset cap_per_class(const Dataset& dataset, int64_t per_class) {
  if (per_class <= 0) return dataset;
  std::map<int64_t, int64_t> seen;
  std::vector<int64_t> rows;
  auto labels = dataset.labels.contiguous();
  const auto* lbl = labels.data_ptr<int64_t>();
  for (int64_t r = 0; r < dataset.size(); ++r)
    if (seen[lbl[r]]++ < per_class) rows.push_back(r);
  return dataset.subset(torch::tensor(rows, torch::kLong));
}

}  // namespace osr
