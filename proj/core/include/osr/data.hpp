#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace osr {

/// Images are stored as float32 [N, C, H, W], normalized as (x/255 - mean) / std.
/// With the defaults (0.5, 0.5) pixels lie in [-1, 1], matching the generator's tanh.
struct Normalization {
  double mean = 0.5;
  double std = 0.5;

  double lower() const { return (0.0 - mean) / std; }
  double upper() const { return (1.0 - mean) / std; }
};

struct ImageSpec {
  int64_t channels = 1;
  int64_t size = 32;
  Normalization norm;
};

struct Dataset {
  std::string name;
  torch::Tensor images;          // float32 [N, C, H, W]
  torch::Tensor labels;          // int64 [N]
  torch::Tensor source_index;    // int64 [N], row index in the originating file
  int64_t num_classes = 0;
  Normalization norm;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  Dataset subset(const torch::Tensor& rows) const;
};

// --- IDX ------------------------------------------------------------------

/// Raw contents of an unsigned-byte IDX file (magic 0x0000080N).
struct IdxArray {
  std::vector<int64_t> dims;
  std::vector<uint8_t> data;
};

/// Reads a raw or gzip-compressed (".gz") IDX file.
IdxArray read_idx(const std::filesystem::path& path);
/// Writes an IDX file; gzip-compressed when the path ends in ".gz".
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// Resizes to spec.size x spec.size, replicates grayscale to spec.channels
/// and normalizes. `pixels` is uint8 [N, C, H, W].
torch::Tensor prepare_images(const torch::Tensor& pixels, const ImageSpec& spec);

/// Images file plus optional labels file (absent labels become 0).
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 const ImageSpec& spec, std::string name = "idx");

enum class Part { Train, Test };

/// {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz] under `root`.
Dataset load_mnist(const std::filesystem::path& root, Part part, const ImageSpec& spec);

/// CIFAR binary batches: 1 label byte (CIFAR-10) or coarse+fine bytes
/// (CIFAR-100, fine label used) followed by 3072 pixel bytes.
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files, bool cifar100, const ImageSpec& spec,
                          std::string name);
Dataset load_cifar10(const std::filesystem::path& root, Part part, const ImageSpec& spec);
Dataset load_cifar100(const std::filesystem::path& root, Part part, const ImageSpec& spec);

// --- synthetic sets -------------------------------------------------------

/// i.i.d. standard normal pixels clipped to the normalized range.
Dataset make_noise_dataset(int64_t n, uint64_t seed, const ImageSpec& spec);

/// Adds clipped standard-normal noise to background pixels (at or below half
/// the normalized range) and leaves digit strokes untouched.
Dataset make_mnist_noise(const Dataset& mnist, uint64_t seed);

// --- splits ---------------------------------------------------------------

enum class Protocol { Auroc, F1 };

std::string_view to_string(Protocol protocol);
Protocol parse_protocol(std::string_view text);

struct SplitSpec {
  Protocol protocol = Protocol::Auroc;
  std::string dataset;
  int trial = 0;
  std::vector<int64_t> known;
  std::vector<int64_t> open;

  bool operator==(const SplitSpec&) const = default;
};

/// Every entry of the built-in registry.
const std::vector<SplitSpec>& split_registry();

/// Throws ErrorKind::NotFound when no entry exists.
const SplitSpec& registry_lookup(Protocol protocol, std::string_view dataset, int trial);

struct SplitData {
  Dataset closed_train;  // labels remapped to 0..K-1 (ascending original index)
  Dataset closed_test;
  Dataset open_test;     // original labels of the open source
  std::vector<int64_t> known;

  int64_t num_known() const { return static_cast<int64_t>(known.size()); }
};

/// Closed sets come from `train`/`test`; the open set from `open_source`
/// (the test part of a second dataset for the composed CIFAR+ splits,
/// otherwise the same `test`).
SplitData build_split(const Dataset& train, const Dataset& test, const SplitSpec& spec,
                      const Dataset* open_source = nullptr);

/// Keeps at most `per_class` samples of each class, first-come order.
Dataset cap_per_class(const Dataset& dataset, int64_t per_class);

}  // namespace osr
