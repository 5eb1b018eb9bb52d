#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "osr/data.hpp"
#include "osr/error.hpp"

using namespace osr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("osr_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

IdxArray three_images() {
  IdxArray a;
  a.dims = {3, 4, 5};
  for (int i = 0; i < 60; ++i) a.data.push_back(static_cast<uint8_t>((i * 37) % 256));
  return a;
}

/// Synthetic dataset: `per_class` images for each of `classes` labels; the
/// pixel value encodes the row so identities can be traced.
Dataset synthetic(int64_t classes, int64_t per_class, int64_t offset = 0) {
  const int64_t n = classes * per_class;
  Dataset d;
  d.name = "synthetic";
  d.images = (torch::arange(n, torch::kFloat) + static_cast<double>(offset)).view({n, 1, 1, 1}).expand({n, 1, 4, 4}).clone();
  d.labels = torch::arange(n, torch::kLong).remainder(classes);
  d.source_index = torch::arange(n, torch::kLong) + offset;
  d.num_classes = classes;
  return d;
}

std::set<int64_t> label_set(const torch::Tensor& t) {
  auto c = t.contiguous();
  return {c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + c.numel()};
}

}  // namespace

// --- IDX ----------------------------------------------------------------------

TEST(Idx, RoundTripRawAndGzip) {
  auto dir = temp_dir("roundtrip");
  auto a = three_images();
  for (const char* name : {"x.idx", "x.idx.gz"}) {
    write_idx(dir / name, a);
    auto b = read_idx(dir / name);
    EXPECT_EQ(b.dims, a.dims) << name;
    EXPECT_EQ(b.data, a.data) << name;
  }
}

TEST(Idx, TruncatedPayloadIsError) {
  auto dir = temp_dir("truncated");
  write_idx(dir / "x.idx", three_images());
  fs::resize_file(dir / "x.idx", fs::file_size(dir / "x.idx") - 7);
  EXPECT_THROW(read_idx(dir / "x.idx"), Error);
}

TEST(Idx, BadMagicIsError) {
  auto dir = temp_dir("magic");
  std::ofstream(dir / "bad.idx", std::ios::binary) << std::string("\x00\x00\x0d\x01\x00\x00\x00\x01\x00", 9);
  EXPECT_THROW(read_idx(dir / "bad.idx"), Error);
  EXPECT_THROW(read_idx(dir / "missing.idx"), Error);
}

TEST(Idx, LoadIdxScalesAndResizes) {
  auto dir = temp_dir("load");
  IdxArray img;
  img.dims = {2, 28, 28};
  img.data.assign(2 * 28 * 28, 0);
  std::fill(img.data.begin() + 28 * 28, img.data.end(), 255);
  IdxArray lbl;
  lbl.dims = {2};
  lbl.data = {7, 3};
  write_idx(dir / "img.idx", img);
  write_idx(dir / "lbl.idx", lbl);
  ImageSpec spec;
  auto ds = load_idx(dir / "img.idx", dir / "lbl.idx", spec);
  EXPECT_EQ(ds.images.sizes(), (std::vector<int64_t>{2, 1, 32, 32}));
  EXPECT_FLOAT_EQ(ds.images[0].min().item<float>(), -1.0f);
  EXPECT_FLOAT_EQ(ds.images[1].max().item<float>(), 1.0f);
  EXPECT_EQ(ds.labels[0].item<int64_t>(), 7);

  spec.channels = 3;
  EXPECT_EQ(load_idx(dir / "img.idx", std::nullopt, spec).images.size(1), 3);

  lbl.dims = {3};
  lbl.data = {1, 2, 3};
  write_idx(dir / "lbl3.idx", lbl);
  EXPECT_THROW(load_idx(dir / "img.idx", dir / "lbl3.idx", ImageSpec{}), Error);
}

TEST(Idx, BundledMnistSubset) {
  ImageSpec spec;
  auto train = load_mnist(OSR_TEST_DATA_DIR "/mnist", Part::Train, spec);
  auto test = load_mnist(OSR_TEST_DATA_DIR "/mnist", Part::Test, spec);
  EXPECT_EQ(train.size(), 8000);
  EXPECT_EQ(test.size(), 2000);
  EXPECT_EQ(train.num_classes, 10);
  EXPECT_EQ(label_set(train.labels).size(), 10u);
  EXPECT_GE(train.images.min().item<float>(), -1.0f);
  EXPECT_LE(train.images.max().item<float>(), 1.0f);
}

// --- synthetic sets -------------------------------------------------------------------

TEST(Noise, DeterministicAndCentred) {
  ImageSpec spec;
  auto a = make_noise_dataset(10000, 5, spec);
  auto b = make_noise_dataset(10000, 5, spec);
  EXPECT_EQ(a.size(), 10000);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  EXPECT_FALSE(torch::equal(a.images, make_noise_dataset(10000, 6, spec).images));
  // Clipping at +-1 is symmetric, so the mean stays at 0.
  EXPECT_NEAR(a.images.mean().item<double>(), 0.0, 0.05);
  EXPECT_GE(a.images.min().item<double>(), -1.0);
  EXPECT_LE(a.images.max().item<double>(), 1.0);
  // Pre-clipping the same generator yields standard normals.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  auto raw = torch::randn({10000, 1, 32, 32}, gen, torch::TensorOptions(torch::kFloat));
  EXPECT_NEAR(raw.mean().item<double>(), 0.0, 0.05);
  EXPECT_THROW(make_noise_dataset(0, 1, spec), Error);
}

TEST(Noise, MnistNoiseKeepsDigitStrokes) {
  auto mnist = load_mnist(OSR_TEST_DATA_DIR "/mnist", Part::Test, ImageSpec{}).subset(torch::arange(200));
  auto a = make_mnist_noise(mnist, 9);
  auto b = make_mnist_noise(mnist, 9);
  EXPECT_TRUE(torch::equal(a.images, b.images));
  auto fg = mnist.images > 0.0;  // pixel above half intensity
  EXPECT_TRUE(torch::equal(a.images.masked_select(fg), mnist.images.masked_select(fg)));
  auto bg = fg.logical_not();
  EXPECT_GT(a.images.masked_select(bg).var().item<double>(), mnist.images.masked_select(bg).var().item<double>());
}

// --- registry ---------------------------------------------------------------------------

TEST(Registry, MatchesTranscribedTables) {
  std::ifstream in(OSR_TEST_FIXTURES_DIR "/split_tables.txt");
  ASSERT_TRUE(in);
  std::string line;
  int checked = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream head(line.substr(0, line.find('|')));
    std::string proto, dataset;
    int trial = 0;
    head >> proto >> dataset >> trial;
    std::vector<int64_t> listed;
    std::string list = line.substr(line.find('|') + 1);
    std::replace(list.begin(), list.end(), ',', ' ');
    std::istringstream items(list);
    for (int64_t v; items >> v;) listed.push_back(v);

    const auto& spec = registry_lookup(parse_protocol(proto), dataset, trial);
    const bool composed = dataset.rfind("cifar+", 0) == 0;
    if (composed) {
      EXPECT_EQ(spec.open, listed) << line;
      EXPECT_EQ(spec.known, (std::vector<int64_t>{0, 1, 8, 9})) << line;
    } else {
      auto known = spec.known;
      std::sort(known.begin(), known.end());
      auto expected = listed;
      std::sort(expected.begin(), expected.end());
      EXPECT_EQ(known, expected) << line;
      const int64_t classes = dataset == "tiny-imagenet" ? 200 : 10;
      EXPECT_EQ(static_cast<int64_t>(spec.known.size() + spec.open.size()), classes) << line;
    }
    // cifar+ open classes index CIFAR-100, so they share no namespace with the known set.
    std::set<int64_t> k(spec.known.begin(), spec.known.end());
    if (!composed)
      for (auto o : spec.open) EXPECT_FALSE(k.contains(o)) << line;
    ++checked;
  }
  EXPECT_EQ(checked, static_cast<int>(split_registry().size()));
}

TEST(Registry, KnownValues) {
  auto f1 = registry_lookup(Protocol::F1, "mnist", 0).known;
  EXPECT_EQ(std::set<int64_t>(f1.begin(), f1.end()), (std::set<int64_t>{2, 3, 4, 6, 7, 8}));
  auto au = registry_lookup(Protocol::Auroc, "mnist", 0).known;
  EXPECT_EQ(std::set<int64_t>(au.begin(), au.end()), (std::set<int64_t>{0, 1, 2, 4, 5, 9}));
  EXPECT_EQ(registry_lookup(Protocol::F1, "cifar+10", 0).open,
            (std::vector<int64_t>{27, 46, 98, 38, 72, 31, 36, 66, 3, 97}));
  const auto& tiny = registry_lookup(Protocol::Auroc, "tiny-imagenet", 0).known;
  ASSERT_EQ(tiny.size(), 20u);
  EXPECT_EQ(std::vector<int64_t>(tiny.begin(), tiny.begin() + 4), (std::vector<int64_t>{2, 3, 13, 30}));
}

TEST(Registry, MissingEntryIsNotFound) {
  try {
    registry_lookup(Protocol::F1, "mnist", 9);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotFound);
  }
  EXPECT_THROW(registry_lookup(Protocol::Auroc, "imagenet", 0), Error);
}

// --- splits -------------------------------------------------------------------------------

TEST(BuildSplit, RemapsAscendingAndKeepsSetsDisjoint) {
  auto train = synthetic(10, 6);
  auto test = synthetic(10, 4, 1000);
  SplitSpec spec{Protocol::Auroc, "synthetic", 0, {9, 2, 5}, {0, 1, 3, 4, 6, 7, 8}};
  auto s = build_split(train, test, spec);
  EXPECT_EQ(s.known, (std::vector<int64_t>{2, 5, 9}));
  EXPECT_EQ(s.closed_train.size(), 18);
  EXPECT_EQ(s.closed_test.size(), 12);
  EXPECT_EQ(s.open_test.size(), 28);
  EXPECT_EQ(label_set(s.closed_train.labels), (std::set<int64_t>{0, 1, 2}));

  // Remapping is the bijection 2->0, 5->1, 9->2: check via the traced rows.
  auto rows = s.closed_train.source_index;
  for (int64_t i = 0; i < s.closed_train.size(); ++i) {
    const auto original = train.labels[rows[i].item<int64_t>()].item<int64_t>();
    EXPECT_EQ(s.known[static_cast<size_t>(s.closed_train.labels[i].item<int64_t>())], original);
  }
  EXPECT_EQ(label_set(s.open_test.labels), (std::set<int64_t>{0, 1, 3, 4, 6, 7, 8}));
  auto closed_ids = label_set(s.closed_test.source_index);
  for (auto id : label_set(s.open_test.source_index)) EXPECT_FALSE(closed_ids.contains(id));
}

TEST(BuildSplit, AllKnownGivesEmptyOpenSet) {
  auto d = synthetic(4, 3);
  SplitSpec spec{Protocol::Auroc, "synthetic", 0, {0, 1, 2, 3}, {}};
  auto s = build_split(d, d, spec);
  EXPECT_EQ(s.open_test.size(), 0);
  EXPECT_EQ(s.closed_test.size(), 12);
}

TEST(BuildSplit, RejectsCollisionsAndMissingClasses) {
  auto d = synthetic(4, 3);
  EXPECT_THROW(build_split(d, d, SplitSpec{Protocol::Auroc, "s", 0, {0, 1}, {1, 2}}), Error);
  EXPECT_THROW(build_split(d, d, SplitSpec{Protocol::Auroc, "s", 0, {0, 7}, {1}}), Error);
  EXPECT_THROW(build_split(d, d, SplitSpec{Protocol::Auroc, "s", 0, {}, {1}}), Error);
}

TEST(BuildSplit, ComposedOpenSource) {
  auto closed = synthetic(10, 2);
  auto open = synthetic(100, 1, 5000);
  SplitSpec spec{Protocol::F1, "cifar+10", 0, {0, 1, 8, 9}, {27, 46, 98}};
  auto s = build_split(closed, closed, spec, &open);
  EXPECT_EQ(s.open_test.size(), 3);
  EXPECT_EQ(label_set(s.open_test.labels), (std::set<int64_t>{27, 46, 98}));
}

TEST(BuildSplit, MnistAurocTrialZero) {
  ImageSpec spec;
  auto train = load_mnist(OSR_TEST_DATA_DIR "/mnist", Part::Train, spec);
  auto test = load_mnist(OSR_TEST_DATA_DIR "/mnist", Part::Test, spec);
  auto s = build_split(train, test, registry_lookup(Protocol::Auroc, "mnist", 0));
  EXPECT_EQ(s.known, (std::vector<int64_t>{0, 1, 2, 4, 5, 9}));
  EXPECT_EQ(label_set(s.open_test.labels), (std::set<int64_t>{3, 6, 7, 8}));
  EXPECT_EQ(s.closed_train.size() + s.closed_test.size() + s.open_test.size() +
                (train.labels.eq(3) | train.labels.eq(6) | train.labels.eq(7) | train.labels.eq(8)).sum().item<int64_t>(),
            10000);
}

TEST(CapPerClass, KeepsFirstSamples) {
  auto d = synthetic(3, 5);
  auto c = cap_per_class(d, 2);
  EXPECT_EQ(c.size(), 6);
  EXPECT_EQ(c.source_index[0].item<int64_t>(), 0);
  for (int64_t k = 0; k < 3; ++k) EXPECT_EQ(c.labels.eq(k).sum().item<int64_t>(), 2);
}
