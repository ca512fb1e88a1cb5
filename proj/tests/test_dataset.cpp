#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "comatch/dataset.hpp"
#include "comatch/rng.hpp"

using namespace comatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("comatch_test_" +
            std::to_string(rng::Stream(static_cast<uint64_t>(::getpid()), rng::StreamTag::test)
                               .next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// Writes a CIFAR-10-format batch file with deterministic fake records.
void write_cifar_batch(const fs::path& file, int records, uint64_t seed, bool truncate = false) {
  std::ofstream out(file, std::ios::binary);
  rng::Stream s(seed, rng::StreamTag::test);
  std::vector<unsigned char> rec(3073);
  for (int r = 0; r < records; ++r) {
    rec[0] = static_cast<unsigned char>(s.uniform_int(10));
    for (int i = 1; i < 3073; ++i) {
      rec[static_cast<size_t>(i)] = static_cast<unsigned char>(s.uniform_int(256));
    }
    size_t len = rec.size();
    if (truncate && r == records - 1) len /= 2;
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(len));
  }
}

}  // namespace

TEST_CASE("synth_blobs is deterministic and sized per request") {
  LabeledDataset a = synth_blobs(4, 100, 8, 42);
  LabeledDataset b = synth_blobs(4, 100, 8, 42);
  CHECK(a.size() == 400);
  CHECK(a.class_count() == 4);
  CHECK(a.images().data == b.images().data);
  CHECK(a.noisy_labels() == b.noisy_labels());

  LabeledDataset c = synth_blobs(4, 100, 8, 43);
  CHECK(a.images().data != c.images().data);
}

TEST_CASE("synth_blobs pixel values stay in [0,1]") {
  LabeledDataset d = synth_blobs(3, 20, 6, 7);
  for (float v : d.images().data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("dataset flat binary round-trips") {
  TempDir tmp;
  LabeledDataset d = synth_blobs(4, 25, 8, 11);
  const fs::path file = tmp.path / "blobs.ds";
  save_dataset(d, file);
  LabeledDataset r = load_dataset(file);
  CHECK(r.size() == d.size());
  CHECK(r.class_count() == d.class_count());
  CHECK(r.split() == d.split());
  CHECK(r.corrupted() == d.corrupted());
  CHECK(r.images().data == d.images().data);
  CHECK(r.noisy_labels() == d.noisy_labels());
  CHECK(r.clean_labels_for_metrics() == d.clean_labels_for_metrics());
}

TEST_CASE("single-image fixture round-trips") {
  TempDir tmp;
  LabeledDataset d = synth_blobs(2, 2, 5, 3);
  Tensor<float> img = d.image(1);
  const fs::path file = tmp.path / "img.ds";
  save_image(img, file);
  Tensor<float> r = load_image(file);
  CHECK(r.shape == img.shape);
  CHECK(r.data == img.data);
}

TEST_CASE("load_dataset rejects corrupt files") {
  TempDir tmp;
  const fs::path file = tmp.path / "bad.ds";
  std::ofstream(file, std::ios::binary) << "not a dataset";
  CHECK_THROWS_AS(load_dataset(file), FormatError);
  CHECK_THROWS_AS(load_dataset(tmp.path / "missing.ds"), IoError);
}

TEST_CASE("load_cifar10 reads standard batches and scales to [0,1]") {
  TempDir tmp;
  for (int b = 1; b <= 5; ++b) {
    write_cifar_batch(tmp.path / ("data_batch_" + std::to_string(b) + ".bin"), 10000,
                      static_cast<uint64_t>(b));
  }
  write_cifar_batch(tmp.path / "test_batch.bin", 10000, 99);

  auto [train, test] = load_cifar10(tmp.path);
  CHECK(train.size() == 50000);
  CHECK(test.size() == 10000);
  CHECK(train.class_count() == 10);
  CHECK(train.channels() == 3);
  CHECK(train.height() == 32);
  CHECK(train.width() == 32);
  CHECK(train.split() == Split::train);
  CHECK(test.split() == Split::test);
  float lo = 1.0f, hi = 0.0f;
  for (int i = 0; i < 3072; ++i) {
    lo = std::min(lo, train.images().data[static_cast<size_t>(i)]);
    hi = std::max(hi, train.images().data[static_cast<size_t>(i)]);
  }
  CHECK(lo >= 0.0f);
  CHECK(hi <= 1.0f);

  SECTION("record round-trip reproduces the original bytes") {
    std::ifstream in(tmp.path / "data_batch_1.bin", std::ios::binary);
    std::vector<unsigned char> original(3073);
    in.seekg(3073 * 17);
    in.read(reinterpret_cast<char*>(original.data()), 3073);
    std::vector<unsigned char> rebuilt = cifar10_record(train, 17);
    CHECK(rebuilt == original);
  }
}

TEST_CASE("load_cifar10 reports missing and truncated files") {
  TempDir tmp;
  try {
    load_cifar10(tmp.path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("data_batch_1.bin") != std::string::npos);
  }

  for (int b = 1; b <= 5; ++b) {
    write_cifar_batch(tmp.path / ("data_batch_" + std::to_string(b) + ".bin"), 10000,
                      static_cast<uint64_t>(b), /*truncate=*/b == 3);
  }
  write_cifar_batch(tmp.path / "test_batch.bin", 10000, 99);
  try {
    load_cifar10(tmp.path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("data_batch_3.bin") != std::string::npos);
  }
}

TEST_CASE("load_cifar10 rejects out-of-range label bytes") {
  TempDir tmp;
  for (int b = 1; b <= 5; ++b) {
    write_cifar_batch(tmp.path / ("data_batch_" + std::to_string(b) + ".bin"), 10000,
                      static_cast<uint64_t>(b));
  }
  write_cifar_batch(tmp.path / "test_batch.bin", 10000, 99);
  // Stamp an invalid label into the middle of batch 2.
  std::fstream f(tmp.path / "data_batch_2.bin", std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(3073 * 1234);
  char bad = 11;
  f.write(&bad, 1);
  f.close();
  CHECK_THROWS_AS(load_cifar10(tmp.path), FormatError);
}

TEST_CASE("from_parts validates labels against class_count") {
  Tensor<float> images({2, 1, 2, 2});
  CHECK_THROWS_AS(LabeledDataset::from_parts(images, {0, 5}, 4, Split::train), ValidationError);
}
