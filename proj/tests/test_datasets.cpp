#include <doctest.h>

#include <filesystem>
#include <opencv2/imgcodecs.hpp>
#include <random>

#include "core/errors.hpp"
#include "datasets/datasets.hpp"
#include "datasets/synthetic.hpp"

using namespace emseg;
using namespace emseg::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("emseg_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Sample gray_sample(int h, int w, float value) {
    Sample s;
    s.image.height = h;
    s.image.width = w;
    s.image.channels = 1;
    s.image.pixels.assign(static_cast<std::size_t>(h) * w, value);
    return s;
}

} // namespace

TEST_CASE("binarize maps 128 to foreground and 127 to background") {
    std::vector<std::uint16_t> raw{0, 127, 128, 255};
    std::vector<std::uint8_t> out;
    binarize_mask(out, raw, 128);
    CHECK(out == std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("binarize keeps an all-zero mask and is idempotent") {
    std::vector<std::uint16_t> zeros(16, 0);
    std::vector<std::uint8_t> out;
    binarize_mask(out, zeros, 128);
    for (auto v : out) CHECK(v == 0);

    std::mt19937 rng(3);
    std::vector<std::uint16_t> raw(64);
    for (auto& v : raw) v = static_cast<std::uint16_t>(rng() % 256);
    std::vector<std::uint8_t> once;
    binarize_mask(once, raw, 128);
    std::vector<std::uint16_t> once16(once.begin(), once.end());
    std::vector<std::uint8_t> twice;
    binarize_mask(twice, once16, 128);
    CHECK(once == twice);
}

TEST_CASE("split sizes follow round-half-to-even with a floor of one") {
    SplitConfig cfg{0.10, 7};
    auto s17 = make_split_indices(17, cfg);
    CHECK(s17.train.size() == 15);
    CHECK(s17.val.size() == 2);

    auto s165 = make_split_indices(165, cfg);
    CHECK(s165.train.size() == 149);
    CHECK(s165.val.size() == 16);

    auto s2 = make_split_indices(2, cfg);
    CHECK(s2.val.size() == 1);

    CHECK_THROWS_AS(make_split_indices(1, cfg), DataError);
}

TEST_CASE("split is a deterministic partition") {
    SplitConfig cfg{0.10, 42};
    auto a = make_split_indices(50, cfg);
    auto b = make_split_indices(50, cfg);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);

    std::vector<bool> seen(50, false);
    for (auto i : a.train) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
    }
    for (auto i : a.val) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
    }
    for (bool s : seen) CHECK(s);

    auto c = make_split_indices(50, SplitConfig{0.10, 43});
    CHECK(a.val != c.val); // different seed should move the membership
}

TEST_CASE("resized_dims matches the snapping arithmetic") {
    CHECK(resized_dims(768, 1024, ResizePolicy{1024, 16}) == std::pair<int, int>{768, 1024});
    CHECK(resized_dims(768, 1024, ResizePolicy{1022, 14}) == std::pair<int, int>{770, 1022});
    CHECK(resized_dims(1024, 1024, ResizePolicy{1022, 14}) == std::pair<int, int>{1022, 1022});
    // native default: longest edge snapped down
    CHECK(resized_dims(768, 1024, ResizePolicy{0, 14}) == std::pair<int, int>{770, 1022});
    CHECK_THROWS_AS(resized_dims(64, 64, ResizePolicy{8, 14}), ConfigError);
}

TEST_CASE("resize output is always a patch multiple (property)") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> dim(32, 2048);
    for (int it = 0; it < 300; ++it) {
        const int h = dim(rng), w = dim(rng);
        const int patch = (it % 2) ? 14 : 16;
        ResizePolicy policy{0, patch};
        if (it % 3 == 0) policy.target_longest_edge = std::max(patch, dim(rng));
        const auto [oh, ow] = resized_dims(h, w, policy);
        CHECK(oh % patch == 0);
        CHECK(ow % patch == 0);
        CHECK(oh >= patch);
        CHECK(ow >= patch);
        // aspect-ratio distortion bounded by the snapping granularity
        const double native = static_cast<double>(h) / w;
        const double out = static_cast<double>(oh) / ow;
        const double bound = static_cast<double>(patch) / std::min(oh, ow) + 0.02;
        CHECK(std::abs(out / native - 1.0) <= 2.0 * bound);
    }
}

TEST_CASE("resize keeps mask binary and no-ops on already-snapped dims") {
    Sample s = gray_sample(56, 70, 0.5f);
    MaskU8 m;
    m.height = 56;
    m.width = 70;
    m.values.assign(56 * 70, 0);
    for (int i = 0; i < 35; ++i) m.values[static_cast<std::size_t>(i)] = 1;
    s.mask = m;

    const Sample same = resize_to_patch_grid(s, ResizePolicy{70, 14});
    CHECK(same.image.height == 56);
    CHECK(same.image.width == 70);
    CHECK(same.image.pixels == s.image.pixels);

    const Sample smaller = resize_to_patch_grid(s, ResizePolicy{42, 14});
    CHECK(smaller.image.height == 28);
    CHECK(smaller.image.width == 42);
    REQUIRE(smaller.mask.has_value());
    for (auto v : smaller.mask->values) CHECK((v == 0 || v == 1));
}

TEST_CASE("normalize applies the ImageNet constants per channel") {
    Sample s = gray_sample(2, 2, 0.485f);
    const Sample n = normalize(s);
    CHECK(n.image.channels == 3);
    CHECK(n.image.at(0, 0, 0) == doctest::Approx(0.f).epsilon(1e-6));

    Sample one = gray_sample(1, 1, 1.f);
    const Sample n1 = normalize(one);
    CHECK(n1.image.at(0, 0, 0) == doctest::Approx(2.2489f).epsilon(1e-4));

    // constant image at the per-channel means -> all-zero tensor
    Sample means = gray_sample(2, 2, 0.f);
    means.image.channels = 3;
    means.image.pixels.resize(3 * 4);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
            means.image.pixels[static_cast<std::size_t>(c) * 4 + i] = kImagenetMean[static_cast<std::size_t>(c)];
    const Sample nm = normalize(means);
    for (float v : nm.image.pixels) CHECK(v == doctest::Approx(0.f).epsilon(1e-6));
}

TEST_CASE("blob dataset loads with expected counts and binary masks") {
    const fs::path root = temp_dir("blobs");
    BlobDatasetSpec spec;
    spec.train_count = 6;
    spec.test_count = 3;
    spec.height = 64;
    spec.width = 64;
    spec.seed = 5;
    generate_blob_dataset(root, spec);

    DatasetSpec ds;
    ds.root = root;
    ds.layout = Layout::kLucchiSplitDirs;
    ds.expected_train_count = 6;
    ds.expected_test_count = 3;
    ds.id = DatasetId::kOther;
    ds.label = "blobs";

    const LoadedDataset loaded = load_dataset(ds);
    CHECK(loaded.train.size() == 6);
    CHECK(loaded.test.size() == 3);
    for (const auto& s : loaded.train) {
        REQUIRE(s.mask.has_value());
        CHECK(s.image.height == 64);
        CHECK(s.image.width == 64);
        for (float v : s.image.pixels) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
        for (auto v : s.mask->values) CHECK((v == 0 || v == 1));
    }
    CHECK(loaded.train[0].slice_index == 0);
    CHECK(loaded.train[5].slice_index == 5);

    // count validation failure
    ds.expected_train_count = 7;
    CHECK_THROWS_AS(load_dataset(ds), DataError);

    // loading twice is bit-identical
    ds.expected_train_count = 6;
    const LoadedDataset again = load_dataset(ds);
    CHECK(again.train[2].image.pixels == loaded.train[2].image.pixels);
    CHECK(again.train[2].mask->values == loaded.train[2].mask->values);

    fs::remove_all(root);
}

TEST_CASE("vnc layout splits labelled stack and picks up unlabelled stack2") {
    const fs::path root = temp_dir("vnc");
    // write stack1 with 8 labelled slices + stack2 with 4 raw slices
    BlobDatasetSpec spec;
    spec.train_count = 8;
    spec.test_count = 4;
    spec.height = 32;
    spec.width = 48;
    spec.seed = 9;
    generate_blob_dataset(root / "tmp", spec);
    fs::create_directories(root / "stack1");
    fs::create_directories(root / "stack2");
    fs::rename(root / "tmp" / "train" / "img", root / "stack1" / "img");
    fs::rename(root / "tmp" / "train" / "mask", root / "stack1" / "mask");
    fs::rename(root / "tmp" / "test" / "img", root / "stack2" / "img");
    fs::remove_all(root / "tmp");

    DatasetSpec ds;
    ds.root = root;
    ds.layout = Layout::kVncStacks;
    ds.expected_train_count = 5;
    ds.expected_test_count = 3;
    ds.id = DatasetId::kVnc;

    const LoadedDataset loaded = load_dataset(ds);
    CHECK(loaded.train.size() == 5);
    CHECK(loaded.test.size() == 3);
    CHECK(loaded.unlabelled.size() == 4);
    CHECK_FALSE(loaded.unlabelled[0].mask.has_value());
    CHECK(loaded.train[0].label == "vnc");

    // default split reserves the trailing 3 slices
    ds.expected_train_count = 0;
    ds.expected_test_count = 0;
    const LoadedDataset defaulted = load_dataset(ds);
    CHECK(defaulted.train.size() == 5);
    CHECK(defaulted.test.size() == 3);

    fs::remove_all(root);
}

TEST_CASE("missing mask names the offending slice") {
    const fs::path root = temp_dir("missing");
    BlobDatasetSpec spec;
    spec.train_count = 3;
    spec.test_count = 1;
    spec.height = 32;
    spec.width = 32;
    generate_blob_dataset(root, spec);
    fs::remove(root / "train" / "mask" / "001.png");

    DatasetSpec ds;
    ds.root = root;
    ds.layout = Layout::kLucchiSplitDirs;
    try {
        load_dataset(ds);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("001") != std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("shape mismatch between image and mask is an integrity error") {
    const fs::path root = temp_dir("shape");
    fs::create_directories(root / "train" / "img");
    fs::create_directories(root / "train" / "mask");
    fs::create_directories(root / "test" / "img");
    fs::create_directories(root / "test" / "mask");
    cv::Mat img(16, 16, CV_8U, cv::Scalar(100));
    cv::Mat bad(8, 16, CV_8U, cv::Scalar(255));
    cv::imwrite((root / "train" / "img" / "0.png").string(), img);
    cv::imwrite((root / "train" / "mask" / "0.png").string(), bad);
    cv::imwrite((root / "test" / "img" / "0.png").string(), img);
    cv::imwrite((root / "test" / "mask" / "0.png").string(), img);

    DatasetSpec ds;
    ds.root = root;
    ds.layout = Layout::kLucchiSplitDirs;
    CHECK_THROWS_AS(load_dataset(ds), DataError);
    fs::remove_all(root);
}

TEST_CASE("16-bit images scale by the dtype maximum") {
    const fs::path root = temp_dir("depth16");
    fs::create_directories(root);
    cv::Mat img16(4, 4, CV_16U, cv::Scalar(65535));
    cv::imwrite((root / "full.png").string(), img16);

    // loaded through the dataset path via a minimal layout
    fs::create_directories(root / "train" / "img");
    fs::create_directories(root / "train" / "mask");
    fs::create_directories(root / "test" / "img");
    fs::create_directories(root / "test" / "mask");
    cv::imwrite((root / "train" / "img" / "0.png").string(), img16);
    cv::Mat m(4, 4, CV_8U, cv::Scalar(200));
    cv::imwrite((root / "train" / "mask" / "0.png").string(), m);
    cv::imwrite((root / "test" / "img" / "0.png").string(), img16);
    cv::imwrite((root / "test" / "mask" / "0.png").string(), m);

    DatasetSpec ds;
    ds.root = root;
    ds.layout = Layout::kLucchiSplitDirs;
    const LoadedDataset loaded = load_dataset(ds);
    CHECK(loaded.train[0].image.pixels[0] == doctest::Approx(1.f));
    CHECK(loaded.train[0].mask->values[0] == 1);
    fs::remove_all(root);
}
