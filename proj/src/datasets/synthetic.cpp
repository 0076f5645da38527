#include "datasets/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace emseg::data {

namespace fs = std::filesystem;

namespace {

void render_slice(cv::Mat& image, cv::Mat& mask, std::mt19937_64& rng, const BlobDatasetSpec& spec) {
    const bool bright = spec.style != 0;
    const float bg = bright ? 0.55f : 0.25f;
    const float fg = bright ? 0.95f : 0.75f;
    const float noise_sigma = bright ? 0.03f : 0.05f;

    image.setTo(bg);
    mask.setTo(0);

    std::uniform_int_distribution<int> blob_count(1, 3);
    std::uniform_real_distribution<float> unit(0.f, 1.f);
    std::normal_distribution<float> noise(0.f, noise_sigma);

    const int n = blob_count(rng);
    const float base = static_cast<float>(std::min(spec.height, spec.width));
    for (int i = 0; i < n; ++i) {
        const int cx = static_cast<int>((0.25f + 0.5f * unit(rng)) * spec.width);
        const int cy = static_cast<int>((0.25f + 0.5f * unit(rng)) * spec.height);
        const int ax = static_cast<int>((0.18f + 0.14f * unit(rng)) * base);
        const int ay = static_cast<int>((0.18f + 0.14f * unit(rng)) * base);
        const double angle = 180.0 * unit(rng);
        cv::ellipse(image, cv::Point(cx, cy), cv::Size(ax, ay), angle, 0, 360, cv::Scalar(fg), cv::FILLED);
        cv::ellipse(mask, cv::Point(cx, cy), cv::Size(ax, ay), angle, 0, 360, cv::Scalar(255), cv::FILLED);
    }

    cv::GaussianBlur(image, image, cv::Size(0, 0), 1.2);
    for (int y = 0; y < image.rows; ++y) {
        float* row = image.ptr<float>(y);
        for (int x = 0; x < image.cols; ++x) row[x] = std::clamp(row[x] + noise(rng), 0.f, 1.f);
    }
}

void write_split(const fs::path& dir, int count, std::mt19937_64& rng, const BlobDatasetSpec& spec) {
    fs::create_directories(dir / "img");
    fs::create_directories(dir / "mask");
    cv::Mat image(spec.height, spec.width, CV_32F);
    cv::Mat mask(spec.height, spec.width, CV_8U);
    for (int i = 0; i < count; ++i) {
        render_slice(image, mask, rng, spec);
        cv::Mat image_u8;
        image.convertTo(image_u8, CV_8U, 255.0);
        char name[16];
        std::snprintf(name, sizeof(name), "%03d.png", i);
        if (!cv::imwrite((dir / "img" / name).string(), image_u8) ||
            !cv::imwrite((dir / "mask" / name).string(), mask))
            throw IoError("synthetic: failed to write " + (dir / name).string());
    }
}

} // namespace

void generate_blob_dataset(const fs::path& root, const BlobDatasetSpec& spec) {
    if (spec.train_count < 2 || spec.test_count < 1)
        throw ConfigError("synthetic: need at least 2 train and 1 test slices");
    auto rng = make_rng(spec.seed, spec.style == 0 ? "blobs_a" : "blobs_b");
    write_split(root / "train", spec.train_count, rng, spec);
    write_split(root / "test", spec.test_count, rng, spec);
}

} // namespace emseg::data
