#include "datasets/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace emseg::data {

namespace fs = std::filesystem;

std::string to_string(DatasetId id) {
    switch (id) {
        case DatasetId::kLucchi: return "lucchi";
        case DatasetId::kVnc: return "vnc";
        case DatasetId::kOther: return "other";
    }
    return "other";
}

std::string to_string(Layout layout) {
    return layout == Layout::kLucchiSplitDirs ? "lucchi_split_dirs" : "vnc_stacks";
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

std::vector<fs::path> list_slices(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset layout: missing directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    if (files.empty()) throw DataError("dataset layout: no image files in " + dir.string());
    return files;
}

ImageF32 read_image_f32(const fs::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot decode image " + path.string());
    if (raw.channels() > 1) {
        cv::Mat gray;
        cv::cvtColor(raw, gray, raw.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
        raw = gray;
    }
    float scale;
    switch (raw.depth()) {
        case CV_8U: scale = 1.f / 255.f; break;
        case CV_16U: scale = 1.f / 65535.f; break;
        default: throw DataError("unsupported pixel depth in " + path.string() + " (expected 8- or 16-bit)");
    }
    cv::Mat f32;
    raw.convertTo(f32, CV_32F, scale);

    ImageF32 img;
    img.height = f32.rows;
    img.width = f32.cols;
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(f32.rows) * f32.cols);
    for (int y = 0; y < f32.rows; ++y) {
        const float* row = f32.ptr<float>(y);
        std::copy(row, row + f32.cols, img.pixels.begin() + static_cast<std::size_t>(y) * f32.cols);
    }
    return img;
}

std::vector<std::uint16_t> read_mask_raw(const fs::path& path, int& h, int& w) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw DataError("cannot decode mask " + path.string());
    if (raw.channels() > 1) {
        std::vector<cv::Mat> planes;
        cv::split(raw, planes);
        raw = planes[0];
    }
    if (raw.depth() != CV_8U && raw.depth() != CV_16U)
        throw DataError("unsupported mask depth in " + path.string());
    h = raw.rows;
    w = raw.cols;
    std::vector<std::uint16_t> out(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y) * w + x] =
                raw.depth() == CV_8U ? raw.at<std::uint8_t>(y, x) : raw.at<std::uint16_t>(y, x);
    return out;
}

std::vector<Sample> load_pairs(const fs::path& img_dir, const fs::path& mask_dir, const DatasetSpec& spec,
                               int threshold) {
    const auto imgs = list_slices(img_dir);
    std::map<std::string, fs::path> masks;
    for (const auto& p : list_slices(mask_dir)) masks[p.stem().string()] = p;

    std::vector<Sample> out;
    out.reserve(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        const auto it = masks.find(imgs[i].stem().string());
        if (it == masks.end())
            throw DataError("dataset layout: missing mask for slice " + imgs[i].filename().string() + " in " +
                            mask_dir.string());
        Sample s;
        s.image = read_image_f32(imgs[i]);
        int mh = 0, mw = 0;
        const auto raw = read_mask_raw(it->second, mh, mw);
        if (mh != s.image.height || mw != s.image.width)
            throw DataError("integrity: image/mask shape mismatch for slice " + imgs[i].filename().string());
        MaskU8 m;
        m.height = mh;
        m.width = mw;
        binarize_mask(m.values, raw, threshold);
        s.mask = std::move(m);
        s.dataset_id = spec.id;
        s.label = spec.label.empty() ? to_string(spec.id) : spec.label;
        s.slice_index = static_cast<int>(i);
        out.push_back(std::move(s));
    }
    if (masks.size() != imgs.size())
        throw DataError("dataset layout: " + std::to_string(masks.size()) + " masks for " +
                        std::to_string(imgs.size()) + " images in " + mask_dir.string());
    return out;
}

std::vector<Sample> load_unlabelled(const fs::path& img_dir, const DatasetSpec& spec) {
    std::vector<Sample> out;
    const auto imgs = list_slices(img_dir);
    out.reserve(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        Sample s;
        s.image = read_image_f32(imgs[i]);
        s.dataset_id = spec.id;
        s.label = spec.label.empty() ? to_string(spec.id) : spec.label;
        s.slice_index = static_cast<int>(i);
        out.push_back(std::move(s));
    }
    return out;
}

void check_count(const char* what, std::size_t got, int expected, const DatasetSpec& spec) {
    if (expected > 0 && static_cast<int>(got) != expected)
        throw DataError(std::string("dataset ") + to_string(spec.layout) + ": expected " +
                        std::to_string(expected) + " " + what + " slices, found " + std::to_string(got) +
                        " under " + spec.root.string());
}

} // namespace

void binarize_mask(std::vector<std::uint8_t>& out, const std::vector<std::uint16_t>& raw, int threshold) {
    out.resize(raw.size());
    bool already_binary = true;
    for (std::uint16_t v : raw)
        if (v > 1) {
            already_binary = false;
            break;
        }
    if (already_binary) {
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<std::uint8_t>(raw[i]);
        return;
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = raw[i] >= threshold ? std::uint8_t{1} : std::uint8_t{0};
}

LoadedDataset load_dataset(const DatasetSpec& spec, int binarize_threshold) {
    if (!fs::exists(spec.root)) throw DataError("dataset root does not exist: " + spec.root.string());

    LoadedDataset ds;
    if (spec.layout == Layout::kLucchiSplitDirs) {
        ds.train = load_pairs(spec.root / "train" / "img", spec.root / "train" / "mask", spec, binarize_threshold);
        ds.test = load_pairs(spec.root / "test" / "img", spec.root / "test" / "mask", spec, binarize_threshold);
        check_count("train", ds.train.size(), spec.expected_train_count, spec);
        check_count("test", ds.test.size(), spec.expected_test_count, spec);
    } else {
        auto labelled =
            load_pairs(spec.root / "stack1" / "img", spec.root / "stack1" / "mask", spec, binarize_threshold);
        int n_train = spec.expected_train_count;
        if (n_train == 0) {
            // Reserve the trailing 3 slices of the labelled stack for testing.
            if (labelled.size() <= 3)
                throw DataError("vnc_stacks: need more than 3 labelled slices or explicit expected counts");
            n_train = static_cast<int>(labelled.size()) - 3;
        }
        if (n_train <= 0 || n_train >= static_cast<int>(labelled.size()))
            throw DataError("vnc_stacks: expected_train_count " + std::to_string(n_train) +
                            " incompatible with " + std::to_string(labelled.size()) + " labelled slices");
        check_count("labelled", labelled.size(),
                    spec.expected_test_count > 0 ? n_train + spec.expected_test_count : 0, spec);
        ds.test.assign(std::make_move_iterator(labelled.begin() + n_train),
                       std::make_move_iterator(labelled.end()));
        labelled.resize(static_cast<std::size_t>(n_train));
        ds.train = std::move(labelled);
        if (fs::is_directory(spec.root / "stack2" / "img"))
            ds.unlabelled = load_unlabelled(spec.root / "stack2" / "img", spec);
    }
    return ds;
}

std::vector<Sample> load_split(const DatasetSpec& spec, SplitKind split, int binarize_threshold) {
    LoadedDataset ds = load_dataset(spec, binarize_threshold);
    switch (split) {
        case SplitKind::kTrain: return std::move(ds.train);
        case SplitKind::kTest: return std::move(ds.test);
        case SplitKind::kUnlabelled: return std::move(ds.unlabelled);
    }
    return {};
}

long long round_half_even(double v) {
    const double fl = std::floor(v);
    const double frac = v - fl;
    const auto f = static_cast<long long>(fl);
    if (frac > 0.5) return f + 1;
    if (frac < 0.5) return f;
    return (f % 2 == 0) ? f : f + 1;
}

SplitIndices make_split_indices(std::size_t n, const SplitConfig& cfg) {
    if (n < 2) throw DataError("split: need at least 2 samples, got " + std::to_string(n));
    if (cfg.validation_fraction <= 0.0 || cfg.validation_fraction >= 1.0)
        throw ConfigError("split: validation_fraction must be in (0,1)");

    const auto n_val = static_cast<std::size_t>(
        std::max(1LL, round_half_even(cfg.validation_fraction * static_cast<double>(n))));

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    auto rng = make_rng(cfg.seed, "train_val_split");
    std::shuffle(idx.begin(), idx.end(), rng);

    SplitIndices out;
    out.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.train.begin(), out.train.end());
    return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> make_split(std::vector<Sample> samples,
                                                               const SplitConfig& cfg) {
    const SplitIndices idx = make_split_indices(samples.size(), cfg);
    std::vector<Sample> train, val;
    train.reserve(idx.train.size());
    val.reserve(idx.val.size());
    for (std::size_t i : idx.train) train.push_back(std::move(samples[i]));
    for (std::size_t i : idx.val) val.push_back(std::move(samples[i]));
    return {std::move(train), std::move(val)};
}

std::pair<int, int> resized_dims(int height, int width, const ResizePolicy& policy) {
    if (policy.patch_size < 1) throw ConfigError("resize: patch_size must be >= 1");
    if (height < 1 || width < 1) throw DataError("resize: empty image");
    const int longest = std::max(height, width);
    int target = policy.target_longest_edge;
    if (target == 0) target = (longest / policy.patch_size) * policy.patch_size;
    if (target < policy.patch_size)
        throw ConfigError("resize: target_longest_edge " + std::to_string(target) +
                          " is smaller than one patch (" + std::to_string(policy.patch_size) + ")");

    const double scale = static_cast<double>(target) / longest;
    const auto snap = [&](double side) {
        const long long patches = std::max(1LL, round_half_even(side / policy.patch_size));
        return static_cast<int>(patches * policy.patch_size);
    };
    return {snap(height * scale), snap(width * scale)};
}

namespace {

ImageF32 resize_image_bilinear(const ImageF32& img, int oh, int ow) {
    ImageF32 out;
    out.height = oh;
    out.width = ow;
    out.channels = img.channels;
    out.pixels.resize(static_cast<std::size_t>(img.channels) * oh * ow);
    for (int c = 0; c < img.channels; ++c) {
        // wrap plane without copying
        cv::Mat src(img.height, img.width, CV_32F,
                    const_cast<float*>(img.pixels.data() + static_cast<std::size_t>(c) * img.height * img.width));
        cv::Mat dst(oh, ow, CV_32F, out.pixels.data() + static_cast<std::size_t>(c) * oh * ow);
        cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> resize_labels_nearest(const std::vector<std::uint8_t>& labels, int h, int w,
                                                int out_h, int out_w) {
    if (h == out_h && w == out_w) return labels;
    cv::Mat src(h, w, CV_8U, const_cast<std::uint8_t*>(labels.data()));
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_NEAREST);
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y)
        std::copy(dst.ptr<std::uint8_t>(y), dst.ptr<std::uint8_t>(y) + out_w,
                  out.begin() + static_cast<std::size_t>(y) * out_w);
    return out;
}

Sample resize_to_patch_grid(const Sample& sample, const ResizePolicy& policy) {
    const auto [oh, ow] = resized_dims(sample.image.height, sample.image.width, policy);
    Sample out;
    out.dataset_id = sample.dataset_id;
    out.label = sample.label;
    out.slice_index = sample.slice_index;
    if (oh == sample.image.height && ow == sample.image.width) {
        out.image = sample.image;
        out.mask = sample.mask;
        return out;
    }
    out.image = resize_image_bilinear(sample.image, oh, ow);
    if (sample.mask) {
        MaskU8 m;
        m.height = oh;
        m.width = ow;
        m.values = resize_labels_nearest(sample.mask->values, sample.mask->height, sample.mask->width, oh, ow);
        out.mask = std::move(m);
    }
    return out;
}

Sample normalize(const Sample& sample) {
    Sample out;
    out.dataset_id = sample.dataset_id;
    out.label = sample.label;
    out.slice_index = sample.slice_index;
    out.mask = sample.mask;

    const ImageF32& in = sample.image;
    ImageF32 img;
    img.height = in.height;
    img.width = in.width;
    img.channels = 3;
    const std::size_t plane = static_cast<std::size_t>(in.height) * in.width;
    img.pixels.resize(3 * plane);
    for (int c = 0; c < 3; ++c) {
        const float* src = in.pixels.data() + (in.channels == 3 ? c * plane : 0);
        float* dst = img.pixels.data() + c * plane;
        const float mean = kImagenetMean[static_cast<std::size_t>(c)];
        const float inv_std = 1.f / kImagenetStd[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - mean) * inv_std;
    }
    out.image = std::move(img);
    return out;
}

nn::Tensor image_tensor(const ImageF32& image) {
    nn::Tensor t({3, image.height, image.width});
    const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
    for (int c = 0; c < 3; ++c) {
        const float* src = image.pixels.data() + (image.channels == 3 ? c * plane : 0);
        std::copy(src, src + plane, t.data() + c * plane);
    }
    return t;
}

} // namespace emseg::data
