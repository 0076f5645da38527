#include <doctest.h>

#include <random>
#include <vector>

#include "core/errors.hpp"
#include "metrics/iou.hpp"

using namespace emseg::metrics;

namespace {

// One-shot oracle over concatenated pixels.
double brute_force_iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += (pred[i] > 0) && (gt[i] > 0);
        uni += (pred[i] > 0) || (gt[i] > 0);
    }
    return static_cast<double>(inter) / (static_cast<double>(uni) + kIouEpsilon);
}

} // namespace

TEST_CASE("update counts intersections and unions") {
    IouAccumulator acc("x");
    std::vector<std::uint8_t> g(200, 0), p(200, 0);
    for (int i = 0; i < 100; ++i) g[static_cast<std::size_t>(i)] = 1;      // gt: [0,100)
    for (int i = 50; i < 150; ++i) p[static_cast<std::size_t>(i)] = 1;     // pred: [50,150)
    acc.update(p, g);
    CHECK(acc.intersection_px() == 50);
    CHECK(acc.union_px() == 150);
    CHECK(acc.finalize() == doctest::Approx(50.0 / (150.0 + kIouEpsilon)));

    IouAccumulator perfect;
    perfect.update(g, g);
    CHECK(perfect.intersection_px() == 100);
    CHECK(perfect.union_px() == 100);

    IouAccumulator empty;
    std::vector<std::uint8_t> zeros(64, 0);
    empty.update(zeros, zeros);
    CHECK(empty.intersection_px() == 0);
    CHECK(empty.union_px() == 0);
    CHECK(empty.finalize() == 0.0);
}

TEST_CASE("update rejects mismatched raster sizes") {
    IouAccumulator acc;
    std::vector<std::uint8_t> a(10, 0), b(12, 0);
    CHECK_THROWS_AS(acc.update(a, b), emseg::ShapeError);
}

TEST_CASE("non-binary labels collapse to foreground") {
    IouAccumulator acc;
    std::vector<std::uint8_t> p{0, 3, 7, 0};
    std::vector<std::uint8_t> g{0, 1, 0, 2};
    acc.update(p, g);
    CHECK(acc.intersection_px() == 1);
    CHECK(acc.union_px() == 3);
}

TEST_CASE("streaming accumulation equals one-shot IoU over arbitrary chunks") {
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> len(1, 400);
    std::uniform_int_distribution<int> bit(0, 3);
    for (int it = 0; it < 100; ++it) {
        const int n = len(rng);
        std::vector<std::uint8_t> p(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = bit(rng) == 0 ? 1 : 0;
            g[static_cast<std::size_t>(i)] = bit(rng) == 0 ? 1 : 0;
        }
        IouAccumulator acc;
        std::size_t pos = 0;
        while (pos < p.size()) {
            const std::size_t chunk = std::min<std::size_t>(1 + rng() % 37, p.size() - pos);
            acc.update({p.data() + pos, chunk}, {g.data() + pos, chunk});
            pos += chunk;
        }
        CHECK(acc.finalize() == doctest::Approx(brute_force_iou(p, g)).epsilon(1e-12));
    }
}

TEST_CASE("merge is field-wise addition and order independent") {
    std::mt19937 rng(23);
    std::vector<std::uint8_t> p(512), g(512);
    for (auto& v : p) v = rng() % 2;
    for (auto& v : g) v = rng() % 2;

    IouAccumulator whole;
    whole.update(p, g);

    IouAccumulator a, b;
    a.update({p.data(), 200}, {g.data(), 200});
    b.update({p.data() + 200, 312}, {g.data() + 200, 312});

    IouAccumulator ab = a;
    ab.merge(b);
    IouAccumulator ba = b;
    ba.merge(a);
    CHECK(ab.intersection_px() == whole.intersection_px());
    CHECK(ab.union_px() == whole.union_px());
    CHECK(ba.intersection_px() == whole.intersection_px());
}

TEST_CASE("adding matched or disjoint images moves IoU monotonically") {
    std::vector<std::uint8_t> fg(100, 1), bg(100, 0);
    IouAccumulator acc;
    acc.update({fg.data(), 50}, {fg.data(), 50});  // 50/50
    acc.update({fg.data(), 40}, {bg.data(), 40});  // disjoint prediction
    const double after_bad = acc.finalize();
    CHECK(after_bad < 50.0 / (50.0 + kIouEpsilon));

    IouAccumulator acc2 = acc;
    acc2.update(fg, fg); // perfectly matching image
    CHECK(acc2.finalize() >= after_bad);
}

TEST_CASE("dataset-level IoU differs from mean of per-image IoUs") {
    // image 1: tiny perfect prediction; image 2: large disjoint prediction
    std::vector<std::uint8_t> p1{1}, g1{1};
    std::vector<std::uint8_t> p2(1000, 1), g2(1000, 0);

    IouAccumulator acc;
    acc.update(p1, g1);
    acc.update(p2, g2);
    const double dataset_level = acc.finalize();

    IouAccumulator i1, i2;
    i1.update(p1, g1);
    i2.update(p2, g2);
    const double mean_of_images = (i1.finalize() + i2.finalize()) / 2.0;

    CHECK(dataset_level == doctest::Approx(1.0 / (1001.0 + kIouEpsilon)));
    CHECK(mean_of_images == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::abs(dataset_level - mean_of_images) > 0.4);
}

TEST_CASE("macro average is the unweighted mean") {
    const std::vector<double> supp_f{0.007, 0.661};
    CHECK(macro_average(supp_f) == doctest::Approx(0.334).epsilon(1e-12));
    const std::vector<double> balanced{0.019, 0.732};
    CHECK(macro_average(balanced) == doctest::Approx(0.3755).epsilon(1e-12));
    const std::vector<double> single{0.42};
    CHECK(macro_average(single) == doctest::Approx(0.42));
    CHECK_THROWS(macro_average({}));
}
