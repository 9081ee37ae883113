#include <doctest.h>

#include <vmct/metrics.hpp>
#include <vmct/rng.hpp>

#include <algorithm>
#include <cmath>

using namespace vmct;

namespace {

// Deterministic 32x32 pair with integer-derived values; the frozen SSIM
// references below were computed for exactly these pixels with two
// independent implementations (a published gaussian-window SSIM and a
// hand-rolled separable-filter one), which agreed to 1e-15:
//   ssim(x, y)      = 0.9781114966467721
//   ssim(x, 1 - x)  = -0.9812146274252943
ImageF pattern_x() {
    ImageF img(32, 32);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.v[i] = static_cast<float>(static_cast<double>((i * 37) % 97) / 97.0);
    return img;
}

ImageF pattern_y() {
    ImageF img(32, 32);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double xd = static_cast<double>((i * 37) % 97) / 97.0;
        const double pert = 0.1 * (static_cast<double>((i * 17) % 13) - 6.0) / 6.0;
        img.v[i] = std::clamp(static_cast<float>(xd + pert), 0.0f, 1.0f);
    }
    return img;
}

}  // namespace

TEST_CASE("mae_hu / rmse_hu: hand-checked masked values") {
    ImageF pred(2, 2), target(2, 2);
    pred.v = {10.0f, 20.0f, 30.0f, 40.0f};
    target.v = {12.0f, 17.0f, 30.0f, 100.0f};
    MaskF mask(2, 2);
    mask.set(0, 0, true);
    mask.set(0, 1, true);
    mask.set(1, 0, true);  // excludes the 60 HU outlier at (1,1)

    CHECK(mae_hu(pred, target, mask) == doctest::Approx((2.0 + 3.0 + 0.0) / 3.0).epsilon(1e-12));
    CHECK(rmse_hu(pred, target, mask) ==
          doctest::Approx(std::sqrt((4.0 + 9.0 + 0.0) / 3.0)).epsilon(1e-12));

    MaskF all(2, 2, true);
    CHECK(mae_hu(pred, target, all) == doctest::Approx((2 + 3 + 0 + 60) / 4.0).epsilon(1e-12));
}

TEST_CASE("mae <= rmse on random data; equality for constant error") {
    Rng rng(21);
    ImageF a(16, 16), b(16, 16);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.v[i] = static_cast<float>(rng.uniform(-1000.0, 2000.0));
        b.v[i] = static_cast<float>(rng.uniform(-1000.0, 2000.0));
    }
    MaskF mask(16, 16, true);
    CHECK(mae_hu(a, b, mask) <= rmse_hu(a, b, mask));

    ImageF c = a;
    for (auto& v : c.v) v += 7.0f;
    CHECK(mae_hu(a, c, mask) == doctest::Approx(7.0).epsilon(1e-6));
    CHECK(rmse_hu(a, c, mask) == doctest::Approx(7.0).epsilon(1e-6));
}

TEST_CASE("metrics: error paths") {
    ImageF a(4, 4), b(4, 5), c(4, 4);
    MaskF m4(4, 4, true), m5(5, 4, true), empty(4, 4, false);
    CHECK_THROWS_AS(mae_hu(a, b, m4), ShapeError);
    CHECK_THROWS_AS(rmse_hu(a, c, m5), ShapeError);
    CHECK_THROWS_AS(mae_hu(a, c, empty), ArgumentError);
}

TEST_CASE("ssim: identical images give exactly 1") {
    ImageF x = pattern_x();
    CHECK(ssim(x, x, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim: frozen reference values") {
    ImageF x = pattern_x();
    ImageF y = pattern_y();
    CHECK(ssim(x, y, 1.0) == doctest::Approx(0.9781114966467721).epsilon(1e-7));
    CHECK(1.0 - ssim(x, y, 1.0) < 0.3);  // perceptually close pair

    ImageF anti(32, 32);
    for (std::size_t i = 0; i < anti.size(); ++i) anti.v[i] = 1.0f - x.v[i];
    CHECK(ssim(x, anti, 1.0) == doctest::Approx(-0.9812146274252943).epsilon(1e-7));
}

TEST_CASE("ssim: symmetry and dynamic-range dependence") {
    ImageF x = pattern_x();
    ImageF y = pattern_y();
    CHECK(ssim(x, y, 1.0) == doctest::Approx(ssim(y, x, 1.0)).epsilon(1e-12));
    // A larger dynamic range inflates the stabilizing constants and the score.
    CHECK(ssim(x, y, 4.0) > ssim(x, y, 1.0));
}

TEST_CASE("ssim: error paths") {
    ImageF x = pattern_x();
    ImageF y = pattern_y();
    CHECK_THROWS_AS(ssim(x, y, 0.0), ArgumentError);
    CHECK_THROWS_AS(ssim(x, y, -1.0), ArgumentError);
    ImageF small(8, 8);
    CHECK_THROWS_AS(ssim(small, small, 1.0), ArgumentError);  // below the 11x11 window
    ImageF narrow(32, 10);
    CHECK_THROWS_AS(ssim(narrow, narrow, 1.0), ArgumentError);
    ImageF other(32, 31);
    CHECK_THROWS_AS(ssim(x, other, 1.0), ShapeError);
}

TEST_CASE("apply_window_px: midpoint, clamping, monotonicity") {
    DisplayWindow win;
    win.wl = 50.0f;
    win.ww = 400.0f;  // maps [-150, 250] HU onto [0, 65535]

    CHECK(apply_window_px(-150.0f, win) == 0);
    CHECK(apply_window_px(-5000.0f, win) == 0);       // clamps below
    CHECK(apply_window_px(250.0f, win) == 65535);
    CHECK(apply_window_px(10000.0f, win) == 65535);   // clamps above
    CHECK(apply_window_px(50.0f, win) == 32768);      // level maps to the midpoint

    std::uint16_t prev = 0;
    for (int hu = -200; hu <= 300; hu += 5) {
        const std::uint16_t cur = apply_window_px(static_cast<float>(hu), win);
        CHECK(cur >= prev);
        prev = cur;
    }

    DisplayWindow bad;
    bad.ww = 0.0f;
    CHECK_THROWS_AS(apply_window_px(0.0f, bad), ArgumentError);
}

TEST_CASE("apply_window: whole-image mapping matches per-pixel results") {
    DisplayWindow win;
    win.wl = 0.0f;
    win.ww = 2000.0f;
    ImageF img(3, 5);
    Rng rng(22);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform(-1500.0, 1500.0));
    const auto out = apply_window(img, win);
    REQUIRE(out.size() == img.size());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == apply_window_px(img.v[i], win));
}

TEST_CASE("mean_std: small-sample conventions") {
    CHECK(mean_std({}).mean == 0.0);
    CHECK(mean_std({5.0}).mean == 5.0);
    CHECK(mean_std({5.0}).std == 0.0);
    const MeanStd ms = mean_std({1.0, 3.0});
    CHECK(ms.mean == doctest::Approx(2.0));
    CHECK(ms.std == doctest::Approx(1.0));  // population std
}
