#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "veingen/annotations.hpp"
#include "veingen/errors.hpp"
#include "veingen/fingermodel.hpp"

using namespace veingen;

TEST_CASE("unperturbed silhouette is a mirror-symmetric capsule") {
    FingerShapeConfig cfg;
    cfg.ripple_max = 0.0;
    cfg.drift_max = 0.0;
    const FingerShape fs = sample_finger(3, cfg);
    REQUIRE(fs.x_end > 400);
    for (int x = 0; x < fs.x_end; ++x)
        CHECK(fs.midline[x] == doctest::Approx(100.0));
    for (int y = 1; y < 200; ++y)
        for (int x = 0; x < 600; ++x)
            CHECK(fs.mask.at(x, y) == fs.mask.at(x, 200 - y));
    // Tip is rounded: the half width shrinks to zero over the cap.
    CHECK(fs.half_width[0] > 30.0f);
    CHECK(fs.half_width[fs.x_end - 1] < fs.half_width[0] * 0.6f);
    for (int x = fs.x_end; x < 600; ++x) CHECK(fs.half_width[x] == 0.0f);
}

TEST_CASE("sampling is deterministic and seeds are distinct") {
    const FingerShape a = sample_finger(11);
    const FingerShape b = sample_finger(11);
    CHECK(a.mask == b.mask);
    CHECK(a.midline == b.midline);

    std::set<std::string> digests;
    double width_sum = 0.0;
    const int n = 300;
    for (std::uint64_t seed = 0; seed < n; ++seed) {
        const FingerShape fs = sample_finger(seed);
        digests.insert(sha256_hex(fs.mask.data(), fs.mask.size()));
        double acc = 0.0;
        int cols = 0;
        for (int x = 0; x < fs.x_end; ++x)
            if (fs.half_width[x] > 0.0f) {
                acc += 2.0 * fs.half_width[x];
                ++cols;
            }
        width_sum += acc / cols;
    }
    CHECK(digests.size() == n);
    const double mean_width = width_sum / n;
    CHECK(mean_width > 70.0);
    CHECK(mean_width < 150.0);
}

TEST_CASE("silhouette profile data is consistent with its mask") {
    for (std::uint64_t seed : {0ull, 5ull, 9ull}) {
        const FingerShape fs = sample_finger(seed);
        for (int x = 0; x < fs.x_end; ++x) {
            if (fs.half_width[x] < 1.0f) continue;
            const int mid = static_cast<int>(std::lround(fs.midline[x]));
            CHECK(fs.mask.at(x, mid) == 1);
            const int above =
                static_cast<int>(std::floor(fs.midline[x] - fs.half_width[x])) - 1;
            const int below =
                static_cast<int>(std::ceil(fs.midline[x] + fs.half_width[x])) + 1;
            if (above >= 0) CHECK(fs.mask.at(x, above) == 0);
            if (below < 200) CHECK(fs.mask.at(x, below) == 0);
        }
    }
}

TEST_CASE("profile recovery from a mask stays within half a pixel") {
    for (std::uint64_t seed : {1ull, 4ull, 13ull}) {
        const FingerShape fs = sample_finger(seed);
        const FingerShape back = shape_from_mask(fs.mask, seed);
        CHECK(back.seed == seed);
        CHECK(back.mask == fs.mask);
        for (int x = 0; x < back.x_end; ++x) {
            if (back.half_width[x] <= 0.0f || fs.half_width[x] < 1.0f) continue;
            CHECK(std::abs(back.midline[x] - fs.midline[x]) <= 0.51f);
            CHECK(std::abs(back.half_width[x] - fs.half_width[x]) <= 1.01f);
        }
    }
}

TEST_CASE("joint placement respects position, separation, and size bounds") {
    const JointConfig jc;
    double min_f1 = 1.0, max_f1 = 0.0, min_r = 100.0, max_r = 0.0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const FingerShape fs = sample_finger(seed);
        const std::vector<Joint> joints = place_joints(seed, fs);
        REQUIRE(joints.size() == 2);
        const double L = fs.x_end;
        const double f1 = joints[0].center.x / L;
        const double f2 = joints[1].center.x / L;
        CHECK(f1 >= jc.f1_min - 0.01);
        CHECK(f1 <= jc.f1_max + 0.01);
        CHECK(f2 >= jc.f2_min - 0.01);
        CHECK(f2 <= jc.f2_max + 0.01);
        CHECK(f2 - f1 >= jc.min_separation - 0.01);
        for (const Joint& j : joints) {
            CHECK(j.radius <= jc.radius_max);
            CHECK(j.radius >= jc.radius_min * 0.6);
            CHECK(j.amplitude >= jc.amplitude_min);
            CHECK(j.amplitude <= jc.amplitude_max);
            const int x = static_cast<int>(j.center.x);
            CHECK(j.center.y == doctest::Approx(fs.midline[x]));
            // The bump and its compensating ring fit inside the finger.
            CHECK(j.radius * std::sqrt(2.0) <= fs.half_width[x] - 1.9);
        }
        min_f1 = std::min(min_f1, f1);
        max_f1 = std::max(max_f1, f1);
        for (const Joint& j : joints) {
            min_r = std::min(min_r, j.radius);
            max_r = std::max(max_r, j.radius);
        }
    }
    // 200 draws cover the configured ranges.
    CHECK(min_f1 < 0.32);
    CHECK(max_f1 > 0.38);
    CHECK(min_r < 15.5);
    CHECK(max_r > 18.5);
}

TEST_CASE("joint placement is deterministic") {
    const FingerShape fs = sample_finger(2);
    const auto a = place_joints(17, fs);
    const auto b = place_joints(17, fs);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].center.x == b[i].center.x);
        CHECK(a[i].radius == b[i].radius);
        CHECK(a[i].amplitude == b[i].amplitude);
    }
}

TEST_CASE("joints cannot be placed in a sliver of a finger") {
    Mask thin(600, 200, 0);
    for (int x = 0; x < 550; ++x)
        for (int y = 96; y <= 104; ++y) thin.at(x, y) = 1;
    const FingerShape fs = shape_from_mask(thin);
    CHECK_THROWS_AS(place_joints(0, fs), GenerationError);
}

TEST_CASE("brightness field: levels, bumps, and smoothness") {
    const FingerShape fs = sample_finger(6);
    const std::vector<Joint> joints = place_joints(6, fs);
    const BrightnessConfig bc;
    const BrightnessField bf = brightness_field(fs, joints);
    CHECK(bf.base == bc.base);

    // Tissue term spans edge_floor * base up to base.
    for (int y = 0; y < 200; ++y)
        for (int x = 0; x < 600; ++x) {
            CHECK(bf.base_part.at(x, y) >= bc.base * bc.edge_floor - 1e-4);
            CHECK(bf.base_part.at(x, y) <= bc.base + 1e-4);
        }
    const int cx = static_cast<int>(joints[0].center.x);
    const int cy = static_cast<int>(std::lround(joints[0].center.y));
    CHECK(bf.base_part.at(cx, cy) >= 0.54f); // deep interior: almost no falloff

    // Each bump peaks at its amplitude on a plateau out to half the radius.
    const ImageF total = bf.total(1.0);
    for (const Joint& j : joints) {
        const int jx = static_cast<int>(j.center.x);
        const int jy = static_cast<int>(std::lround(j.center.y));
        CHECK(bf.bump_sum.at(jx, jy) == doctest::Approx(j.amplitude).epsilon(1e-3));
        CHECK(bf.bump_norm.at(jx, jy) == doctest::Approx(1.0).epsilon(1e-3));
        const int edge = static_cast<int>(j.radius * 0.5) - 1;
        CHECK(bf.bump_sum.at(jx + edge, jy) ==
              doctest::Approx(j.amplitude).epsilon(1e-3));
        // Beyond twice the radius the bump is gone.
        const int out = static_cast<int>(j.radius * 2.0) + 2;
        CHECK(bf.bump_sum.at(jx, jy + out) == doctest::Approx(0.0));
        // The lit joint is brighter than the surrounding tissue.
        CHECK(total.at(jx, jy) - bf.base_part.at(jx, jy) >= 0.1);
    }

    // No hard edges anywhere: neighboring pixels differ by < 0.05.
    for (int y = 0; y < 200; ++y)
        for (int x = 1; x < 600; ++x)
            CHECK(std::abs(total.at(x, y) - total.at(x - 1, y)) < 0.05f);
    for (int y = 1; y < 200; ++y)
        for (int x = 0; x < 600; ++x)
            CHECK(std::abs(total.at(x, y) - total.at(x, y - 1)) < 0.05f);

    // Zero bump scale reduces the total to the tissue term.
    const ImageF flat = bf.total(0.0);
    CHECK(flat == bf.base_part);

    // Determinism.
    const BrightnessField bf2 = brightness_field(fs, joints);
    CHECK(bf2.base_part == bf.base_part);
    CHECK(bf2.bump_sum == bf.bump_sum);
    CHECK(bf2.bump_norm == bf.bump_norm);
}
