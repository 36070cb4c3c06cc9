#include <doctest.h>

#include <algorithm>

#include "chm/tiler.hpp"
#include "support.hpp"

using namespace chm;

namespace {

void check_cover(const TilePlan& plan) {
    Grid<int> hits(plan.extent_width, plan.extent_height, 0);
    for (const auto& t : plan.tiles) {
        REQUIRE(t.core.contained_in(plan.extent_width, plan.extent_height));
        for (int y = t.core.y0; y < t.core.y0 + t.core.height; ++y) {
            for (int x = t.core.x0; x < t.core.x0 + t.core.width; ++x) ++hits(x, y);
        }
        CHECK(t.context.x0 == t.core.x0 - plan.border);
        CHECK(t.context.width == t.core.width + 2 * plan.border);
        CHECK(t.padded == !t.context.contained_in(plan.extent_width, plan.extent_height));
    }
    CHECK(std::ranges::all_of(hits.values(), [](int h) { return h == 1; }));
}

}  // namespace

TEST_CASE("plan shapes") {
    const TilePlan p = plan_tiles(624, 624);
    REQUIRE(p.tiles.size() == 4);
    for (const auto& t : p.tiles) {
        CHECK(t.core.width == 312);
        CHECK(t.core.height == 312);
        CHECK(t.context.width == 512);
        CHECK(t.context.height == 512);
    }
    CHECK(p.tiles[1].core.x0 == 312);
    CHECK(p.tiles[2].core.y0 == 312);

    const TilePlan small = plan_tiles(100, 100);
    REQUIRE(small.tiles.size() == 1);
    CHECK(small.tiles[0].core == Window{0, 0, 100, 100});
    CHECK(small.tiles[0].padded);

    CHECK_THROWS_AS(plan_tiles(0, 10), InputError);
    CHECK_THROWS_AS(plan_tiles(10, 10, 0, 5), InputError);
}

TEST_CASE("cores partition random extents") {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> dim(1, 1500), core(1, 400), border(0, 150);
    for (int i = 0; i < 60; ++i) {
        check_cover(plan_tiles(dim(rng), dim(rng), core(rng), border(rng)));
    }
}

TEST_CASE("identity mosaic reproduces the input band") {
    std::mt19937_64 rng(12);
    for (auto [w, h] : {std::pair{700, 333}, std::pair{64, 900}, std::pair{312, 312}}) {
        const MultiBandRaster in = test::random_raster(rng, 2, w, h, 0.05);
        const TilePlan plan = plan_tiles(w, h);
        const MultiBandRaster out = predict_mosaic(plan, in, predictors::identity_band(1));
        CHECK(out == in.extract_band(1));
        CHECK(predict_mosaic(plan, in, predictors::identity_band(1), 3) == out);
    }
}

TEST_CASE("per-tile constants change exactly at core boundaries") {
    const MultiBandRaster in(1, 500, 400);
    int counter = 0;
    const Predictor numbered = [&counter](const MultiBandRaster& ctx) {
        MultiBandRaster out(1, ctx.width(), ctx.height(), ctx.georef());
        std::ranges::fill(out.band(0), static_cast<float>(counter++));
        return out;
    };
    const TilePlan plan = plan_tiles(500, 400, 150, 20);
    const MultiBandRaster out = predict_mosaic(plan, in, numbered);
    for (std::size_t k = 0; k < plan.tiles.size(); ++k) {
        const Window& c = plan.tiles[k].core;
        for (int y = c.y0; y < c.y0 + c.height; ++y) {
            for (int x = c.x0; x < c.x0 + c.width; ++x) REQUIRE(out.value(0, x, y) == static_cast<float>(k));
        }
    }
}

TEST_CASE("padding only affects cores whose context leaves the extent") {
    // 3x3 box sum that reads invalid pixels as 100 and off-window pixels as 0,
    // so nodata padding and the true extent edge give different answers.
    const Predictor sensitive = [](const MultiBandRaster& ctx) {
        MultiBandRaster out(1, ctx.width(), ctx.height(), ctx.georef());
        for (int y = 0; y < ctx.height(); ++y) {
            for (int x = 0; x < ctx.width(); ++x) {
                float acc = 0.0f;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int sx = x + dx, sy = y + dy;
                        if (sx < 0 || sy < 0 || sx >= ctx.width() || sy >= ctx.height()) continue;
                        acc += ctx.valid(0, sx, sy) ? ctx.value(0, sx, sy) : 100.0f;
                    }
                }
                out.set_value(0, x, y, acc);
            }
        }
        return out;
    };
    std::mt19937_64 rng(6);
    const MultiBandRaster in = test::random_raster(rng, 1, 90, 75, 0.0);
    const MultiBandRaster oracle = sensitive(in);
    const TilePlan plan = plan_tiles(90, 75, 30, 2);
    const MultiBandRaster out = predict_mosaic(plan, in, sensitive);
    int differing_edge_tiles = 0;
    for (const auto& t : plan.tiles) {
        bool same = true;
        for (int y = t.core.y0; y < t.core.y0 + t.core.height; ++y) {
            for (int x = t.core.x0; x < t.core.x0 + t.core.width; ++x) {
                const bool edge = x == 0 || y == 0 || x == 89 || y == 74;
                if (!edge) CHECK(out.value(0, x, y) == oracle.value(0, x, y));
                same = same && out.value(0, x, y) == oracle.value(0, x, y);
            }
        }
        if (!t.padded) CHECK(same);
        if (!same) ++differing_edge_tiles;
    }
    CHECK(differing_edge_tiles > 0);
}

TEST_CASE("mosaic is deterministic and checks shapes") {
    std::mt19937_64 rng(2);
    const MultiBandRaster in = test::random_raster(rng, 3, 120, 80, 0.0);
    const TilePlan plan = plan_tiles(120, 80, 50, 10);
    const auto lin = predictors::linear({0.5f, -1.0f, 2.0f}, 0.25f);
    CHECK(predict_mosaic(plan, in, lin) == predict_mosaic(plan, in, lin, 4));
    CHECK(predict_mosaic(plan, in, predictors::constant(3.5f)).value(0, 119, 79) == 3.5f);

    const Predictor wrong = [](const MultiBandRaster& ctx) { return MultiBandRaster(1, ctx.width() - 1, ctx.height()); };
    CHECK_THROWS_AS(predict_mosaic(plan, in, wrong), StructuralError);
    CHECK_THROWS_AS(predict_mosaic(plan_tiles(10, 10), in, lin), StructuralError);
}
