#include "chm/tiler.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace chm {

TilePlan plan_tiles(int extent_width, int extent_height, int core_size, int border) {
    if (extent_width < 1 || extent_height < 1) throw InputError("tile plan extent must be at least 1x1");
    if (core_size < 1 || border < 0) throw InputError("core size must be positive and border non-negative");
    TilePlan plan{extent_width, extent_height, core_size, border, {}};
    for (int y0 = 0; y0 < extent_height; y0 += core_size) {
        for (int x0 = 0; x0 < extent_width; x0 += core_size) {
            Tile t;
            t.core = {x0, y0, std::min(core_size, extent_width - x0), std::min(core_size, extent_height - y0)};
            t.context = {x0 - border, y0 - border, t.core.width + 2 * border, t.core.height + 2 * border};
            t.padded = !t.context.contained_in(extent_width, extent_height);
            plan.tiles.push_back(t);
        }
    }
    return plan;
}

MultiBandRaster predict_mosaic(const TilePlan& plan, const MultiBandRaster& input, const Predictor& predict,
                               int threads) {
    if (input.width() != plan.extent_width || input.height() != plan.extent_height) {
        throw StructuralError("input extent does not match the tile plan");
    }
    MultiBandRaster out(1, input.width(), input.height(), input.georef());

    // Each tile writes only its own core, so workers never touch the same pixel.
    auto run_tile = [&](const Tile& t) {
        const MultiBandRaster ctx = extract_window(input, t.context, PadPolicy::nodata_pad);
        const MultiBandRaster pred = predict(ctx);
        if (pred.width() != ctx.width() || pred.height() != ctx.height() || pred.bands() != 1) {
            throw StructuralError("predictor output shape differs from its context window");
        }
        const int ox = t.core.x0 - t.context.x0, oy = t.core.y0 - t.context.y0;
        for (int y = 0; y < t.core.height; ++y) {
            for (int x = 0; x < t.core.width; ++x) {
                out.set_value(0, t.core.x0 + x, t.core.y0 + y, pred.value(0, ox + x, oy + y));
                out.set_valid(0, t.core.x0 + x, t.core.y0 + y, pred.valid(0, ox + x, oy + y));
            }
        }
    };

    const int workers = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(plan.tiles.size(), 1)));
    if (workers == 1) {
        for (const auto& t : plan.tiles) run_tile(t);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < plan.tiles.size(); k = next++) {
                    try {
                        run_tile(plan.tiles[k]);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

namespace predictors {

Predictor identity_band(int band) {
    return [band](const MultiBandRaster& in) {
        if (band < 0 || band >= in.bands()) throw InputError("identity predictor: band out of range");
        return in.extract_band(band);
    };
}

Predictor constant(float value) {
    return [value](const MultiBandRaster& in) {
        MultiBandRaster out(1, in.width(), in.height(), in.georef());
        std::ranges::fill(out.band(0), value);
        return out;
    };
}

Predictor linear(std::vector<float> weights, float bias) {
    return [weights = std::move(weights), bias](const MultiBandRaster& in) {
        if (static_cast<int>(weights.size()) > in.bands()) {
            throw InputError("linear predictor has more weights than input bands");
        }
        MultiBandRaster out(1, in.width(), in.height(), in.georef());
        for (int y = 0; y < in.height(); ++y) {
            for (int x = 0; x < in.width(); ++x) {
                double acc = bias;
                bool ok = true;
                for (std::size_t b = 0; b < weights.size(); ++b) {
                    if (weights[b] == 0.0f) continue;
                    if (!in.valid(static_cast<int>(b), x, y)) {
                        ok = false;
                        break;
                    }
                    acc += static_cast<double>(weights[b]) * in.value(static_cast<int>(b), x, y);
                }
                out.set_value(0, x, y, ok ? static_cast<float>(acc) : 0.0f);
                out.set_valid(0, x, y, ok);
            }
        }
        return out;
    };
}

}  // namespace predictors

}  // namespace chm
