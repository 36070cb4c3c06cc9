#include "chm/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chm/composite.hpp"
#include "chm/csv.hpp"
#include "chm/evaluate.hpp"
#include "chm/gedi.hpp"
#include "chm/raster_io.hpp"
#include "chm/sampler.hpp"
#include "chm/shiftloss.hpp"
#include "chm/synth.hpp"
#include "chm/terrain.hpp"
#include "chm/tiler.hpp"

namespace chm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* tool_version = "0.1.0";

// ---------------------------------------------------------------- options

struct CompositeOptions {
    std::string manifest;
    std::string out;
    std::string date_from;
    std::string date_to;
    MaskParams mask;
    std::vector<int> dark_scl_classes{2, 3};
};

struct GediFilterOptions {
    std::string shots;
    std::string out;
    GediFilterConfig filter;
};

struct SlopeFilterOptions {
    std::string shots;
    std::string elevation;
    std::string out;
    std::string slope_out;
    double threshold = 20.0;
};

struct RasterizeOptions {
    std::string shots;
    std::string reference;
    std::string out;
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 10.0;
    int width = 0;
    int height = 0;
    CollisionRule collision = CollisionRule::keep_max;
};

struct SplitOptions {
    std::string tiles;
    std::string out;
    std::vector<double> ratios{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    std::string patch_stats;
    std::string weights_out;
    WeightPolicy weights;
};

enum class LossMode { shifted, non_shifted };

struct LossOptions {
    std::string pred;
    std::string labels;
    std::string out;
    std::string gradient_out;
    LossMode mode = LossMode::shifted;
    ShiftLossConfig loss;
    PixelLossKind::Type pixel_loss = PixelLossKind::Type::huber;
    double huber_delta = 3.0;
    std::size_t min_track_size = 10;
};

struct EvalOptions {
    std::string pred;
    std::string labels;
    std::string pairs;
    std::string out;
    std::optional<double> filter_label_gt;
    bool bins = false;
    bool scatter = false;
    double bin_width = 10.0;
    double max_height = 60.0;
    double scatter_cell = 1.0;
};

struct TilePlanOptions {
    std::string input;
    std::string out;
    int width = 0;
    int height = 0;
    int core_size = default_core_size;
    int border = default_context_border;
};

enum class PredictorKind { identity, constant, linear };

struct PredictOptions {
    std::string input;
    std::string out;
    PredictorKind predictor = PredictorKind::identity;
    int band = 0;
    float value = 0.0f;
    std::vector<float> weights;
    float bias = 0.0f;
    int core_size = default_core_size;
    int border = default_context_border;
    int threads = 1;
};

struct SynthOptions {
    std::string out;
    SynthConfig synth;
};

/// Every configurable value of a run. Each field is reachable both as a
/// command-line flag and as a key in the `[subcommand]` section of the
/// configuration file given with --config.
struct PipelineConfig {
    CompositeOptions composite;
    GediFilterOptions gedi_filter;
    SlopeFilterOptions slope_filter;
    RasterizeOptions rasterize;
    SplitOptions split;
    LossOptions loss;
    EvalOptions eval;
    TilePlanOptions tile_plan;
    PredictOptions predict;
    SynthOptions synth;
};

// ---------------------------------------------------------------- provenance

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct Run {
    std::string subcommand;
    std::string effective_config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void write_provenance(const fs::path& path, const Run& run) {
    json j;
    j["tool"] = "chm";
    j["version"] = tool_version;
    j["compiler"] = __VERSION__;
    j["subcommand"] = run.subcommand;
    j["config_hash"] = "fnv1a64:" + hex64(fnv1a(run.effective_config));
    j["config"] = run.effective_config;
    json inputs = json::array();
    for (const auto& p : run.inputs) inputs.push_back({{"path", p}, {"digest", file_digest(p)}});
    j["inputs"] = inputs;
    json outputs = json::array();
    for (const auto& p : run.outputs) outputs.push_back({{"path", p}, {"digest", file_digest(p)}});
    j["outputs"] = outputs;
    write_json(path, j);
}

fs::path sibling(const std::string& out, const std::string& suffix) { return fs::path(out + suffix); }

// ---------------------------------------------------------------- helpers

json stats_json(const LabelStats& st) {
    json j;
    j["count"] = st.count;
    j["mean"] = st.mean ? json(*st.mean) : json(nullptr);
    j["std"] = st.stddev ? json(*st.stddev) : json(nullptr);
    j["histogram_1m"] = st.histogram;
    return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Grid<double> to_prediction(const MultiBandRaster& r) {
    Grid<double> g(r.width(), r.height());
    for (int y = 0; y < r.height(); ++y) {
        for (int x = 0; x < r.width(); ++x) {
            g(x, y) = r.valid(0, x, y) ? static_cast<double>(r.value(0, x, y)) : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return g;
}

std::string loss_name(PixelLossKind::Type t) {
    switch (t) {
        case PixelLossKind::Type::l1: return "l1";
        case PixelLossKind::Type::l2: return "l2";
        default: return "huber";
    }
}

// ---------------------------------------------------------------- subcommands

json do_composite(CompositeOptions o, Run& run) {
    o.mask.dark_scl_classes = std::set<int>(o.dark_scl_classes.begin(), o.dark_scl_classes.end());
    const auto records = read_scene_manifest(o.manifest);
    const fs::path base = fs::path(o.manifest).parent_path();
    run.inputs.push_back(o.manifest);
    for (const auto& r : records) run.inputs.push_back((r.path.is_absolute() ? r.path : base / r.path).string());
    CompositeSummary sum;
    const MultiBandRaster out = build_composite(records, base, o.mask, {o.date_from, o.date_to}, &sum);
    write_raster(out, o.out);
    run.outputs.push_back(o.out);
    return {{"bands", out.bands()},          {"width", out.width()},
            {"height", out.height()},        {"s1_scenes", sum.s1_scenes},
            {"s2_scenes", sum.s2_scenes},    {"s2_rejected", sum.s2_rejected},
            {"out_of_date_range", sum.out_of_date_range}, {"empty_pixels", sum.empty_pixels}};
}

json do_gedi_filter(const GediFilterOptions& o, Run& run) {
    const ShotReadReport in = read_shots(o.shots);
    run.inputs.push_back(o.shots);
    const auto kept = filter_shots(in.shots, o.filter);
    write_shots(o.out, kept);
    run.outputs.push_back(o.out);
    return {{"read", in.shots.size() + in.implausible},
            {"implausible", in.implausible},
            {"kept", kept.size()},
            {"removed", in.shots.size() - kept.size()}};
}

json do_slope_filter(const SlopeFilterOptions& o, Run& run) {
    const ShotReadReport in = read_shots(o.shots);
    const MultiBandRaster elev = read_raster(o.elevation);
    run.inputs = {o.shots, o.elevation};
    const MultiBandRaster slope = slope_5x5(elev);
    const SlopeFilterResult res = filter_by_slope(in.shots, slope, o.threshold);
    write_shots(o.out, res.shots);
    run.outputs.push_back(o.out);
    if (!o.slope_out.empty()) {
        write_raster(slope, o.slope_out);
        run.outputs.push_back(o.slope_out);
    }
    return {{"read", in.shots.size()},
            {"kept", res.shots.size()},
            {"removed", res.removed},
            {"unknown_slope", res.unknown_slope},
            {"threshold_deg", o.threshold}};
}

json do_rasterize(const RasterizeOptions& o, Run& run) {
    const ShotReadReport in = read_shots(o.shots);
    run.inputs.push_back(o.shots);
    GeoRef g{o.origin_x, o.origin_y, o.pixel_size, ""};
    int w = o.width, h = o.height;
    if (!o.reference.empty()) {
        const MultiBandRaster ref = read_raster(o.reference);
        run.inputs.push_back(o.reference);
        g = ref.georef();
        w = ref.width();
        h = ref.height();
    } else if (w < 1 || h < 1) {
        throw InputError("rasterize needs --reference or a positive --width and --height");
    }
    const auto tracks = group_tracks(in.shots);
    const SparseLabels labels = rasterize_tracks(tracks, g, w, h, o.collision);
    write_labels(o.out, labels);
    run.outputs.push_back(o.out);
    json j{{"width", w}, {"height", h}, {"tracks", labels.tracks.size()}};
    j["stats"] = stats_json(label_stats(labels));
    return j;
}

json do_split(const SplitOptions& o, Run& run) {
    if (o.ratios.size() != 3) throw InputError("--ratios takes three values");
    const SplitRatios ratios{o.ratios[0], o.ratios[1], o.ratios[2]};
    ratios.validate();
    const CsvTable t = read_csv(o.tiles);
    run.inputs.push_back(o.tiles);
    const auto col = t.column("tile_id");
    std::map<std::string, std::size_t> counts{{"train", 0}, {"val", 0}, {"test", 0}};
    {
        std::ofstream out(o.out, std::ios::trunc);
        if (!out) throw InputError("cannot write " + o.out);
        out << "tile_id,split\n";
        for (const auto& row : t.rows) {
            const auto s = to_string(assign_split(row[col], ratios, o.seed));
            ++counts[std::string(s)];
            out << row[col] << ',' << s << '\n';
        }
    }
    run.outputs.push_back(o.out);
    json j{{"tiles", t.rows.size()}, {"counts", counts}, {"seed", o.seed}};
    if (!o.patch_stats.empty()) {
        if (o.weights_out.empty()) throw InputError("--patch-stats needs --weights-out");
        const CsvTable ps = read_csv(o.patch_stats);
        run.inputs.push_back(o.patch_stats);
        const auto c_id = ps.column("patch_id"), c_h = ps.column("mean_height");
        std::vector<PatchHeight> stats;
        for (const auto& row : ps.rows) stats.push_back({row[c_id], parse_double(row[c_h], "mean_height")});
        const auto weights = compute_weights(stats, o.weights);
        std::ofstream out(o.weights_out, std::ios::trunc);
        if (!out) throw InputError("cannot write " + o.weights_out);
        out.precision(17);
        out << "patch_id,weight\n";
        for (const auto& w : weights) out << w.patch_id << ',' << w.weight << '\n';
        out.close();
        run.outputs.push_back(o.weights_out);
        j["weighted_patches"] = weights.size();
    }
    return j;
}

json do_loss(LossOptions o, Run& run) {
    o.loss.pixel_loss = {o.pixel_loss, o.huber_delta};
    o.loss.min_track_size_for_shift = o.min_track_size;
    const MultiBandRaster pred_raster = read_raster(o.pred);
    const SparseLabels labels = read_labels(o.labels);
    run.inputs = {o.pred, o.labels};
    const Grid<double> pred = to_prediction(pred_raster);
    const bool want_grad = !o.gradient_out.empty();
    LossReport rep;
    if (o.mode == LossMode::shifted) {
        rep = ShiftLoss(o.loss).evaluate(pred, labels, want_grad);
    } else {
        ShiftLossConfig ns = o.loss;
        ns.radius = 0.0;
        rep = ShiftLoss(ns).evaluate(pred, labels, want_grad);
    }
    json j;
    j["mode"] = o.mode == LossMode::shifted ? "shifted" : "non-shifted";
    j["pixel_loss"] = loss_name(o.pixel_loss);
    if (o.pixel_loss == PixelLossKind::Type::huber) j["huber_delta"] = o.huber_delta;
    j["radius"] = o.mode == LossMode::shifted ? o.loss.radius : 0.0;
    j["min_track_size_for_shift"] = o.min_track_size;
    j["value"] = rep.value;
    j["n_effective"] = rep.n_effective;
    j["empty"] = rep.empty;
    json tracks = json::array();
    for (const auto& t : rep.per_track) {
        tracks.push_back({{"track_key", t.track_key},
                          {"dx", t.shift.dx},
                          {"dy", t.shift.dy},
                          {"loss_sum", t.loss_sum},
                          {"in_bounds", t.in_bounds},
                          {"size", t.size}});
    }
    j["per_track"] = tracks;
    write_json(o.out, j);
    run.outputs.push_back(o.out);
    if (want_grad) {
        MultiBandRaster g(1, pred_raster.width(), pred_raster.height(), pred_raster.georef());
        const auto gv = rep.gradient->values();
        auto band = g.band(0);
        for (std::size_t i = 0; i < gv.size(); ++i) band[i] = static_cast<float>(gv[i]);
        write_raster(g, o.gradient_out);
        run.outputs.push_back(o.gradient_out);
    }
    return {{"value", rep.value}, {"n_effective", rep.n_effective}, {"empty", rep.empty}};
}

json do_eval(const EvalOptions& o, Run& run) {
    std::vector<PredLabelPair> pairs;
    if (!o.pairs.empty()) {
        if (!o.pred.empty() || !o.labels.empty()) throw InputError("use either --pairs or --pred with --labels");
        pairs = read_pairs(o.pairs);
        run.inputs.push_back(o.pairs);
    } else {
        if (o.pred.empty() || o.labels.empty()) throw InputError("eval needs --pairs or both --pred and --labels");
        pairs = pairs_from_raster(read_raster(o.pred), read_labels(o.labels));
        run.inputs = {o.pred, o.labels};
    }
    const LabelFilter filter{o.filter_label_gt};
    const MetricsReport m = compute_metrics(pairs, filter);
    json j;
    j["filter"] = m.filter;
    j["n_input_pairs"] = pairs.size();
    j["n_pairs"] = m.n_pairs;
    j["mae"] = m.mae;
    j["mse"] = m.mse;
    j["rmse"] = m.rmse;
    j["rrmse"] = m.rrmse;
    j["mape"] = optional_json(m.mape);
    j["n_mape"] = m.n_mape;
    j["r2"] = optional_json(m.r2);

    std::vector<PredLabelPair> kept;
    for (const auto& p : pairs) {
        if (filter.keeps(p.label)) kept.push_back(p);
    }
    if (o.bins) {
        const auto bins = bin_errors(kept, o.bin_width, o.max_height);
        json jb = json::array();
        const fs::path csv_path = sibling(o.out, ".bins.csv");
        std::ofstream csv(csv_path, std::ios::trunc);
        csv.precision(17);
        csv << "bin_lo,bin_hi,count,median,q1,q3,whisker_low,whisker_high,mean\n";
        for (const auto& b : bins) {
            json e{{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}};
            csv << b.lo << ',' << b.hi << ',' << b.count;
            if (b.stats) {
                const auto& s = *b.stats;
                e["median"] = s.median;
                e["q1"] = s.q1;
                e["q3"] = s.q3;
                e["whisker_low"] = s.whisker_low;
                e["whisker_high"] = s.whisker_high;
                e["mean"] = s.mean;
                csv << ',' << s.median << ',' << s.q1 << ',' << s.q3 << ',' << s.whisker_low << ','
                    << s.whisker_high << ',' << s.mean;
            } else {
                csv << ",,,,,,";
            }
            csv << '\n';
            jb.push_back(e);
        }
        j["bins"] = jb;
        run.outputs.push_back(csv_path.string());
    }
    if (o.scatter) {
        const ScatterSummary s = scatter_summary(kept, o.scatter_cell, o.max_height);
        const fs::path csv_path = sibling(o.out, ".scatter.csv");
        std::ofstream csv(csv_path, std::ios::trunc);
        csv.precision(17);
        csv << "label_lo,prediction_lo,count\n";
        for (int i = 0; i < s.density.width(); ++i) {
            for (int k = 0; k < s.density.height(); ++k) {
                if (s.density(i, k)) csv << i * s.cell << ',' << k * s.cell << ',' << s.density(i, k) << '\n';
            }
        }
        j["scatter"] = {{"cell", s.cell}, {"max", s.max_value}, {"outside", s.outside}, {"r2", optional_json(s.r2)}};
        run.outputs.push_back(csv_path.string());
    }
    write_json(o.out, j);
    run.outputs.insert(run.outputs.begin(), o.out);
    return {{"n_pairs", m.n_pairs}, {"filter", m.filter}, {"mae", m.mae}, {"rmse", m.rmse}};
}

json plan_json(const TilePlan& plan) {
    json j;
    j["extent"] = {plan.extent_width, plan.extent_height};
    j["core_size"] = plan.core_size;
    j["border"] = plan.border;
    json tiles = json::array();
    for (const auto& t : plan.tiles) {
        tiles.push_back({{"core", {t.core.x0, t.core.y0, t.core.width, t.core.height}},
                         {"context", {t.context.x0, t.context.y0, t.context.width, t.context.height}},
                         {"padded", t.padded}});
    }
    j["tiles"] = tiles;
    return j;
}

json do_tile_plan(const TilePlanOptions& o, Run& run) {
    int w = o.width, h = o.height;
    if (!o.input.empty()) {
        const MultiBandRaster r = read_raster(o.input);
        run.inputs.push_back(o.input);
        w = r.width();
        h = r.height();
    }
    const TilePlan plan = plan_tiles(w, h, o.core_size, o.border);
    write_json(o.out, plan_json(plan));
    run.outputs.push_back(o.out);
    return {{"tiles", plan.tiles.size()}, {"extent", {w, h}}};
}

json do_predict(const PredictOptions& o, Run& run) {
    const MultiBandRaster input = read_raster(o.input);
    run.inputs.push_back(o.input);
    Predictor p;
    switch (o.predictor) {
        case PredictorKind::identity: p = predictors::identity_band(o.band); break;
        case PredictorKind::constant: p = predictors::constant(o.value); break;
        case PredictorKind::linear:
            if (o.weights.empty()) throw InputError("linear predictor needs --weights");
            p = predictors::linear(o.weights, o.bias);
            break;
    }
    const TilePlan plan = plan_tiles(input.width(), input.height(), o.core_size, o.border);
    const MultiBandRaster out = predict_mosaic(plan, input, p, o.threads);
    write_raster(out, o.out);
    run.outputs.push_back(o.out);
    return {{"tiles", plan.tiles.size()}, {"width", out.width()}, {"height", out.height()}};
}

json do_synth(const SynthOptions& o, Run& run) {
    const auto files = write_synth_fixture(o.synth, o.out);
    for (const auto& f : files) run.outputs.push_back((fs::path(o.out) / f).string());
    return {{"dir", o.out}, {"files", files}};
}

// ---------------------------------------------------------------- wiring

template <class E>
CLI::CheckedTransformer enum_map(std::map<std::string, E> m) {
    return CLI::CheckedTransformer(std::move(m), CLI::ignore_case);
}

void build(CLI::App& app, PipelineConfig& c) {
    app.set_config("--config", "", "TOML/INI configuration file; keys mirror the long flag names under a "
                                   "[subcommand] section, and flags given on the command line win");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", tool_version);

    {
        auto* s = app.add_subcommand("composite", "Masked median composite from a scene manifest (radar bands first)");
        auto& o = c.composite;
        s->add_option("--manifest", o.manifest, "Scene manifest CSV")->required();
        s->add_option("--out", o.out, "Output raster (.tif or .chmr)")->required();
        s->add_option("--date-from", o.date_from, "First acquisition day, YYYY-MM-DD (inclusive)");
        s->add_option("--date-to", o.date_to, "Last acquisition day, YYYY-MM-DD (inclusive)");
        s->add_option("--min-cloud-free-fraction", o.mask.min_cloud_free_fraction,
                      "Scenes with a smaller clear fraction are skipped")->capture_default_str();
        s->add_option("--cloud-prob-threshold", o.mask.cloud_prob_threshold,
                      "Cloud probability (percent) above which a pixel is cloud")->capture_default_str();
        s->add_option("--shadow-search-distance", o.mask.shadow_search_distance,
                      "Anti-solar search distance for shadows, map units")->capture_default_str();
        s->add_option("--dilation-radius", o.mask.dilation_radius,
                      "Buffer removed around cloud and shadow pixels, map units")->capture_default_str();
        s->add_option("--dark-nir-threshold", o.mask.dark_pixel_nir_threshold,
                      "NIR reflectance below which a pixel may be shadow")->capture_default_str();
        s->add_option("--dark-scl-classes", o.dark_scl_classes, "SCL codes eligible as shadow")->capture_default_str();
        s->add_option("--nir-band", o.mask.nir_band, "Band role used as NIR")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("gedi-filter", "Apply beam, quality, and night filters to a shot table");
        auto& o = c.gedi_filter;
        s->add_option("--shots", o.shots, "Shot table CSV")->required();
        s->add_option("--out", o.out, "Filtered shot table CSV")->required();
        s->add_option("--require-power-beam", o.filter.require_power_beam, "Keep only beam_id > 5")->capture_default_str();
        s->add_option("--require-quality", o.filter.require_quality, "Keep only quality_flag = 1")->capture_default_str();
        s->add_option("--require-night", o.filter.require_night, "Keep only solar_elevation < 0")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("slope-filter", "Remove shots where the 5x5 terrain slope exceeds a threshold");
        auto& o = c.slope_filter;
        s->add_option("--shots", o.shots, "Shot table CSV")->required();
        s->add_option("--elevation", o.elevation, "Single-band elevation raster")->required();
        s->add_option("--out", o.out, "Filtered shot table CSV")->required();
        s->add_option("--slope-out", o.slope_out, "Optional slope raster (degrees)");
        s->add_option("--threshold", o.threshold, "Slope in degrees above which shots are removed")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("rasterize", "Group shots into tracks and snap them to a patch grid");
        auto& o = c.rasterize;
        s->add_option("--shots", o.shots, "Shot table CSV")->required();
        s->add_option("--out", o.out, "Sparse label JSON")->required();
        s->add_option("--reference", o.reference, "Raster whose grid defines the patch");
        s->add_option("--origin-x", o.origin_x, "Patch origin x (without --reference)")->capture_default_str();
        s->add_option("--origin-y", o.origin_y, "Patch origin y (without --reference)")->capture_default_str();
        s->add_option("--pixel-size", o.pixel_size, "Pixel size (without --reference)")->capture_default_str();
        s->add_option("--width", o.width, "Patch width in pixels (without --reference)");
        s->add_option("--height", o.height, "Patch height in pixels (without --reference)");
        s->add_option("--collision", o.collision, "Rule for shots of one track on one pixel: max | first")
            ->transform(enum_map<CollisionRule>({{"max", CollisionRule::keep_max}, {"first", CollisionRule::keep_first}}))
            ->option_text("RULE [max]");
    }
    {
        auto* s = app.add_subcommand("split", "Tile-disjoint train/val/test assignment and optional sample weights");
        auto& o = c.split;
        s->add_option("--tiles", o.tiles, "CSV with a tile_id column")->required();
        s->add_option("--out", o.out, "Split manifest CSV (tile_id,split)")->required();
        s->add_option("--ratios", o.ratios, "Train, validation, and test fractions")->expected(3)->capture_default_str();
        s->add_option("--seed", o.seed, "Hash seed")->capture_default_str();
        s->add_option("--patch-stats", o.patch_stats, "CSV with patch_id,mean_height for sample weights");
        s->add_option("--weights-out", o.weights_out, "Weight table CSV (patch_id,weight)");
        s->add_option("--bin-width", o.weights.bin_width, "Height bin width for weights, m")->capture_default_str();
        s->add_option("--min-weight", o.weights.min_weight, "Lower clip before normalization")->capture_default_str();
        s->add_option("--max-weight", o.weights.max_weight, "Upper clip before normalization")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("loss", "Evaluate the shift-resilient or unshifted loss of a prediction");
        auto& o = c.loss;
        s->add_option("--pred", o.pred, "Prediction raster (band 0)")->required();
        s->add_option("--labels", o.labels, "Sparse label JSON")->required();
        s->add_option("--out", o.out, "Loss report JSON")->required();
        s->add_option("--gradient-out", o.gradient_out, "Optional gradient raster");
        s->add_option("--mode", o.mode, "shifted | non-shifted")
            ->transform(enum_map<LossMode>({{"shifted", LossMode::shifted}, {"non-shifted", LossMode::non_shifted}}))
            ->option_text("MODE [shifted]");
        s->add_option("--radius", o.loss.radius, "Shift radius in pixels")->capture_default_str();
        s->add_option("--pixel-loss", o.pixel_loss, "l1 | l2 | huber")
            ->transform(enum_map<PixelLossKind::Type>({{"l1", PixelLossKind::Type::l1},
                                                       {"l2", PixelLossKind::Type::l2},
                                                       {"huber", PixelLossKind::Type::huber}}))
            ->option_text("KIND [huber]");
        s->add_option("--huber-delta", o.huber_delta, "Huber cutoff, m")->capture_default_str();
        s->add_option("--min-track-size", o.min_track_size, "Tracks with fewer measurements are not shifted")
            ->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("eval", "Error metrics, height bins, and scatter density");
        auto& o = c.eval;
        s->add_option("--out", o.out, "Metrics report JSON")->required();
        s->add_option("--pred", o.pred, "Prediction raster (band 0), used with --labels");
        s->add_option("--labels", o.labels, "Sparse label JSON, used with --pred");
        s->add_option("--pairs", o.pairs, "CSV with prediction,label columns");
        s->add_option("--filter-label-gt", o.filter_label_gt, "Keep pairs whose label exceeds this height, m");
        s->add_flag("--bins", o.bins, "Write per-bin error statistics to <out>.bins.csv");
        s->add_flag("--scatter", o.scatter, "Write scatter density to <out>.scatter.csv");
        s->add_option("--bin-width", o.bin_width, "Label bin width, m")->capture_default_str();
        s->add_option("--max-height", o.max_height, "Upper end of bins and scatter range, m")->capture_default_str();
        s->add_option("--scatter-cell", o.scatter_cell, "Scatter cell size, m")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("tile-plan", "Core/context tiling of an extent as JSON");
        auto& o = c.tile_plan;
        s->add_option("--out", o.out, "Plan JSON")->required();
        s->add_option("--input", o.input, "Raster whose extent is tiled");
        s->add_option("--width", o.width, "Extent width (without --input)");
        s->add_option("--height", o.height, "Extent height (without --input)");
        s->add_option("--core-size", o.core_size, "Core tile size, pixels")->capture_default_str();
        s->add_option("--border", o.border, "Context border on each side, pixels")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("predict", "Tiled inference with a built-in predictor, mosaicked");
        auto& o = c.predict;
        s->add_option("--input", o.input, "Input raster")->required();
        s->add_option("--out", o.out, "Output height raster")->required();
        s->add_option("--predictor", o.predictor, "identity | constant | linear")
            ->transform(enum_map<PredictorKind>({{"identity", PredictorKind::identity},
                                                 {"constant", PredictorKind::constant},
                                                 {"linear", PredictorKind::linear}}))
            ->option_text("KIND [identity]");
        s->add_option("--band", o.band, "Band returned by the identity predictor")->capture_default_str();
        s->add_option("--value", o.value, "Value of the constant predictor")->capture_default_str();
        s->add_option("--weights", o.weights, "Per-band weights of the linear predictor");
        s->add_option("--bias", o.bias, "Bias of the linear predictor")->capture_default_str();
        s->add_option("--core-size", o.core_size, "Core tile size, pixels")->capture_default_str();
        s->add_option("--border", o.border, "Context border on each side, pixels")->capture_default_str();
        s->add_option("--threads", o.threads, "Worker threads")->capture_default_str();
    }
    {
        auto* s = app.add_subcommand("synth", "Write a deterministic synthetic fixture directory");
        auto& o = c.synth;
        s->add_option("--out", o.out, "Output directory")->required();
        s->add_option("--seed", o.synth.seed, "Generator seed")->capture_default_str();
        s->add_option("--width", o.synth.width, "Patch width, pixels")->capture_default_str();
        s->add_option("--height", o.synth.height, "Patch height, pixels")->capture_default_str();
        s->add_option("--pixel-size", o.synth.pixel_size, "Pixel size, m")->capture_default_str();
        s->add_option("--tracks", o.synth.tracks, "Number of GEDI tracks")->capture_default_str();
        s->add_option("--shift-radius", o.synth.shift_radius, "Radius of planted track shifts, pixels")
            ->capture_default_str();
        s->add_option("--reject-fraction", o.synth.reject_fraction, "Share of extra shots failing a filter")
            ->capture_default_str();
        s->add_option("--s2-scenes", o.synth.s2_scenes, "Optical scenes (the last one overcast)")->capture_default_str();
        s->add_option("--s1-scenes-per-orbit", o.synth.s1_scenes_per_orbit, "Radar scenes per orbit direction")
            ->capture_default_str();
    }
}

std::string error_kind(int code) {
    switch (code) {
        case exit_usage: return "usage";
        case exit_numerical: return "numerical";
        default: return "input";
    }
}

int fail(std::ostream& err, const std::string& stage, int code, const std::string& cause) {
    json j;
    j["error"] = {{"stage", stage}, {"kind", error_kind(code)}, {"cause", cause}};
    err << j.dump() << '\n';
    return code;
}

}  // namespace

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return "fnv1a64:" + hex64(h);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Canopy-height data pipeline: composites, GEDI labels, terrain filtering, shift-resilient loss, "
                 "splits, tiled inference, and evaluation"};
    app.name("chm");
    PipelineConfig cfg;
    build(app, cfg);

    std::vector<const char*> argv{"chm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run;
    run.subcommand = sub->get_name();
    run.effective_config = sub->config_to_str(true, false);
    const std::string& name = run.subcommand;
    try {
        json summary;
        fs::path provenance;
        if (name == "composite") {
            summary = do_composite(cfg.composite, run);
            provenance = sibling(cfg.composite.out, ".provenance.json");
        } else if (name == "gedi-filter") {
            summary = do_gedi_filter(cfg.gedi_filter, run);
            provenance = sibling(cfg.gedi_filter.out, ".provenance.json");
        } else if (name == "slope-filter") {
            summary = do_slope_filter(cfg.slope_filter, run);
            provenance = sibling(cfg.slope_filter.out, ".provenance.json");
        } else if (name == "rasterize") {
            summary = do_rasterize(cfg.rasterize, run);
            provenance = sibling(cfg.rasterize.out, ".provenance.json");
        } else if (name == "split") {
            summary = do_split(cfg.split, run);
            provenance = sibling(cfg.split.out, ".provenance.json");
        } else if (name == "loss") {
            summary = do_loss(cfg.loss, run);
            provenance = sibling(cfg.loss.out, ".provenance.json");
        } else if (name == "eval") {
            summary = do_eval(cfg.eval, run);
            provenance = sibling(cfg.eval.out, ".provenance.json");
        } else if (name == "tile-plan") {
            summary = do_tile_plan(cfg.tile_plan, run);
            provenance = sibling(cfg.tile_plan.out, ".provenance.json");
        } else if (name == "predict") {
            summary = do_predict(cfg.predict, run);
            provenance = sibling(cfg.predict.out, ".provenance.json");
        } else {
            summary = do_synth(cfg.synth, run);
            provenance = fs::path(cfg.synth.out) / "provenance.json";
        }
        write_provenance(provenance, run);
        out << summary.dump() << '\n';
        return exit_ok;
    } catch (const NumericalError& e) {
        return fail(err, name, exit_numerical, e.what());
    } catch (const Error& e) {
        return fail(err, name, exit_input, e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(err, name, exit_input, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(err, name, exit_input, e.what());
    } catch (const std::exception& e) {
        return fail(err, name, exit_input, e.what());
    }
}

}  // namespace chm::cli
