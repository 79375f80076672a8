#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2a/rng.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

// Label value excluded from every loss and metric.
inline constexpr std::uint16_t IGNORE_LABEL = 65535;

struct world_error : std::runtime_error {
    explicit world_error(const std::string& msg) : std::runtime_error("world error: " + msg) {}
};

struct ClassDef {
    std::uint16_t id = 0;
    std::string name;
    std::array<double, 3> prototype{0.0, 0.0, 0.0};
};

// Ordered class list with contiguous ids starting at a per-space base, so the
// source and target spaces never share an id.
struct LabelSpace {
    std::string name;
    std::vector<ClassDef> classes;

    std::size_t num_classes() const { return classes.size(); }

    // Position of a class id inside this space, or npos.
    std::size_t index_of(std::uint16_t id) const {
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i].id == id) return i;
        return static_cast<std::size_t>(-1);
    }

    void validate() const {
        if (classes.empty()) throw world_error("label space '" + name + "' has no classes");
        for (std::size_t i = 1; i < classes.size(); ++i)
            if (classes[i].id != classes[i - 1].id + 1)
                throw world_error("label space '" + name + "' ids not contiguous");
    }
};

enum class DomainTag { source, bridge, target_labeled, target_unlabeled, target_val };

inline const char* domain_tag_name(DomainTag t) {
    switch (t) {
        case DomainTag::source: return "source";
        case DomainTag::bridge: return "bridge";
        case DomainTag::target_labeled: return "target_labeled";
        case DomainTag::target_unlabeled: return "target_unlabeled";
        case DomainTag::target_val: return "target_val";
    }
    return "?";
}

struct DomainDataset {
    DomainTag domain_tag = DomainTag::source;
    Tensor images;  // N x H x W x 3
    Tensor labels;  // N x H x W, class ids or IGNORE_LABEL
    LabelSpace label_space;
    std::uint64_t seed = 0;

    std::size_t num_images() const { return images.dims.empty() ? 0 : images.dims[0]; }

    Tensor image_at(std::size_t n) const {
        const std::size_t h = images.dims[1], w = images.dims[2];
        Tensor out({h, w, 3});
        std::copy_n(&images.data[n * h * w * 3], h * w * 3, out.data.begin());
        return out;
    }

    Tensor labels_at(std::size_t n) const {
        const std::size_t h = labels.dims[1], w = labels.dims[2];
        Tensor out({h, w});
        std::copy_n(&labels.data[n * h * w], h * w, out.data.begin());
        return out;
    }
};

// Affine map applied to generative features: y = A p + b.
struct DomainAffine {
    std::array<std::array<double, 3>, 3> a{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    std::array<double, 3> b{0, 0, 0};

    std::array<double, 3> apply(const std::array<double, 3>& p) const {
        std::array<double, 3> out{};
        for (int i = 0; i < 3; ++i)
            out[i] = a[i][0] * p[0] + a[i][1] * p[1] + a[i][2] * p[2] + b[i];
        return out;
    }
};

struct WorldSpec {
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t n_source = 200;
    std::size_t n_bridge = 100;
    std::size_t n_target = 100;
    std::size_t n_val = 100;
    double sigma = 0.04;  // labeled fraction of the n_target pool

    std::size_t n_source_classes = 4;
    std::size_t n_target_classes = 3;
    std::size_t n_related = 2;  // target classes 0..n_related-1 pair with source 0..n_related-1

    // Explicit correspondence map: relation[i] is the source class index the
    // i-th target class is related to, or -1 for unrelated. Empty uses the
    // n_related convention above.
    std::vector<int> relation;

    // Guillotine partition granularity. min_region 3 keeps enough encoder
    // cells single-class for cluster-driven transfer to win at desk scale.
    std::size_t regions_per_image = 6;
    std::size_t min_region = 3;

    // Generative geometry, calibrated so that a model trained on the few
    // labeled target images alone confuses related cross-domain classes while
    // the transfer modes separate them. Related target prototypes sit within
    // epsilon of their source counterpart; unrelated ones farther than
    // 5*epsilon from every source prototype.
    double prototype_scale = 0.5;
    double epsilon = 0.08;
    double noise_std = 0.35;

    DomainAffine source_affine;  // identity by default
    DomainAffine bridge_affine = default_real_affine();
    DomainAffine target_affine = default_real_affine();

    // The "real appearance" analogue shared by bridge and target domains.
    static DomainAffine default_real_affine() {
        DomainAffine t;
        t.a = {{{0.90, 0.20, -0.10}, {-0.20, 0.85, 0.15}, {0.10, -0.15, 1.10}}};
        t.b = {0.50, -0.40, 0.30};
        return t;
    }

    // The effective correspondence map (always n_target_classes long).
    std::vector<int> correspondence() const {
        if (!relation.empty()) return relation;
        std::vector<int> out(n_target_classes, -1);
        for (std::size_t i = 0; i < n_related; ++i) out[i] = static_cast<int>(i);
        return out;
    }

    void validate() const {
        if (n_source_classes == 0 || n_target_classes == 0)
            throw world_error("degenerate spec: zero classes");
        if (n_related > n_target_classes || n_related > n_source_classes)
            throw world_error("n_related exceeds class count");
        if (!relation.empty()) {
            if (relation.size() != n_target_classes)
                throw world_error("relation map must list every target class");
            for (int r : relation)
                if (r < -1 || r >= static_cast<int>(n_source_classes))
                    throw world_error("relation entry " + std::to_string(r) + " out of range");
        }
        if (sigma < 0.0 || sigma > 1.0) throw world_error("sigma must be in [0, 1]");
        if (height < 2 * min_region || width < 2 * min_region)
            throw world_error("grid too small for min_region");
        if (n_source == 0 || n_bridge == 0 || n_target == 0 || n_val == 0)
            throw world_error("every domain needs at least one image");
        if (epsilon <= 0.0) throw world_error("epsilon must be positive");
    }
};

struct World {
    WorldSpec spec;
    std::uint64_t seed = 0;
    LabelSpace source_space;
    LabelSpace target_space;
    // relation[i] = source class id paired with target class id target_space.classes[i].id,
    // or -1 when unrelated.
    std::vector<int> relation;
    DomainDataset source;
    DomainDataset bridge;
    DomainDataset target_labeled;
    DomainDataset target_unlabeled;
    DomainDataset target_val;
};

namespace detail {

struct Rect {
    std::size_t y0, x0, y1, x1;  // half-open
    std::size_t area() const { return (y1 - y0) * (x1 - x0); }
};

// Split the largest rectangle until the target region count is reached.
// Cut positions keep both halves at least min_region wide.
inline std::vector<Rect> guillotine_partition(std::size_t h, std::size_t w, std::size_t regions,
                                              std::size_t min_region, SplitMix64& rng) {
    std::vector<Rect> rects{{0, 0, h, w}};
    while (rects.size() < regions) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < rects.size(); ++i)
            if (rects[i].area() > rects[best].area()) best = i;
        Rect r = rects[best];
        const std::size_t rh = r.y1 - r.y0;
        const std::size_t rw = r.x1 - r.x0;
        const bool can_h = rh >= 2 * min_region;
        const bool can_v = rw >= 2 * min_region;
        if (!can_h && !can_v) break;
        bool horizontal;
        if (can_h && can_v)
            horizontal = rh > rw ? true : (rw > rh ? false : rng.uniform() < 0.5);
        else
            horizontal = can_h;
        if (horizontal) {
            const std::size_t cut = r.y0 + min_region + rng.index(rh - 2 * min_region + 1);
            rects[best] = {r.y0, r.x0, cut, r.x1};
            rects.push_back({cut, r.x0, r.y1, r.x1});
        } else {
            const std::size_t cut = r.x0 + min_region + rng.index(rw - 2 * min_region + 1);
            rects[best] = {r.y0, r.x0, r.y1, cut};
            rects.push_back({r.y0, cut, r.y1, r.x1});
        }
    }
    return rects;
}

inline DomainDataset render_domain(const WorldSpec& spec, DomainTag tag, const LabelSpace& space,
                                   const DomainAffine& affine, std::size_t n_images,
                                   SplitMix64 rng, std::uint64_t seed) {
    DomainDataset ds;
    ds.domain_tag = tag;
    ds.label_space = space;
    ds.seed = seed;
    const std::size_t h = spec.height, w = spec.width;
    ds.images = Tensor({n_images, h, w, 3});
    ds.labels = Tensor({n_images, h, w});
    for (std::size_t n = 0; n < n_images; ++n) {
        auto rects = guillotine_partition(h, w, spec.regions_per_image, spec.min_region, rng);
        for (const auto& r : rects) {
            const std::size_t cls = rng.index(space.num_classes());
            const auto base = affine.apply(space.classes[cls].prototype);
            for (std::size_t y = r.y0; y < r.y1; ++y)
                for (std::size_t x = r.x0; x < r.x1; ++x) {
                    ds.labels.at(n, y, x) = static_cast<double>(space.classes[cls].id);
                    for (std::size_t c = 0; c < 3; ++c)
                        ds.images.at(n, y, x, c) = base[c] + spec.noise_std * rng.gaussian();
                }
        }
    }
    return ds;
}

}  // namespace detail

// Deterministic shuffled split of a target pool: labeled count = round(sigma*N).
inline std::pair<DomainDataset, DomainDataset> split_target(const DomainDataset& dataset,
                                                            double sigma, std::uint64_t seed) {
    if (sigma < 0.0 || sigma > 1.0) throw world_error("split_target: sigma out of [0, 1]");
    const std::size_t n = dataset.num_images();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng = stream_for(seed, 0x51137);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const std::size_t n_labeled =
        static_cast<std::size_t>(std::llround(sigma * static_cast<double>(n)));

    auto take = [&](DomainTag tag, std::size_t begin, std::size_t end) {
        DomainDataset out;
        out.domain_tag = tag;
        out.label_space = dataset.label_space;
        out.seed = seed;
        const std::size_t h = dataset.images.dims[1], w = dataset.images.dims[2];
        out.images = Tensor({end - begin, h, w, 3});
        out.labels = Tensor({end - begin, h, w});
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t src = order[i];
            std::copy_n(&dataset.images.data[src * h * w * 3], h * w * 3,
                        &out.images.data[(i - begin) * h * w * 3]);
            std::copy_n(&dataset.labels.data[src * h * w], h * w,
                        &out.labels.data[(i - begin) * h * w]);
        }
        return out;
    };
    return {take(DomainTag::target_labeled, 0, n_labeled),
            take(DomainTag::target_unlabeled, n_labeled, n)};
}

inline World generate_world(const WorldSpec& spec, std::uint64_t seed) {
    spec.validate();
    World world;
    world.spec = spec;
    world.seed = seed;

    // Source prototypes: well-separated directions at prototype_scale.
    static const std::array<std::array<double, 3>, 8> directions = {{
        {1, 0, 0},
        {0, 1, 0},
        {0, 0, 1},
        {-0.577350269189626, -0.577350269189626, -0.577350269189626},
        {0.707106781186548, -0.707106781186548, 0},
        {0, 0.707106781186548, -0.707106781186548},
        {-0.707106781186548, 0, 0.707106781186548},
        {0.577350269189626, 0.577350269189626, -0.577350269189626},
    }};
    if (spec.n_source_classes > directions.size() || spec.n_target_classes > directions.size())
        throw world_error("too many classes for the prototype table");

    world.source_space.name = "source";
    for (std::size_t i = 0; i < spec.n_source_classes; ++i) {
        ClassDef c;
        c.id = static_cast<std::uint16_t>(i);
        c.name = "s" + std::to_string(i);
        for (int k = 0; k < 3; ++k) c.prototype[k] = spec.prototype_scale * directions[i][k];
        world.source_space.classes.push_back(c);
    }

    SplitMix64 proto_rng = stream_for(seed, 0x9807);
    world.target_space.name = "target";
    const std::vector<int> correspondence = spec.correspondence();
    world.relation.assign(spec.n_target_classes, -1);
    for (std::size_t i = 0; i < spec.n_target_classes; ++i) {
        ClassDef c;
        c.id = static_cast<std::uint16_t>(spec.n_source_classes + i);
        c.name = "t" + std::to_string(i);
        if (correspondence[i] >= 0) {
            // Offset from the paired source prototype by 0.9*epsilon.
            const std::size_t pair = static_cast<std::size_t>(correspondence[i]);
            std::array<double, 3> dir{proto_rng.gaussian(), proto_rng.gaussian(),
                                      proto_rng.gaussian()};
            double nrm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            if (nrm < 1e-12) { dir = {1, 0, 0}; nrm = 1.0; }
            for (int k = 0; k < 3; ++k)
                c.prototype[k] = world.source_space.classes[pair].prototype[k] +
                                 0.9 * spec.epsilon * dir[k] / nrm;
            world.relation[i] = static_cast<int>(world.source_space.classes[pair].id);
        } else {
            // Push away from every source prototype until the margin holds.
            std::array<double, 3> dir{-directions[i % directions.size()][0],
                                      -directions[(i + 3) % directions.size()][1],
                                      -directions[(i + 5) % directions.size()][2]};
            double nrm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
            if (nrm < 1e-12) { dir = {-1, -1, -1}; nrm = std::sqrt(3.0); }
            double radius = spec.prototype_scale;
            for (;;) {
                for (int k = 0; k < 3; ++k) c.prototype[k] = radius * dir[k] / nrm;
                double min_dist = 1e300;
                for (const auto& s : world.source_space.classes) {
                    double d2 = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        const double dd = c.prototype[k] - s.prototype[k];
                        d2 += dd * dd;
                    }
                    min_dist = std::min(min_dist, std::sqrt(d2));
                }
                if (min_dist > 5.0 * spec.epsilon) break;
                radius *= 1.5;
                if (radius > 1e6) throw world_error("cannot place unrelated prototype");
            }
        }
        world.target_space.classes.push_back(c);
    }
    world.source_space.validate();
    world.target_space.validate();

    world.source = detail::render_domain(spec, DomainTag::source, world.source_space,
                                         spec.source_affine, spec.n_source,
                                         stream_for(seed, 0x100), seed);
    world.bridge = detail::render_domain(spec, DomainTag::bridge, world.source_space,
                                         spec.bridge_affine, spec.n_bridge,
                                         stream_for(seed, 0x200), seed);
    DomainDataset target_pool = detail::render_domain(spec, DomainTag::target_unlabeled,
                                                      world.target_space, spec.target_affine,
                                                      spec.n_target, stream_for(seed, 0x300), seed);
    auto split = split_target(target_pool, spec.sigma, seed);
    world.target_labeled = std::move(split.first);
    world.target_unlabeled = std::move(split.second);
    world.target_val = detail::render_domain(spec, DomainTag::target_val, world.target_space,
                                             spec.target_affine, spec.n_val,
                                             stream_for(seed, 0x400), seed);
    return world;
}

}  // namespace c2a
