#include "lgi/toy/scene.hpp"

#include <algorithm>
#include <cmath>

namespace lgi::toy {

const char* class_name(ShapeClass c)
{
    switch (c) {
    case ShapeClass::square:
        return "square";
    case ShapeClass::disk:
        return "disk";
    case ShapeClass::cross:
        return "cross";
    }
    return "?";
}

double Box::area() const
{
    return std::max(0.0, x_max - x_min) * std::max(0.0, y_max - y_min);
}

double iou(const Box& a, const Box& b)
{
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Box ToyObject::box() const
{
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + size),
            static_cast<double>(y0 + size)};
}

bool ToyObject::covers(int px, int py) const
{
    if (px < x0 || py < y0 || px >= x0 + size || py >= y0 + size) {
        return false;
    }
    const double dx = px + 0.5 - cx();
    const double dy = py + 0.5 - cy();
    switch (cls) {
    case ShapeClass::square:
        return true;
    case ShapeClass::disk: {
        const double r = 0.5 * size;
        return dx * dx + dy * dy <= r * r;
    }
    case ShapeClass::cross: {
        const double half = 0.5 * std::max(2, size / 3);
        return std::abs(dx) < half || std::abs(dy) < half;
    }
    }
    return false;
}

namespace {

bool overlaps(const ToyObject& a, const ToyObject& b)
{
    // 1 px gap between footprints
    return a.x0 < b.x0 + b.size + 1 && b.x0 < a.x0 + a.size + 1 && a.y0 < b.y0 + b.size + 1 &&
           b.y0 < a.y0 + a.size + 1;
}

} // namespace

ToyScene gen_scene(Rng& rng, const SceneOptions& o)
{
    if (o.min_objects < 0 || o.max_objects < o.min_objects || o.min_size < 1 || o.max_size < o.min_size ||
        o.max_size >= o.image_size) {
        throw ConfigError("gen_scene: inconsistent scene options");
    }
    ToyScene s;
    s.noise_sigma = o.noise_sigma;
    for (float& b : s.background) {
        b = static_cast<float>(rng.uniform(0.2, 0.8));
    }
    const auto count = rng.uniform_int(o.min_objects, o.max_objects);
    while (static_cast<std::int64_t>(s.objects.size()) < count) {
        ToyObject obj;
        obj.cls = static_cast<ShapeClass>(rng.uniform_int(0, kNumClasses - 1));
        obj.size = static_cast<int>(rng.uniform_int(o.min_size, o.max_size));
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            obj.x0 = static_cast<int>(rng.uniform_int(0, o.image_size - obj.size));
            obj.y0 = static_cast<int>(rng.uniform_int(0, o.image_size - obj.size));
            placed = std::none_of(s.objects.begin(), s.objects.end(),
                                  [&](const ToyObject& other) { return overlaps(obj, other); });
        }
        if (!placed) {
            throw ConfigError("gen_scene: could not place objects without overlap");
        }
        for (int ch = 0; ch < 3; ++ch) {
            const float delta = static_cast<float>(rng.uniform(0.25, 0.5));
            const float bg = s.background[ch];
            const bool up = bg + delta <= 1.0f && (bg - delta < 0.0f || rng.uniform() < 0.5);
            obj.color[ch] = up ? bg + delta : bg - delta;
        }
        s.objects.push_back(obj);
    }

    const int n = o.image_size;
    s.image = Tensor({1, 3, n, n});
    for (int ch = 0; ch < 3; ++ch) {
        float* plane = s.image.plane(0, ch);
        std::fill(plane, plane + n * n, s.background[ch]);
        for (const ToyObject& obj : s.objects) {
            for (int y = obj.y0; y < obj.y0 + obj.size; ++y) {
                for (int x = obj.x0; x < obj.x0 + obj.size; ++x) {
                    if (obj.covers(x, y)) {
                        plane[y * n + x] = obj.color[ch];
                    }
                }
            }
        }
    }
    if (o.noise_sigma > 0.0) {
        for (float& v : s.image.data()) {
            v = std::clamp(v + static_cast<float>(o.noise_sigma * rng.normal()), 0.0f, 1.0f);
        }
    }
    return s;
}

std::vector<ToyScene> gen_dataset(std::uint64_t seed, int count, const SceneOptions& opts)
{
    if (count < 0) {
        throw ConfigError("gen_dataset: count must be non-negative");
    }
    const Rng root(seed);
    std::vector<ToyScene> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng r = root.fork(static_cast<std::uint64_t>(i));
        out.push_back(gen_scene(r, opts));
    }
    return out;
}

Tensor stack_images(std::span<const ToyScene> scenes, std::span<const std::size_t> idx)
{
    if (idx.empty()) {
        throw ShapeError("stack_images: empty selection");
    }
    const Shape s0 = scenes[idx[0]].image.shape();
    Tensor out({static_cast<std::int64_t>(idx.size()), s0.c, s0.h, s0.w});
    const std::int64_t per = s0.c * s0.h * s0.w;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const Tensor& img = scenes[idx[k]].image;
        require_same_shape(img.shape(), s0, "stack_images");
        std::copy(img.raw(), img.raw() + per, out.raw() + static_cast<std::int64_t>(k) * per);
    }
    return out;
}

} // namespace lgi::toy
