#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgi/tensor.hpp"

namespace lgi::toy {

enum class ShapeClass : int { square = 0, disk = 1, cross = 2 };
inline constexpr int kNumClasses = 3;
const char* class_name(ShapeClass c);

// Axis-aligned box in pixels, [x_min, x_max) x [y_min, y_max).
struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double area() const;
    bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct ToyObject {
    ShapeClass cls = ShapeClass::square;
    int x0 = 0; // top-left pixel of the size x size footprint
    int y0 = 0;
    int size = 0;
    float color[3] = {0, 0, 0};

    double cx() const { return x0 + 0.5 * size; }
    double cy() const { return y0 + 0.5 * size; }
    Box box() const;
    // Whether pixel (px, py) belongs to the shape template.
    bool covers(int px, int py) const;
};

struct SceneOptions {
    int image_size = 128;
    int min_objects = 3;
    int max_objects = 8;
    int min_size = 4;
    int max_size = 16;
    double noise_sigma = 0.05;
};

struct ToyScene {
    Tensor image; // (1, 3, size, size), values in [0, 1]
    std::vector<ToyObject> objects;
    float background[3] = {0, 0, 0};
    double noise_sigma = 0.0;
};

// Objects never overlap (footprints keep a 1 px gap) and each object colour
// differs from the background by 0.25 to 0.5 in every channel.
ToyScene gen_scene(Rng& rng, const SceneOptions& opts = {});

// Scene i draws from Rng(seed).fork(i), so any subset can be regenerated.
std::vector<ToyScene> gen_dataset(std::uint64_t seed, int count, const SceneOptions& opts = {});

// Stacks images of scenes[idx...] into (len, 3, size, size).
Tensor stack_images(std::span<const ToyScene> scenes, std::span<const std::size_t> idx);

} // namespace lgi::toy
