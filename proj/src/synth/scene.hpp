#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "util/image.hpp"

namespace coseq::synth {

enum class Shape { circle = 0, square, triangle, bar };
constexpr int kShapeCount = 4;
const char* shape_name(Shape s);
std::optional<Shape> shape_from_name(const std::string& name);

struct NamedColor {
    std::string name;
    uint8_t r = 0, g = 0, b = 0;
};

struct Palette {
    std::vector<NamedColor> entity_colors;  // 8 by default
    std::vector<NamedColor> backgrounds;    // 4 by default

    static Palette standard();
    int color_index(const std::string& name) const;       // -1 if unknown
    int background_index(const std::string& name) const;  // -1 if unknown
};

// Entity size is derived, not free: it must be reconstructible from the
// caption text, which never mentions size.
int entity_size_for(int color, Shape shape);

struct Entity {
    int id = -1;
    Shape shape = Shape::circle;
    int color = 0;  // palette index
    int row = 0, col = 0;
    int size = 1;
};

constexpr int kGridCells = 4;   // 4x4 placement grid
constexpr int kMaxEntities = 6;

/// Scene state: a background plus up to kMaxEntities entities on the grid,
/// with bookkeeping for the referring expressions "it" and "the mixture".
struct Workspace {
    int background_id = 0;
    std::vector<Entity> entities;
    int last_touched = -1;  // entity id
    int last_mixture = -1;  // entity id
    int next_entity_id = 0;

    const Entity* find_by_id(int id) const;
    const Entity* find_at(int row, int col) const;
    const Entity* find(int color, Shape shape, int row, int col) const;
    bool cell_free(int row, int col) const;
    std::vector<std::pair<int, int>> free_cells() const;
};

enum class ActionKind { add = 0, recolor, combine, transform, set_background };
const char* action_kind_name(ActionKind k);

/// Explicit entity mention: "the {color} {shape} at r{row}c{col}".
struct EntityRef {
    int color = -1;
    Shape shape = Shape::circle;
    int row = -1, col = -1;

    bool operator==(const EntityRef&) const = default;
};

struct Action {
    ActionKind kind = ActionKind::add;
    int color = -1;               // add/combine: new entity color; recolor: new color
    Shape shape = Shape::circle;  // add/combine: new shape; transform: new shape
    int row = -1, col = -1;       // add/combine: placement cell
    EntityRef target_a;           // recolor/transform/combine
    EntityRef target_b;           // combine only
    int background_id = -1;       // set_background
};

/// Pure state transition. Throws DomainError when the action does not apply
/// (missing entity, occupied cell, entity limit).
Workspace apply_action(const Workspace& w, const Action& a);

/// Pure rasterizer; pixels are palette values, exact multiples of 1/255.
util::Image render_scene(const Workspace& w, int width, int height, const Palette& palette);

}  // namespace coseq::synth
