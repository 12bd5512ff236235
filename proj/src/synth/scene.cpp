#include "synth/scene.hpp"

#include <cmath>

#include "util/errors.hpp"

namespace coseq::synth {

const char* shape_name(Shape s) {
    switch (s) {
        case Shape::circle: return "circle";
        case Shape::square: return "square";
        case Shape::triangle: return "triangle";
        case Shape::bar: return "bar";
    }
    return "?";
}

std::optional<Shape> shape_from_name(const std::string& name) {
    for (int i = 0; i < kShapeCount; ++i) {
        if (name == shape_name(static_cast<Shape>(i))) return static_cast<Shape>(i);
    }
    return std::nullopt;
}

Palette Palette::standard() {
    Palette p;
    p.entity_colors = {
        {"red", 220, 50, 50},    {"orange", 235, 140, 40}, {"yellow", 230, 220, 60},
        {"green", 70, 200, 80},  {"cyan", 70, 210, 210},   {"blue", 60, 90, 220},
        {"purple", 150, 70, 200}, {"white", 235, 235, 235},
    };
    p.backgrounds = {
        {"slate", 40, 40, 48},
        {"charcoal", 22, 22, 22},
        {"olive", 46, 54, 36},
        {"navy", 20, 26, 54},
    };
    return p;
}

int Palette::color_index(const std::string& name) const {
    for (size_t i = 0; i < entity_colors.size(); ++i) {
        if (entity_colors[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

int Palette::background_index(const std::string& name) const {
    for (size_t i = 0; i < backgrounds.size(); ++i) {
        if (backgrounds[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

int entity_size_for(int color, Shape shape) {
    return ((color + static_cast<int>(shape)) % 2) + 1;
}

const Entity* Workspace::find_by_id(int id) const {
    for (const auto& e : entities) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

const Entity* Workspace::find_at(int row, int col) const {
    for (const auto& e : entities) {
        if (e.row == row && e.col == col) return &e;
    }
    return nullptr;
}

const Entity* Workspace::find(int color, Shape shape, int row, int col) const {
    const Entity* e = find_at(row, col);
    if (e != nullptr && e->color == color && e->shape == shape) return e;
    return nullptr;
}

bool Workspace::cell_free(int row, int col) const { return find_at(row, col) == nullptr; }

std::vector<std::pair<int, int>> Workspace::free_cells() const {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < kGridCells; ++r) {
        for (int c = 0; c < kGridCells; ++c) {
            if (cell_free(r, c)) out.emplace_back(r, c);
        }
    }
    return out;
}

const char* action_kind_name(ActionKind k) {
    switch (k) {
        case ActionKind::add: return "add";
        case ActionKind::recolor: return "recolor";
        case ActionKind::combine: return "combine";
        case ActionKind::transform: return "transform";
        case ActionKind::set_background: return "set_background";
    }
    return "?";
}

static std::string ref_str(const EntityRef& r) {
    return "color " + std::to_string(r.color) + " shape " +
           std::string(shape_name(r.shape)) + " at r" + std::to_string(r.row) + "c" +
           std::to_string(r.col);
}

Workspace apply_action(const Workspace& w, const Action& a) {
    Workspace out = w;
    auto find_mut = [&out](const EntityRef& ref) -> Entity* {
        for (auto& e : out.entities) {
            if (e.row == ref.row && e.col == ref.col && e.color == ref.color &&
                e.shape == ref.shape) {
                return &e;
            }
        }
        return nullptr;
    };
    switch (a.kind) {
        case ActionKind::add: {
            if (static_cast<int>(out.entities.size()) >= kMaxEntities) {
                throw DomainError("apply_action: entity limit reached");
            }
            if (!out.cell_free(a.row, a.col)) {
                throw DomainError("apply_action: cell occupied at r" + std::to_string(a.row) +
                                  "c" + std::to_string(a.col));
            }
            Entity e;
            e.id = out.next_entity_id++;
            e.shape = a.shape;
            e.color = a.color;
            e.row = a.row;
            e.col = a.col;
            e.size = entity_size_for(a.color, a.shape);
            out.entities.push_back(e);
            out.last_touched = e.id;
            break;
        }
        case ActionKind::recolor: {
            Entity* e = find_mut(a.target_a);
            if (e == nullptr) {
                throw DomainError("apply_action: no entity " + ref_str(a.target_a));
            }
            e->color = a.color;
            e->size = entity_size_for(e->color, e->shape);
            out.last_touched = e->id;
            break;
        }
        case ActionKind::transform: {
            Entity* e = find_mut(a.target_a);
            if (e == nullptr) {
                throw DomainError("apply_action: no entity " + ref_str(a.target_a));
            }
            e->shape = a.shape;
            e->size = entity_size_for(e->color, e->shape);
            out.last_touched = e->id;
            break;
        }
        case ActionKind::combine: {
            Entity* ea = find_mut(a.target_a);
            Entity* eb = find_mut(a.target_b);
            if (ea == nullptr) {
                throw DomainError("apply_action: no entity " + ref_str(a.target_a));
            }
            if (eb == nullptr || eb == ea) {
                throw DomainError("apply_action: no entity " + ref_str(a.target_b));
            }
            int ida = ea->id, idb = eb->id;
            std::vector<Entity> kept;
            for (const auto& e : out.entities) {
                if (e.id != ida && e.id != idb) kept.push_back(e);
            }
            out.entities = std::move(kept);
            Entity r;
            r.id = out.next_entity_id++;
            r.shape = a.shape;
            r.color = a.color;
            r.row = a.row;
            r.col = a.col;
            r.size = entity_size_for(r.color, r.shape);
            if (!out.cell_free(r.row, r.col)) {
                throw DomainError("apply_action: combine target cell occupied");
            }
            out.entities.push_back(r);
            out.last_touched = r.id;
            out.last_mixture = r.id;
            break;
        }
        case ActionKind::set_background: {
            out.background_id = a.background_id;
            break;
        }
    }
    return out;
}

util::Image render_scene(const Workspace& w, int width, int height, const Palette& palette) {
    if (width != height || width % kGridCells != 0) {
        throw ConfigError("render_scene: image size must be square and divisible by 4");
    }
    if (w.background_id < 0 ||
        w.background_id >= static_cast<int>(palette.backgrounds.size())) {
        throw DomainError("render_scene: background index out of range");
    }
    const NamedColor& bg = palette.backgrounds[static_cast<size_t>(w.background_id)];
    util::Image img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            img.at(x, y, 0) = static_cast<float>(bg.r) / 255.0f;
            img.at(x, y, 1) = static_cast<float>(bg.g) / 255.0f;
            img.at(x, y, 2) = static_cast<float>(bg.b) / 255.0f;
        }
    }
    float cell = static_cast<float>(width) / kGridCells;
    for (const auto& e : w.entities) {
        const NamedColor& col = palette.entity_colors[static_cast<size_t>(e.color)];
        float cx = (static_cast<float>(e.col) + 0.5f) * cell;
        float cy = (static_cast<float>(e.row) + 0.5f) * cell;
        float ext = (e.size == 1 ? 0.32f : 0.48f) * cell;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                float dx = static_cast<float>(x) + 0.5f - cx;
                float dy = static_cast<float>(y) + 0.5f - cy;
                bool inside = false;
                switch (e.shape) {
                    case Shape::circle:
                        inside = dx * dx + dy * dy <= ext * ext;
                        break;
                    case Shape::square:
                        inside = std::fabs(dx) <= ext && std::fabs(dy) <= ext;
                        break;
                    case Shape::triangle:
                        inside = std::fabs(dy) <= ext && std::fabs(dx) <= (dy + ext) * 0.5f;
                        break;
                    case Shape::bar:
                        inside = std::fabs(dy) <= ext * 0.4f && std::fabs(dx) <= ext * 1.9f;
                        break;
                }
                if (inside) {
                    img.at(x, y, 0) = static_cast<float>(col.r) / 255.0f;
                    img.at(x, y, 1) = static_cast<float>(col.g) / 255.0f;
                    img.at(x, y, 2) = static_cast<float>(col.b) / 255.0f;
                }
            }
        }
    }
    return img;
}

}  // namespace coseq::synth
