#include "synth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "util/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coseq::synth {

void CorpusConfig::validate() const {
    if (n_tasks < 1) throw ConfigError("CorpusConfig: n_tasks must be >= 1");
    if (mean_steps < 2.0 || mean_steps > 10.0) {
        throw ConfigError("CorpusConfig: mean_steps must be in [2,10]");
    }
    if (nonlinear_fraction < 0.0 || nonlinear_fraction > 1.0) {
        throw ConfigError("CorpusConfig: nonlinear_fraction must be in [0,1]");
    }
    if (image_width != image_height || image_width < 8 || image_width % kGridCells != 0) {
        throw ConfigError("CorpusConfig: image size must be square, >= 8, divisible by 4");
    }
    if (palette.entity_colors.empty() || palette.backgrounds.empty()) {
        throw ConfigError("CorpusConfig: palette must not be empty");
    }
}

std::vector<int> Task::dependency_graph() const {
    std::vector<int> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.antecedent);
    return out;
}

int Corpus::total_steps() const {
    int n = 0;
    for (const auto& t : tasks) n += static_cast<int>(t.steps.size());
    return n;
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

static RefForm pick_ref_form(const Workspace& base, int entity_id, util::Rng& rng) {
    if (entity_id == base.last_touched && rng.bernoulli(0.55)) return RefForm::it_form;
    if (entity_id == base.last_mixture && rng.bernoulli(0.55)) return RefForm::mixture_form;
    return RefForm::explicit_form;
}

static EntityRef ref_of(const Entity& e) {
    return EntityRef{e.color, e.shape, e.row, e.col};
}

// Sample an action applicable to `base`. Weights are renormalized over the
// available kinds.
static Action sample_action(const Workspace& base, util::Rng& rng, const Palette& pal) {
    int n_entities = static_cast<int>(base.entities.size());
    auto free_cells = base.free_cells();
    int n_colors = static_cast<int>(pal.entity_colors.size());
    int n_bg = static_cast<int>(pal.backgrounds.size());

    struct Option {
        ActionKind kind;
        double weight;
    };
    std::vector<Option> opts;
    if (n_entities < kMaxEntities && !free_cells.empty()) {
        opts.push_back({ActionKind::add, 0.40});
    }
    if (n_entities >= 1) opts.push_back({ActionKind::recolor, 0.18});
    if (n_entities >= 1) opts.push_back({ActionKind::transform, 0.14});
    if (n_entities >= 2) opts.push_back({ActionKind::combine, 0.13});
    if (n_bg >= 2) opts.push_back({ActionKind::set_background, 0.15});

    double total = 0.0;
    for (const auto& o : opts) total += o.weight;
    double pick = rng.uniform_d() * total;
    ActionKind kind = opts.back().kind;
    for (const auto& o : opts) {
        if (pick < o.weight) {
            kind = o.kind;
            break;
        }
        pick -= o.weight;
    }

    Action a;
    a.kind = kind;
    switch (kind) {
        case ActionKind::add: {
            auto [r, c] = free_cells[static_cast<size_t>(rng.uniform_int(
                static_cast<int>(free_cells.size())))];
            a.color = rng.uniform_int(n_colors);
            a.shape = static_cast<Shape>(rng.uniform_int(kShapeCount));
            a.row = r;
            a.col = c;
            break;
        }
        case ActionKind::recolor: {
            const Entity& e = base.entities[static_cast<size_t>(rng.uniform_int(n_entities))];
            a.target_a = ref_of(e);
            a.color = (e.color + 1 + rng.uniform_int(n_colors - 1)) % n_colors;
            break;
        }
        case ActionKind::transform: {
            const Entity& e = base.entities[static_cast<size_t>(rng.uniform_int(n_entities))];
            a.target_a = ref_of(e);
            int s = (static_cast<int>(e.shape) + 1 + rng.uniform_int(kShapeCount - 1)) %
                    kShapeCount;
            a.shape = static_cast<Shape>(s);
            break;
        }
        case ActionKind::combine: {
            int ia = rng.uniform_int(n_entities);
            int ib = rng.uniform_int(n_entities - 1);
            if (ib >= ia) ++ib;
            const Entity& ea = base.entities[static_cast<size_t>(ia)];
            const Entity& eb = base.entities[static_cast<size_t>(ib)];
            a.target_a = ref_of(ea);
            a.target_b = ref_of(eb);
            a.color = rng.uniform_int(n_colors);
            a.shape = static_cast<Shape>(rng.uniform_int(kShapeCount));
            a.row = ea.row;
            a.col = ea.col;
            break;
        }
        case ActionKind::set_background: {
            a.background_id = (base.background_id + 1 + rng.uniform_int(n_bg - 1)) % n_bg;
            break;
        }
    }
    return a;
}

std::pair<std::string, std::string> describe_step(const Action& action,
                                                  const Workspace& antecedent_state,
                                                  int antecedent, int step_index,
                                                  util::Rng& rng, const Palette& palette) {
    RefForm fa = RefForm::explicit_form, fb = RefForm::explicit_form;
    const Workspace& base = antecedent_state;
    if (action.kind == ActionKind::recolor || action.kind == ActionKind::transform ||
        action.kind == ActionKind::combine) {
        const Entity* ea = base.find(action.target_a.color, action.target_a.shape,
                                     action.target_a.row, action.target_a.col);
        if (ea != nullptr) fa = pick_ref_form(base, ea->id, rng);
    }
    if (action.kind == ActionKind::combine) {
        const Entity* eb = base.find(action.target_b.color, action.target_b.shape,
                                     action.target_b.row, action.target_b.col);
        if (eb != nullptr) {
            fb = pick_ref_form(base, eb->id, rng);
            if (fb == fa && fb != RefForm::explicit_form) fb = RefForm::explicit_form;
        }
    }
    int prefix = (antecedent >= 1 && antecedent != step_index - 1) ? antecedent : -1;
    std::string raw = emit_raw(action, palette, fa, fb, prefix);
    std::string resolved = emit_resolved(action, palette);
    return {raw, resolved};
}

static Task generate_task(const CorpusConfig& cfg, int task_idx, util::Rng& rng) {
    Task task;
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "t%04d", task_idx);
    task.id = idbuf;
    task.title = "task " + task.id;

    int extra = rng.poisson(cfg.mean_steps - 2.0);
    int n_steps = 2 + std::min(8, extra);

    std::vector<Workspace> states(static_cast<size_t>(n_steps) + 1);
    states[0] = Workspace{};

    for (int n = 1; n <= n_steps; ++n) {
        int antecedent;
        if (n == 1) {
            antecedent = 0;
        } else if (n == 2) {
            antecedent = 1;
        } else if (rng.bernoulli(cfg.nonlinear_fraction)) {
            antecedent = 1 + rng.uniform_int(n - 2);  // in [1, n-2]
        } else {
            antecedent = n - 1;
        }
        const Workspace& base = states[static_cast<size_t>(antecedent)];
        Action action = sample_action(base, rng, cfg.palette);
        Workspace next = apply_action(base, action);

        Step step;
        step.index = n;
        step.action = action;
        step.antecedent = antecedent;
        auto [raw, resolved] = describe_step(action, base, antecedent, n, rng, cfg.palette);
        step.raw_text = std::move(raw);
        step.resolved_text = std::move(resolved);
        step.gt_scene = render_scene(next, cfg.image_width, cfg.image_height, cfg.palette);
        task.steps.push_back(std::move(step));
        states[static_cast<size_t>(n)] = std::move(next);
    }
    return task;
}

Corpus generate_corpus(const CorpusConfig& cfg) {
    cfg.validate();
    Corpus corpus;
    corpus.config = cfg;
    corpus.tasks.reserve(static_cast<size_t>(cfg.n_tasks));
    for (int i = 0; i < cfg.n_tasks; ++i) {
        util::Rng rng(util::derive_seed(cfg.rng_seed, 0x7A5Cull, static_cast<uint64_t>(i)));
        corpus.tasks.push_back(generate_task(cfg, i, rng));
    }
    return corpus;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_frac) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw ConfigError("split_corpus: train_frac must lie strictly in (0,1)");
    }
    int n = static_cast<int>(corpus.tasks.size());
    int n_train = static_cast<int>(std::lround(train_frac * n));
    n_train = std::clamp(n_train, 1, n - 1);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    util::Rng rng(util::derive_seed(corpus.config.rng_seed, 0x5317ull));
    rng.shuffle(order);
    Corpus train, heldout;
    train.config = corpus.config;
    heldout.config = corpus.config;
    for (int i = 0; i < n; ++i) {
        const Task& t = corpus.tasks[static_cast<size_t>(order[static_cast<size_t>(i)])];
        (i < n_train ? train : heldout).tasks.push_back(t);
    }
    auto by_id = [](const Task& a, const Task& b) { return a.id < b.id; };
    std::sort(train.tasks.begin(), train.tasks.end(), by_id);
    std::sort(heldout.tasks.begin(), heldout.tasks.end(), by_id);
    return {std::move(train), std::move(heldout)};
}

// ---------------------------------------------------------------------------
// disk format
// ---------------------------------------------------------------------------

static std::string scene_file(const Task& task, int step_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scenes/%s_s%02d.ppm", task.id.c_str(), step_index);
    return buf;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "scenes");
    json cfg;
    cfg["n_tasks"] = corpus.config.n_tasks;
    cfg["mean_steps"] = corpus.config.mean_steps;
    cfg["nonlinear_fraction"] = corpus.config.nonlinear_fraction;
    cfg["image_width"] = corpus.config.image_width;
    cfg["image_height"] = corpus.config.image_height;
    cfg["rng_seed"] = corpus.config.rng_seed;
    json pal;
    for (const auto& c : corpus.config.palette.entity_colors) {
        pal["entity_colors"].push_back({{"name", c.name}, {"rgb", {c.r, c.g, c.b}}});
    }
    for (const auto& c : corpus.config.palette.backgrounds) {
        pal["backgrounds"].push_back({{"name", c.name}, {"rgb", {c.r, c.g, c.b}}});
    }
    cfg["palette"] = pal;

    json tasks = json::array();
    for (const auto& task : corpus.tasks) {
        json jt;
        jt["id"] = task.id;
        jt["title"] = task.title;
        json steps = json::array();
        for (const auto& s : task.steps) {
            json js;
            js["index"] = s.index;
            js["action"] = action_kind_name(s.action.kind);
            js["antecedent"] = s.antecedent;
            js["raw_text"] = s.raw_text;
            js["resolved_text"] = s.resolved_text;
            js["scene"] = scene_file(task, s.index);
            steps.push_back(std::move(js));
            util::write_ppm((fs::path(dir) / scene_file(task, s.index)).string(),
                            s.gt_scene);
        }
        jt["steps"] = std::move(steps);
        tasks.push_back(std::move(jt));
    }

    json manifest;
    manifest["format"] = "coseq-corpus-v1";
    manifest["config"] = std::move(cfg);
    manifest["tasks"] = std::move(tasks);

    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("save_corpus: cannot open manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("load_corpus: cannot open " + dir + "/manifest.json");
    json manifest = json::parse(f, nullptr, true);
    if (manifest.value("format", "") != "coseq-corpus-v1") {
        throw FormatError("load_corpus: unsupported manifest format");
    }
    Corpus corpus;
    const json& cfg = manifest.at("config");
    corpus.config.n_tasks = cfg.at("n_tasks").get<int>();
    corpus.config.mean_steps = cfg.at("mean_steps").get<double>();
    corpus.config.nonlinear_fraction = cfg.at("nonlinear_fraction").get<double>();
    corpus.config.image_width = cfg.at("image_width").get<int>();
    corpus.config.image_height = cfg.at("image_height").get<int>();
    corpus.config.rng_seed = cfg.at("rng_seed").get<uint64_t>();
    corpus.config.palette.entity_colors.clear();
    corpus.config.palette.backgrounds.clear();
    for (const auto& c : cfg.at("palette").at("entity_colors")) {
        NamedColor nc;
        nc.name = c.at("name").get<std::string>();
        nc.r = c.at("rgb")[0].get<uint8_t>();
        nc.g = c.at("rgb")[1].get<uint8_t>();
        nc.b = c.at("rgb")[2].get<uint8_t>();
        corpus.config.palette.entity_colors.push_back(std::move(nc));
    }
    for (const auto& c : cfg.at("palette").at("backgrounds")) {
        NamedColor nc;
        nc.name = c.at("name").get<std::string>();
        nc.r = c.at("rgb")[0].get<uint8_t>();
        nc.g = c.at("rgb")[1].get<uint8_t>();
        nc.b = c.at("rgb")[2].get<uint8_t>();
        corpus.config.palette.backgrounds.push_back(std::move(nc));
    }

    for (const auto& jt : manifest.at("tasks")) {
        Task task;
        task.id = jt.at("id").get<std::string>();
        task.title = jt.at("title").get<std::string>();
        for (const auto& js : jt.at("steps")) {
            Step s;
            s.index = js.at("index").get<int>();
            s.antecedent = js.at("antecedent").get<int>();
            s.raw_text = js.at("raw_text").get<std::string>();
            s.resolved_text = js.at("resolved_text").get<std::string>();
            ParsedAction parsed = parse_action(s.resolved_text, corpus.config.palette);
            s.action = parsed.action;
            s.gt_scene = util::read_ppm(
                (fs::path(dir) / js.at("scene").get<std::string>()).string());
            task.steps.push_back(std::move(s));
        }
        corpus.tasks.push_back(std::move(task));
    }
    return corpus;
}

std::vector<Workspace> replay_workspaces(const Task& task) {
    std::vector<Workspace> states(task.steps.size() + 1);
    states[0] = Workspace{};
    for (const auto& s : task.steps) {
        states[static_cast<size_t>(s.index)] =
            apply_action(states[static_cast<size_t>(s.antecedent)], s.action);
    }
    return states;
}

}  // namespace coseq::synth
