#include "caption/captioner.hpp"

#include "util/errors.hpp"

namespace coseq::caption {

using synth::Action;
using synth::ActionKind;
using synth::Entity;
using synth::EntityRef;
using synth::ParsedAction;
using synth::RefForm;
using synth::Workspace;

Contextualizer::Contextualizer(synth::Palette palette) : palette_(std::move(palette)) {}

static EntityRef ref_of(const Entity& e) {
    return EntityRef{e.color, e.shape, e.row, e.col};
}

static EntityRef ground(const Workspace& base, RefForm form, const EntityRef& explicit_ref) {
    switch (form) {
        case RefForm::it_form: {
            const Entity* e = base.find_by_id(base.last_touched);
            if (e == nullptr) {
                throw UnresolvedReference("it", "no previously touched entity in scope");
            }
            return ref_of(*e);
        }
        case RefForm::mixture_form: {
            const Entity* e = base.find_by_id(base.last_mixture);
            if (e == nullptr) {
                throw UnresolvedReference("the mixture", "no combined entity in scope");
            }
            return ref_of(*e);
        }
        case RefForm::explicit_form:
            // Already self-contained; nothing to ground (idempotence).
            return explicit_ref;
    }
    throw UnresolvedReference("?", "unreachable");
}

ResolvedStep Contextualizer::resolve_one(const std::string& raw, int step_index,
                                         const std::vector<Workspace>& states,
                                         std::optional<int> antecedent_hint) const {
    ParsedAction parsed = synth::parse_action(raw, palette_);
    int antecedent;
    if (parsed.prefix_step >= 1) {
        antecedent = parsed.prefix_step;
    } else if (antecedent_hint.has_value()) {
        antecedent = *antecedent_hint;
    } else {
        antecedent = step_index - 1;
    }
    if (antecedent < 0 || antecedent >= step_index ||
        antecedent >= static_cast<int>(states.size())) {
        throw UnresolvedReference("step " + std::to_string(antecedent),
                                  "antecedent outside the available history");
    }
    const Workspace& base = states[static_cast<size_t>(antecedent)];

    Action action = parsed.action;
    if (action.kind == ActionKind::recolor || action.kind == ActionKind::transform ||
        action.kind == ActionKind::combine) {
        action.target_a = ground(base, parsed.form_a, parsed.action.target_a);
    }
    if (action.kind == ActionKind::combine) {
        action.target_b = ground(base, parsed.form_b, parsed.action.target_b);
        if (action.target_a == action.target_b) {
            throw UnresolvedReference("it", "both combine operands resolve to one entity");
        }
    }

    ResolvedStep out;
    out.action = action;
    out.antecedent = antecedent;
    out.caption = synth::emit_resolved(action, palette_);
    return out;
}

std::vector<ResolvedStep> Contextualizer::resolve_task(
    const std::vector<std::string>& raws) const {
    std::vector<ResolvedStep> out;
    std::vector<Workspace> states(raws.size() + 1);
    states[0] = Workspace{};
    for (size_t i = 0; i < raws.size(); ++i) {
        ResolvedStep step = resolve_one(raws[i], static_cast<int>(i) + 1, states,
                                        std::nullopt);
        states[i + 1] = synth::apply_action(
            states[static_cast<size_t>(step.antecedent)], step.action);
        out.push_back(std::move(step));
    }
    return out;
}

std::string Contextualizer::contextualize(const std::string& raw_text,
                                          const std::vector<std::string>& history_raw,
                                          std::optional<int> antecedent_hint) const {
    std::vector<Workspace> states(history_raw.size() + 1);
    states[0] = Workspace{};
    for (size_t i = 0; i < history_raw.size(); ++i) {
        ResolvedStep step = resolve_one(history_raw[i], static_cast<int>(i) + 1, states,
                                        std::nullopt);
        states[i + 1] = synth::apply_action(
            states[static_cast<size_t>(step.antecedent)], step.action);
    }
    int index = static_cast<int>(history_raw.size()) + 1;
    return resolve_one(raw_text, index, states, antecedent_hint).caption;
}

}  // namespace coseq::caption
