#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synth/corpus.hpp"

namespace coseq::caption {

/// A referring expression that could not be grounded in the history.
struct UnresolvedReference : std::runtime_error {
    std::string expression;
    UnresolvedReference(std::string expr, const std::string& why)
        : std::runtime_error("unresolved reference '" + expr + "': " + why),
          expression(std::move(expr)) {}
};

struct ResolvedStep {
    synth::Action action;  // fully explicit
    int antecedent = 0;
    std::string caption;   // canonical resolved sentence
};

/// Rule-based sequential language conditioning: rewrites a referential step
/// sentence into a self-contained caption, reconstructing workspace states
/// from the raw history. Pure and thread-safe.
class Contextualizer {
public:
    explicit Contextualizer(synth::Palette palette);

    /// Resolve the next step after `history_raw`. The antecedent is taken
    /// from the sentence's "using the result of step K" prefix when present,
    /// from `antecedent_hint` when given, and defaults to the previous step.
    std::string contextualize(const std::string& raw_text,
                              const std::vector<std::string>& history_raw,
                              std::optional<int> antecedent_hint = std::nullopt) const;

    /// Resolve a whole task front to back.
    std::vector<ResolvedStep> resolve_task(const std::vector<std::string>& raws) const;

private:
    ResolvedStep resolve_one(const std::string& raw, int step_index,
                             const std::vector<synth::Workspace>& states,
                             std::optional<int> antecedent_hint) const;

    synth::Palette palette_;
};

}  // namespace coseq::caption
