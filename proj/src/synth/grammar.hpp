#pragma once

#include <string>
#include <vector>

#include "synth/scene.hpp"

namespace coseq::synth {

// Closed step-instruction grammar. Resolved sentences:
//   add a COLOR SHAPE at CELL
//   recolor MENTION COLOR
//   transform MENTION into a SHAPE
//   combine MENTION and MENTION into a COLOR SHAPE at CELL
//   set the background to BG
// with MENTION = "the COLOR SHAPE at CELL".
// Raw sentences may use "it" or "the mixture" for a mention and may be
// prefixed with "using the result of step K" when the step extends a scene
// other than the previous one.

enum class RefForm { explicit_form = 0, it_form, mixture_form };

std::vector<std::string> tokenize(const std::string& text);
std::string join_tokens(const std::vector<std::string>& tokens);
std::string cell_token(int row, int col);

/// Full closed vocabulary for a palette (stable order).
std::vector<std::string> grammar_vocab(const Palette& palette);

std::string emit_resolved(const Action& a, const Palette& palette);
std::string emit_raw(const Action& a, const Palette& palette, RefForm form_a,
                     RefForm form_b, int antecedent_prefix_step);

/// Parse result: the action, plus which mention slots still need resolution
/// and an explicit antecedent if the sentence named one.
struct ParsedAction {
    Action action;
    RefForm form_a = RefForm::explicit_form;
    RefForm form_b = RefForm::explicit_form;
    int prefix_step = -1;  // -1: no "using the result of step K" prefix

    bool fully_resolved() const {
        return form_a == RefForm::explicit_form && form_b == RefForm::explicit_form &&
               prefix_step < 0;
    }
};

/// Throws FormatError when the text does not parse under the grammar.
ParsedAction parse_action(const std::string& text, const Palette& palette);

}  // namespace coseq::synth
