#include "synth/grammar.hpp"

#include <sstream>

#include "util/errors.hpp"

namespace coseq::synth {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::string cell_token(int row, int col) {
    return "r" + std::to_string(row) + "c" + std::to_string(col);
}

static bool parse_cell(const std::string& tok, int& row, int& col) {
    if (tok.size() != 4 || tok[0] != 'r' || tok[2] != 'c') return false;
    if (tok[1] < '0' || tok[1] >= '0' + kGridCells) return false;
    if (tok[3] < '0' || tok[3] >= '0' + kGridCells) return false;
    row = tok[1] - '0';
    col = tok[3] - '0';
    return true;
}

std::vector<std::string> grammar_vocab(const Palette& palette) {
    std::vector<std::string> v;
    for (const auto& c : palette.entity_colors) v.push_back(c.name);
    for (const auto& b : palette.backgrounds) v.push_back(b.name);
    for (int s = 0; s < kShapeCount; ++s) v.push_back(shape_name(static_cast<Shape>(s)));
    for (int r = 0; r < kGridCells; ++r) {
        for (int c = 0; c < kGridCells; ++c) v.push_back(cell_token(r, c));
    }
    for (int k = 1; k <= 10; ++k) v.push_back(std::to_string(k));
    const char* words[] = {"add",  "recolor", "transform", "combine", "set",
                           "the",  "a",       "at",        "and",     "into",
                           "to",   "background", "it",     "mixture", "using",
                           "result", "of",    "step"};
    for (const char* w : words) v.push_back(w);
    return v;
}

static void emit_mention(std::vector<std::string>& out, const EntityRef& ref,
                         const Palette& palette) {
    out.push_back("the");
    out.push_back(palette.entity_colors[static_cast<size_t>(ref.color)].name);
    out.push_back(shape_name(ref.shape));
    out.push_back("at");
    out.push_back(cell_token(ref.row, ref.col));
}

static void emit_mention_form(std::vector<std::string>& out, const EntityRef& ref,
                              RefForm form, const Palette& palette) {
    switch (form) {
        case RefForm::explicit_form:
            emit_mention(out, ref, palette);
            break;
        case RefForm::it_form:
            out.push_back("it");
            break;
        case RefForm::mixture_form:
            out.push_back("the");
            out.push_back("mixture");
            break;
    }
}

static std::string emit(const Action& a, const Palette& palette, RefForm form_a,
                        RefForm form_b, int prefix_step) {
    std::vector<std::string> t;
    if (prefix_step >= 1) {
        t = {"using", "the", "result", "of", "step", std::to_string(prefix_step)};
    }
    switch (a.kind) {
        case ActionKind::add:
            t.push_back("add");
            t.push_back("a");
            t.push_back(palette.entity_colors[static_cast<size_t>(a.color)].name);
            t.push_back(shape_name(a.shape));
            t.push_back("at");
            t.push_back(cell_token(a.row, a.col));
            break;
        case ActionKind::recolor:
            t.push_back("recolor");
            emit_mention_form(t, a.target_a, form_a, palette);
            t.push_back(palette.entity_colors[static_cast<size_t>(a.color)].name);
            break;
        case ActionKind::transform:
            t.push_back("transform");
            emit_mention_form(t, a.target_a, form_a, palette);
            t.push_back("into");
            t.push_back("a");
            t.push_back(shape_name(a.shape));
            break;
        case ActionKind::combine:
            t.push_back("combine");
            emit_mention_form(t, a.target_a, form_a, palette);
            t.push_back("and");
            emit_mention_form(t, a.target_b, form_b, palette);
            t.push_back("into");
            t.push_back("a");
            t.push_back(palette.entity_colors[static_cast<size_t>(a.color)].name);
            t.push_back(shape_name(a.shape));
            t.push_back("at");
            t.push_back(cell_token(a.row, a.col));
            break;
        case ActionKind::set_background:
            t.push_back("set");
            t.push_back("the");
            t.push_back("background");
            t.push_back("to");
            t.push_back(palette.backgrounds[static_cast<size_t>(a.background_id)].name);
            break;
    }
    return join_tokens(t);
}

std::string emit_resolved(const Action& a, const Palette& palette) {
    return emit(a, palette, RefForm::explicit_form, RefForm::explicit_form, -1);
}

std::string emit_raw(const Action& a, const Palette& palette, RefForm form_a,
                     RefForm form_b, int antecedent_prefix_step) {
    return emit(a, palette, form_a, form_b, antecedent_prefix_step);
}

namespace {

class TokenCursor {
public:
    TokenCursor(std::vector<std::string> toks, std::string text)
        : toks_(std::move(toks)), text_(std::move(text)) {}

    bool done() const { return pos_ >= toks_.size(); }
    const std::string& peek() const {
        if (done()) fail("unexpected end of sentence");
        return toks_[pos_];
    }
    std::string next() {
        if (done()) fail("unexpected end of sentence");
        return toks_[pos_++];
    }
    void expect(const std::string& word) {
        if (next() != word) fail("expected '" + word + "'");
    }
    bool try_consume(const std::string& word) {
        if (!done() && toks_[pos_] == word) {
            ++pos_;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw FormatError("parse_action: " + why + " in \"" + text_ + "\"");
    }

private:
    std::vector<std::string> toks_;
    std::string text_;
    size_t pos_ = 0;
};

}  // namespace

static int parse_color(TokenCursor& cur, const Palette& palette) {
    std::string tok = cur.next();
    int idx = palette.color_index(tok);
    if (idx < 0) cur.fail("unknown color '" + tok + "'");
    return idx;
}

static Shape parse_shape(TokenCursor& cur) {
    std::string tok = cur.next();
    auto s = shape_from_name(tok);
    if (!s) cur.fail("unknown shape '" + tok + "'");
    return *s;
}

static void parse_cell_tok(TokenCursor& cur, int& row, int& col) {
    std::string tok = cur.next();
    if (!parse_cell(tok, row, col)) cur.fail("bad cell '" + tok + "'");
}

// MENTION | "it" | "the mixture"
static RefForm parse_mention(TokenCursor& cur, const Palette& palette, EntityRef& out) {
    if (cur.try_consume("it")) return RefForm::it_form;
    cur.expect("the");
    if (cur.try_consume("mixture")) return RefForm::mixture_form;
    out.color = parse_color(cur, palette);
    out.shape = parse_shape(cur);
    cur.expect("at");
    parse_cell_tok(cur, out.row, out.col);
    return RefForm::explicit_form;
}

ParsedAction parse_action(const std::string& text, const Palette& palette) {
    TokenCursor cur(tokenize(text), text);
    ParsedAction p;
    if (cur.try_consume("using")) {
        cur.expect("the");
        cur.expect("result");
        cur.expect("of");
        cur.expect("step");
        std::string num = cur.next();
        int k = 0;
        for (char c : num) {
            if (c < '0' || c > '9') cur.fail("bad step number '" + num + "'");
            k = k * 10 + (c - '0');
        }
        if (k < 1) cur.fail("step number must be >= 1");
        p.prefix_step = k;
    }
    std::string verb = cur.next();
    Action& a = p.action;
    if (verb == "add") {
        a.kind = ActionKind::add;
        cur.expect("a");
        a.color = parse_color(cur, palette);
        a.shape = parse_shape(cur);
        cur.expect("at");
        parse_cell_tok(cur, a.row, a.col);
    } else if (verb == "recolor") {
        a.kind = ActionKind::recolor;
        p.form_a = parse_mention(cur, palette, a.target_a);
        a.color = parse_color(cur, palette);
    } else if (verb == "transform") {
        a.kind = ActionKind::transform;
        p.form_a = parse_mention(cur, palette, a.target_a);
        cur.expect("into");
        cur.expect("a");
        a.shape = parse_shape(cur);
    } else if (verb == "combine") {
        a.kind = ActionKind::combine;
        p.form_a = parse_mention(cur, palette, a.target_a);
        cur.expect("and");
        p.form_b = parse_mention(cur, palette, a.target_b);
        cur.expect("into");
        cur.expect("a");
        a.color = parse_color(cur, palette);
        a.shape = parse_shape(cur);
        cur.expect("at");
        parse_cell_tok(cur, a.row, a.col);
    } else if (verb == "set") {
        a.kind = ActionKind::set_background;
        cur.expect("the");
        cur.expect("background");
        cur.expect("to");
        std::string bg = cur.next();
        a.background_id = palette.background_index(bg);
        if (a.background_id < 0) cur.fail("unknown background '" + bg + "'");
    } else {
        cur.fail("unknown verb '" + verb + "'");
    }
    if (!cur.done()) cur.fail("trailing tokens");
    return p;
}

}  // namespace coseq::synth
