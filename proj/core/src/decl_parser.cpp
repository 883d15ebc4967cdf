#include "etsan/decl_parser.hpp"

#include <cctype>

namespace etsan::ir::detail {

Lexer::Lexer(std::string_view text, std::string filename) : filename_(std::move(filename)) {
    tokenize(text);
}

void Lexer::tokenize(std::string_view text) {
    size_t i = 0;
    uint32_t line = 1, col = 1;
    auto advance = [&](size_t n) {
        for (size_t k = 0; k < n; ++k) {
            if (text[i + k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        i += n;
    };
    auto loc_here = [&] { return Loc{line, col}; };

    static constexpr std::string_view two_char[] = {"->", "==", "!=", "<=", ">="};
    static constexpr std::string_view one_char = "(){}[];:,=<>+-*/%@.";

    while (i < text.size()) {
        char c = text[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
            while (i < text.size() && text[i] != '\n')
                advance(1);
            continue;
        }
        if (c == '/' && i + 1 < text.size() && text[i + 1] == '*') {
            Loc start = loc_here();
            advance(2);
            while (i + 1 < text.size() && !(text[i] == '*' && text[i + 1] == '/'))
                advance(1);
            if (i + 1 >= text.size())
                fail(start, "unterminated comment");
            advance(2);
            continue;
        }

        Token tok;
        tok.loc = loc_here();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t j = i;
            while (j < text.size() &&
                   (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            tok.kind = Token::Kind::Ident;
            tok.text = std::string(text.substr(i, j - i));
            advance(j - i);
            tokens_.push_back(std::move(tok));
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            size_t j = i;
            bool is_float = false;
            while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
                ++j;
            if (j + 1 < text.size() && text[j] == '.' &&
                std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
                is_float = true;
                ++j;
                while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j])))
                    ++j;
                if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
                    size_t k = j + 1;
                    if (k < text.size() && (text[k] == '+' || text[k] == '-'))
                        ++k;
                    if (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) {
                        ++k;
                        while (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])))
                            ++k;
                        j = k;
                    }
                }
            }
            std::string lit(text.substr(i, j - i));
            if (is_float) {
                tok.kind = Token::Kind::Float;
                tok.fval = std::stod(lit);
            } else {
                tok.kind = Token::Kind::Int;
                try {
                    tok.ival = std::stoll(lit);
                } catch (const std::out_of_range &) {
                    fail(tok.loc, "integer literal out of range: " + lit);
                }
            }
            tok.text = std::move(lit);
            advance(j - i);
            tokens_.push_back(std::move(tok));
            continue;
        }
        if (c == '\'') {
            size_t j = i + 1;
            int64_t value = 0;
            if (j < text.size() && text[j] == '\\') {
                ++j;
                if (j >= text.size())
                    fail(tok.loc, "unterminated character literal");
                switch (text[j]) {
                case 'n': value = '\n'; break;
                case 't': value = '\t'; break;
                case 'r': value = '\r'; break;
                case '0': value = 0; break;
                case '\\': value = '\\'; break;
                case '\'': value = '\''; break;
                default: fail(tok.loc, "unknown escape in character literal");
                }
                ++j;
            } else if (j < text.size() && text[j] != '\'') {
                value = static_cast<unsigned char>(text[j]);
                ++j;
            } else {
                fail(tok.loc, "empty character literal");
            }
            if (j >= text.size() || text[j] != '\'')
                fail(tok.loc, "unterminated character literal");
            ++j;
            tok.kind = Token::Kind::Int;
            tok.ival = value;
            tok.text = std::string(text.substr(i, j - i));
            advance(j - i);
            tokens_.push_back(std::move(tok));
            continue;
        }

        bool matched = false;
        for (auto tc : two_char) {
            if (text.substr(i).starts_with(tc)) {
                tok.kind = Token::Kind::Punct;
                tok.text = std::string(tc);
                advance(2);
                tokens_.push_back(std::move(tok));
                matched = true;
                break;
            }
        }
        if (matched)
            continue;
        if (one_char.find(c) != std::string_view::npos) {
            tok.kind = Token::Kind::Punct;
            tok.text = std::string(1, c);
            advance(1);
            tokens_.push_back(std::move(tok));
            continue;
        }
        fail(tok.loc, std::string("unexpected character '") + c + "'");
    }

    Token end;
    end.kind = Token::Kind::End;
    end.text = "<eof>";
    end.loc = {line, col};
    tokens_.push_back(std::move(end));
}

const Token &Lexer::peek(size_t ahead) const {
    size_t idx = pos_ + ahead;
    if (idx >= tokens_.size())
        idx = tokens_.size() - 1;
    return tokens_[idx];
}

Token Lexer::next() {
    Token t = peek();
    if (pos_ + 1 < tokens_.size())
        ++pos_;
    return t;
}

bool Lexer::at(std::string_view text, size_t ahead) const {
    const Token &t = peek(ahead);
    return t.kind != Token::Kind::End && t.text == text;
}

bool Lexer::accept(std::string_view text) {
    if (!at(text))
        return false;
    next();
    return true;
}

Token Lexer::expect(std::string_view text, std::string_view what) {
    if (!at(text)) {
        std::string msg = "expected '" + std::string(text) + "'";
        if (!what.empty())
            msg += " " + std::string(what);
        msg += ", got '" + peek().text + "'";
        fail(peek().loc, msg);
    }
    return next();
}

Token Lexer::expect_ident(std::string_view what) {
    if (peek().kind != Token::Kind::Ident)
        fail(peek().loc, "expected " + std::string(what) + ", got '" + peek().text + "'");
    return next();
}

int64_t Lexer::expect_int(std::string_view what) {
    if (peek().kind != Token::Kind::Int)
        fail(peek().loc, "expected " + std::string(what) + ", got '" + peek().text + "'");
    return next().ival;
}

void Lexer::fail(Loc loc, const std::string &msg) const {
    throw ParseError(filename_ + ":" + std::to_string(loc.line) + ":" + std::to_string(loc.col) +
                     ": " + msg);
}

namespace {

bool is_record_keyword(const Token &t) {
    return t.kind == Token::Kind::Ident &&
           (t.text == "struct" || t.text == "class" || t.text == "union");
}

const std::string_view kReserved[] = {"struct", "class", "union", "fn",    "var",   "if",
                                      "else",   "while", "return", "call",  "store", "free",
                                      "load",   "field", "index",  "cast",  "malloc", "new",
                                      "null",   "sizeof"};

bool is_reserved(std::string_view name) {
    for (auto r : kReserved)
        if (r == name)
            return true;
    return false;
}

} // namespace

void DeclParser::check_name(const Token &tok) const {
    if (tok.text.starts_with("__"))
        lx_.fail(tok.loc, "names starting with '__' are reserved: " + tok.text);
    if (is_reserved(tok.text))
        lx_.fail(tok.loc, "'" + tok.text + "' is a keyword");
}

bool DeclParser::at_record_decl() const {
    // A record keyword in type position ("struct S* p") is followed by a tag
    // and then something other than '{', ':' or '@size'.
    if (!is_record_keyword(lx_.peek()))
        return false;
    if (lx_.peek(1).kind != Token::Kind::Ident)
        return false;
    return lx_.at("{", 2) || lx_.at(":", 2) || (lx_.at("@", 2) && lx_.at("size", 3));
}

TypeRef DeclParser::parse_base() {
    const Token &t = lx_.peek();
    if (t.kind != Token::Kind::Ident)
        lx_.fail(t.loc, "expected a type, got '" + t.text + "'");

    if (t.text == "struct" || t.text == "class" || t.text == "union") {
        lx_.next();
        Token tag = lx_.expect_ident("record tag");
        TypeRef rec = u_.find_tag(tag.text);
        if (!rec)
            lx_.fail(tag.loc, "unknown record tag '" + tag.text + "'");
        return rec;
    }
    if (t.text == "fn") {
        lx_.next();
        return u_.function_type();
    }
    if (TypeRef f = u_.maybe_fundamental(t.text)) {
        lx_.next();
        return f;
    }
    if (TypeRef rec = u_.find_tag(t.text)) {
        lx_.next();
        return rec;
    }
    lx_.fail(t.loc, "unknown type '" + t.text + "'");
}

TypeRef DeclParser::parse_type_no_suffix() {
    Loc start = lx_.peek().loc;
    unsigned stars = 0;
    while (lx_.accept("*"))
        ++stars;
    TypeRef t = parse_base();
    for (unsigned i = 0; i < stars; ++i)
        t = u_.address_of(t);
    if (t->kind() == TypeKind::Fundamental && t->size() == 0)
        lx_.fail(start, "'void' is not an object type; use '*void'");
    return t;
}

TypeRef DeclParser::parse_type() {
    Loc start = lx_.peek().loc;
    unsigned stars = 0;
    while (lx_.accept("*"))
        ++stars;
    TypeRef t = parse_base();
    for (unsigned i = 0; i < stars; ++i)
        t = u_.address_of(t);
    std::vector<uint64_t> dims;
    while (lx_.at("[")) {
        lx_.next();
        if (lx_.at("]"))
            lx_.fail(lx_.peek().loc, "flexible arrays are only valid as the last record member");
        int64_t n = lx_.expect_int("array length");
        if (n <= 0)
            lx_.fail(start, "array length must be positive");
        lx_.expect("]");
        dims.push_back(static_cast<uint64_t>(n));
    }
    for (auto it = dims.rbegin(); it != dims.rend(); ++it)
        t = u_.array_of(t, *it);
    if (t->kind() == TypeKind::Fundamental && t->size() == 0)
        lx_.fail(start, "'void' is not an object type; use '*void'");
    return t;
}

TypeRef DeclParser::parse_record_decl() {
    Token kw = lx_.next();
    TypeKind kind = kw.text == "struct"  ? TypeKind::Struct
                    : kw.text == "class" ? TypeKind::Class
                                         : TypeKind::Union;
    Token tag = lx_.expect_ident("record tag");
    check_name(tag);

    std::vector<TypeUniverse::MemberDecl> members;
    if (lx_.accept(":")) {
        if (kind != TypeKind::Class)
            lx_.fail(tag.loc, "only 'class' records take bases");
        do {
            Token base = lx_.expect_ident("base tag");
            TypeRef bt = u_.find_tag(base.text);
            if (!bt)
                lx_.fail(base.loc, "unknown base '" + base.text + "'");
            if (!bt->sealed())
                lx_.fail(base.loc, "base '" + base.text + "' is incomplete");
            TypeUniverse::MemberDecl m;
            m.name = base.text;
            m.type = bt;
            m.is_base = true;
            members.push_back(std::move(m));
        } while (lx_.accept(","));
    }

    std::optional<uint64_t> explicit_size;
    if (lx_.at("@") && lx_.at("size", 1)) {
        lx_.next();
        lx_.next();
        lx_.expect("(");
        int64_t n = lx_.expect_int("record size");
        if (n < 0)
            lx_.fail(tag.loc, "record size must be non-negative");
        explicit_size = static_cast<uint64_t>(n);
        lx_.expect(")");
    }

    TypeDesc *rec = nullptr;
    try {
        rec = u_.begin_record(kind, tag.text);
    } catch (const Error &e) {
        lx_.fail(tag.loc, e.what());
    }

    lx_.expect("{", "to open the record body");
    while (!lx_.at("}")) {
        TypeUniverse::MemberDecl m;
        Loc mloc = lx_.peek().loc;
        TypeRef base = parse_base();
        while (lx_.accept("*"))
            base = u_.address_of(base);
        Token name = lx_.expect_ident("member name");
        check_name(name);
        m.name = name.text;

        std::vector<uint64_t> dims;
        bool fam = false;
        while (lx_.at("[")) {
            lx_.next();
            if (lx_.at("]")) {
                lx_.next();
                fam = true;
                if (lx_.at("["))
                    lx_.fail(mloc, "flexible member must be one-dimensional");
                break;
            }
            int64_t n = lx_.expect_int("array length");
            if (n <= 0)
                lx_.fail(mloc, "array length must be positive");
            lx_.expect("]");
            dims.push_back(static_cast<uint64_t>(n));
        }
        for (auto it = dims.rbegin(); it != dims.rend(); ++it)
            base = u_.array_of(base, *it);
        if (base->kind() == TypeKind::Fundamental && base->size() == 0)
            lx_.fail(mloc, "member cannot have type 'void'");
        m.type = base;
        m.is_fam = fam;

        if (lx_.accept("@")) {
            int64_t off = lx_.expect_int("member offset");
            if (off < 0)
                lx_.fail(mloc, "member offset must be non-negative");
            m.offset = static_cast<uint64_t>(off);
        }
        lx_.expect(";", "after the member");
        members.push_back(std::move(m));
    }
    lx_.expect("}");
    lx_.expect(";", "after the record declaration");

    try {
        return u_.finish_record(rec, members, explicit_size);
    } catch (const Error &e) {
        lx_.fail(tag.loc, e.what());
    }
}

} // namespace etsan::ir::detail
