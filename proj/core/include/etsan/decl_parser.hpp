#pragma once

// Lexer and type-declaration parsing shared by the program parser and by
// standalone type files.

#include "etsan/ir.hpp"
#include "etsan/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace etsan::ir::detail {

struct Token {
    enum class Kind { Ident, Int, Float, Punct, End };
    Kind kind = Kind::End;
    std::string text;
    int64_t ival = 0;
    double fval = 0;
    Loc loc;
};

class Lexer {
  public:
    Lexer(std::string_view text, std::string filename);

    const Token &peek(size_t ahead = 0) const;
    Token next();
    bool at(std::string_view text, size_t ahead = 0) const;
    bool at_ident(size_t ahead = 0) const { return peek(ahead).kind == Token::Kind::Ident; }
    bool at_end() const { return peek().kind == Token::Kind::End; }
    bool accept(std::string_view text);
    Token expect(std::string_view text, std::string_view what = {});
    Token expect_ident(std::string_view what);
    int64_t expect_int(std::string_view what);

    [[noreturn]] void fail(Loc loc, const std::string &msg) const;
    const std::string &filename() const { return filename_; }

  private:
    void tokenize(std::string_view text);

    std::string filename_;
    std::vector<Token> tokens_;
    size_t pos_ = 0;
};

// Parses type expressions and record declarations against a universe.
//
//   type      := '*'* base ('[' INT ']')*
//   base      := fundamental | tag | 'fn' | ('struct'|'class'|'union') tag
//   record    := ('struct'|'union') tag size? '{' member* '}' ';'
//              | 'class' tag (':' tag (',' tag)*)? size? '{' member* '}' ';'
//   size      := '@size' '(' INT ')'
//   member    := base '*'* name (('[' INT ']')* | '[' ']') ('@' INT)? ';'
//
// An empty final array suffix declares a flexible array member. Explicit
// '@' offsets are all-or-nothing per record.
class DeclParser {
  public:
    DeclParser(Lexer &lx, TypeUniverse &universe) : lx_(lx), u_(universe) {}

    bool at_record_decl() const;
    TypeRef parse_record_decl();
    TypeRef parse_type();
    TypeRef parse_type_no_suffix(); // base and stars only

  private:
    TypeRef parse_base();
    void check_name(const Token &tok) const;

    Lexer &lx_;
    TypeUniverse &u_;
};

} // namespace etsan::ir::detail
