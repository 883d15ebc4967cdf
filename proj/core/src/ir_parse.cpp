#include "etsan/decl_parser.hpp"
#include "etsan/ir.hpp"

#include <map>
#include <set>
#include <utility>

namespace etsan::ir {

using detail::DeclParser;
using detail::Lexer;
using detail::Token;

Stmt Stmt::clone() const {
    Stmt s;
    s.kind = kind;
    s.loc = loc;
    s.name = name;
    s.type = type;
    s.expr = expr;
    s.a = a;
    s.b = b;
    s.has_value = has_value;
    if (cond)
        s.cond = cond;
    s.then_blk = clone_block(then_blk);
    s.else_blk = clone_block(else_blk);
    s.bounds = bounds;
    s.bounds_src = bounds_src;
    s.bsrc = bsrc;
    s.query = query;
    s.width = width;
    s.access = access;
    s.narrow_lower_only = narrow_lower_only;
    s.store_elem = store_elem;
    return s;
}

Block clone_block(const Block &b) {
    Block out;
    out.stmts.reserve(b.stmts.size());
    for (const auto &s : b.stmts)
        out.stmts.push_back(std::make_unique<Stmt>(s->clone()));
    return out;
}

const Function *Program::find(std::string_view name) const {
    for (const auto &f : functions)
        if (f.name == name)
            return &f;
    return nullptr;
}

Program Program::clone_shell() const {
    Program p;
    p.universe = universe;
    p.decls = decls;
    p.filename = filename;
    p.instrumented = instrumented;
    return p;
}

namespace {

bool is_pointer(TypeRef t) { return t && t->kind() == TypeKind::AddressOf; }
bool is_numeric(TypeRef t) { return t && t->kind() == TypeKind::Fundamental && t->size() > 0; }
bool is_float_type(TypeRef t) {
    return is_numeric(t) && (t->tag() == "float" || t->tag() == "double");
}
bool is_integer(TypeRef t) { return is_numeric(t) && !is_float_type(t); }
bool is_void_ptr(TypeRef t) {
    return is_pointer(t) && t->target()->kind() == TypeKind::Fundamental &&
           t->target()->size() == 0;
}
bool is_scalar(TypeRef t) { return is_numeric(t) || is_pointer(t); }

bool loadable(TypeRef pointee) {
    return (pointee->kind() == TypeKind::Fundamental && pointee->size() > 0) ||
           pointee->kind() == TypeKind::AddressOf;
}

bool is_rel(BinOp op) {
    switch (op) {
    case BinOp::Eq:
    case BinOp::Ne:
    case BinOp::Lt:
    case BinOp::Le:
    case BinOp::Gt:
    case BinOp::Ge:
        return true;
    default:
        return false;
    }
}

class Parser {
  public:
    Parser(std::string_view text, std::string filename)
        : lx_(text, filename),
          prog_{std::make_shared<TypeUniverse>(), {}, {}, std::move(filename), false},
          dp_(lx_, *prog_.universe) {}

    Program run();

  private:
    Function parse_function();
    Block parse_block();
    StmtPtr parse_stmt();
    Expr parse_expr();
    Expr parse_cond();
    Operand parse_operand();
    void check_name(const Token &tok);

    Lexer lx_;
    Program prog_;
    DeclParser dp_;
};

void Parser::check_name(const Token &tok) {
    if (tok.text.starts_with("__"))
        lx_.fail(tok.loc, "names starting with '__' are reserved: " + tok.text);
}

Operand Parser::parse_operand() {
    const Token &t = lx_.peek();
    Operand o;
    o.loc = t.loc;
    if (t.kind == Token::Kind::Int) {
        o.kind = Operand::Kind::Int;
        o.ival = lx_.next().ival;
        return o;
    }
    if (t.kind == Token::Kind::Float) {
        o.kind = Operand::Kind::Float;
        o.fval = lx_.next().fval;
        return o;
    }
    if (lx_.at("-")) {
        lx_.next();
        const Token &n = lx_.peek();
        if (n.kind == Token::Kind::Int) {
            o.kind = Operand::Kind::Int;
            o.ival = -lx_.next().ival;
            return o;
        }
        if (n.kind == Token::Kind::Float) {
            o.kind = Operand::Kind::Float;
            o.fval = -lx_.next().fval;
            return o;
        }
        lx_.fail(n.loc, "expected a number after '-'");
    }
    if (t.kind != Token::Kind::Ident)
        lx_.fail(t.loc, "expected an operand, got '" + t.text + "'");
    if (t.text == "null") {
        lx_.next();
        o.kind = Operand::Kind::Null;
        return o;
    }
    if (t.text == "sizeof") {
        lx_.next();
        lx_.expect("(");
        o.kind = Operand::Kind::SizeOf;
        o.size_of = dp_.parse_type();
        lx_.expect(")");
        return o;
    }
    o.kind = Operand::Kind::Var;
    o.name = lx_.next().text;
    return o;
}

Expr Parser::parse_expr() {
    Expr e;
    e.loc = lx_.peek().loc;
    const Token &t = lx_.peek();
    if (t.kind == Token::Kind::Ident) {
        if (t.text == "load") {
            lx_.next();
            e.kind = Expr::Kind::Load;
            e.a = parse_operand();
            return e;
        }
        if (t.text == "field") {
            lx_.next();
            e.kind = Expr::Kind::Field;
            e.a = parse_operand();
            lx_.expect(",");
            e.field = lx_.expect_ident("member name").text;
            return e;
        }
        if (t.text == "index") {
            lx_.next();
            e.kind = Expr::Kind::Index;
            e.a = parse_operand();
            lx_.expect(",");
            e.b = parse_operand();
            return e;
        }
        if (t.text == "cast") {
            lx_.next();
            e.kind = Expr::Kind::Cast;
            e.a = parse_operand();
            return e;
        }
        if (t.text == "call") {
            lx_.next();
            e.kind = Expr::Kind::Call;
            e.callee = lx_.expect_ident("function name").text;
            lx_.expect("(");
            if (!lx_.at(")")) {
                do {
                    e.args.push_back(parse_operand());
                } while (lx_.accept(","));
            }
            lx_.expect(")");
            return e;
        }
        if (t.text == "malloc") {
            lx_.next();
            e.kind = Expr::Kind::Malloc;
            if (lx_.accept("<")) {
                e.alloc_elem = dp_.parse_type();
                e.explicit_alloc_type = true;
                lx_.expect(">");
            }
            lx_.expect("(");
            e.a = parse_operand();
            lx_.expect(")");
            return e;
        }
        if (t.text == "new") {
            lx_.next();
            e.kind = Expr::Kind::New;
            // element type; a trailing [n] is the count
            e.alloc_elem = dp_.parse_type_no_suffix();
            if (lx_.accept("[")) {
                e.a = parse_operand();
                lx_.expect("]");
            } else {
                e.a = Operand::imm(1, e.loc);
            }
            return e;
        }
    }
    e.a = parse_operand();
    struct {
        const char *text;
        BinOp op;
    } const ops[] = {{"==", BinOp::Eq}, {"!=", BinOp::Ne}, {"<=", BinOp::Le}, {">=", BinOp::Ge},
                     {"<", BinOp::Lt},  {">", BinOp::Gt},  {"+", BinOp::Add}, {"-", BinOp::Sub},
                     {"*", BinOp::Mul}, {"/", BinOp::Div}, {"%", BinOp::Mod}};
    for (const auto &cand : ops) {
        if (lx_.at(cand.text)) {
            lx_.next();
            e.kind = Expr::Kind::Bin;
            e.op = cand.op;
            e.b = parse_operand();
            return e;
        }
    }
    e.kind = Expr::Kind::Opnd;
    return e;
}

Expr Parser::parse_cond() {
    bool paren = lx_.accept("(");
    Expr e = parse_expr();
    if (paren)
        lx_.expect(")");
    return e;
}

StmtPtr Parser::parse_stmt() {
    auto s = std::make_unique<Stmt>();
    s->loc = lx_.peek().loc;
    const Token &t = lx_.peek();
    if (t.kind != Token::Kind::Ident)
        lx_.fail(t.loc, "expected a statement, got '" + t.text + "'");

    if (t.text == "var") {
        lx_.next();
        Token name = lx_.expect_ident("variable name");
        check_name(name);
        lx_.expect(":");
        s->kind = Stmt::Kind::VarDecl;
        s->name = name.text;
        s->type = dp_.parse_type();
        lx_.expect(";");
        return s;
    }
    if (t.text == "if") {
        lx_.next();
        s->kind = Stmt::Kind::If;
        s->cond = parse_cond();
        s->then_blk = parse_block();
        if (lx_.accept("else")) {
            if (lx_.at("if")) {
                Block b;
                b.stmts.push_back(parse_stmt());
                s->else_blk = std::move(b);
            } else {
                s->else_blk = parse_block();
            }
        }
        return s;
    }
    if (t.text == "while") {
        lx_.next();
        s->kind = Stmt::Kind::While;
        s->cond = parse_cond();
        s->then_blk = parse_block();
        return s;
    }
    if (t.text == "return") {
        lx_.next();
        s->kind = Stmt::Kind::Return;
        if (!lx_.at(";")) {
            s->a = parse_operand();
            s->has_value = true;
        }
        lx_.expect(";");
        return s;
    }
    if (t.text == "store") {
        lx_.next();
        s->kind = Stmt::Kind::Store;
        s->a = parse_operand();
        lx_.expect(",");
        s->b = parse_operand();
        lx_.expect(";");
        return s;
    }
    if (t.text == "free") {
        lx_.next();
        s->kind = Stmt::Kind::Free;
        s->a = parse_operand();
        lx_.expect(";");
        return s;
    }
    if (t.text == "call") {
        s->kind = Stmt::Kind::CallStmt;
        s->expr = parse_expr();
        lx_.expect(";");
        return s;
    }

    // name ':' type '=' expr  |  name '=' expr
    Token name = lx_.expect_ident("a statement");
    check_name(name);
    s->name = name.text;
    if (lx_.accept(":")) {
        s->kind = Stmt::Kind::Decl;
        s->type = dp_.parse_type();
        lx_.expect("=", "in the declaration");
        s->expr = parse_expr();
        lx_.expect(";");
        return s;
    }
    if (lx_.accept("=")) {
        s->kind = Stmt::Kind::Assign;
        s->expr = parse_expr();
        lx_.expect(";");
        return s;
    }
    lx_.fail(name.loc, "expected ':' or '=' after '" + name.text + "'");
}

Block Parser::parse_block() {
    Block b;
    lx_.expect("{", "to open a block");
    while (!lx_.at("}"))
        b.stmts.push_back(parse_stmt());
    lx_.expect("}");
    return b;
}

Function Parser::parse_function() {
    Function fn;
    fn.loc = lx_.peek().loc;
    lx_.expect("fn");
    Token name = lx_.expect_ident("function name");
    check_name(name);
    fn.name = name.text;
    lx_.expect("(");
    if (!lx_.at(")")) {
        do {
            Param p;
            Token pn = lx_.expect_ident("parameter name");
            check_name(pn);
            p.name = pn.text;
            p.loc = pn.loc;
            lx_.expect(":");
            p.type = dp_.parse_type();
            fn.params.push_back(std::move(p));
        } while (lx_.accept(","));
    }
    lx_.expect(")");
    if (lx_.accept("->"))
        fn.ret = dp_.parse_type();
    fn.body = parse_block();
    return fn;
}

Program Parser::run() {
    while (!lx_.at_end()) {
        if (dp_.at_record_decl()) {
            prog_.decls.push_back(dp_.parse_record_decl());
        } else if (lx_.at("fn")) {
            prog_.functions.push_back(parse_function());
        } else {
            lx_.fail(lx_.peek().loc,
                     "expected a record declaration or function, got '" + lx_.peek().text + "'");
        }
    }
    return std::move(prog_);
}

// ---------------------------------------------------------------------------
// Static checking. Fills the type annotations the instrumenter and the
// interpreter rely on.

class Checker {
  public:
    explicit Checker(Program &p) : prog_(p), u_(*p.universe) {}

    void run() {
        for (const auto &f : prog_.functions) {
            if (fns_.count(f.name))
                fail(f.loc, "function '" + f.name + "' redefined");
            fns_[f.name] = &f;
        }
        for (auto &f : prog_.functions)
            check_function(f);
    }

  private:
    struct OpType {
        TypeRef t = nullptr;
        bool is_null = false;
        bool is_int_lit = false;
        bool is_float_lit = false;
    };

    [[noreturn]] void fail(Loc loc, const std::string &msg) const {
        throw ParseError(prog_.filename + ":" + std::to_string(loc.line) + ":" +
                         std::to_string(loc.col) + ": " + msg);
    }

    TypeRef void_ptr() { return u_.address_of(u_.fundamental("void")); }

    OpType operand_type(const Operand &o) {
        switch (o.kind) {
        case Operand::Kind::Var: {
            auto it = vars_.find(o.name);
            if (it == vars_.end())
                fail(o.loc, "use of undeclared variable '" + o.name + "'");
            return {it->second, false, false, false};
        }
        case Operand::Kind::Int:
            return {u_.fundamental("long"), false, true, false};
        case Operand::Kind::Float:
            return {u_.fundamental("double"), false, false, true};
        case Operand::Kind::Null:
            return {nullptr, true, false, false};
        case Operand::Kind::SizeOf:
            return {u_.fundamental("long"), false, true, false};
        }
        fail(o.loc, "bad operand");
    }

    bool assignable(TypeRef dst, const OpType &src) {
        if (src.is_null)
            return is_pointer(dst);
        if (src.is_int_lit || src.is_float_lit)
            return is_numeric(dst);
        if (is_numeric(dst) && is_numeric(src.t))
            return true;
        if (is_pointer(dst) && is_pointer(src.t))
            return dst == src.t || is_void_ptr(dst) || is_void_ptr(src.t);
        return false;
    }

    OpType numeric_operand(const Operand &o, const char *what) {
        OpType t = operand_type(o);
        if (!t.is_int_lit && !t.is_float_lit && !is_numeric(t.t))
            fail(o.loc, std::string(what) + " must be numeric");
        return t;
    }

    void integer_operand(const Operand &o, const char *what) {
        OpType t = operand_type(o);
        if (t.is_float_lit || (!t.is_int_lit && !is_integer(t.t)))
            fail(o.loc, std::string(what) + " must be an integer");
    }

    TypeRef pointer_var(const Operand &o, const char *what) {
        if (o.kind != Operand::Kind::Var)
            fail(o.loc, std::string(what) + " must be a variable");
        OpType t = operand_type(o);
        if (!is_pointer(t.t))
            fail(o.loc, "'" + o.name + "' is not an address");
        return t.t;
    }

    OpType check_expr(Expr &e, TypeRef dst) {
        switch (e.kind) {
        case Expr::Kind::Opnd: {
            OpType t = operand_type(e.a);
            e.rtype = t.t;
            return t;
        }
        case Expr::Kind::Bin: {
            OpType lhs = operand_type(e.a);
            OpType rhs = operand_type(e.b);
            auto pointerish = [](const OpType &o) { return o.is_null || is_pointer(o.t); };
            auto numericish = [](const OpType &o) {
                return o.is_int_lit || o.is_float_lit || is_numeric(o.t);
            };
            if (is_rel(e.op)) {
                bool ok = (numericish(lhs) && numericish(rhs)) ||
                          (pointerish(lhs) && pointerish(rhs));
                if (!ok)
                    fail(e.loc, "incomparable operands");
                e.rtype = u_.fundamental("int");
                return {e.rtype, false, false, false};
            }
            if (!numericish(lhs) || !numericish(rhs))
                fail(e.loc, "arithmetic needs numeric operands");
            if (e.op == BinOp::Mod &&
                (lhs.is_float_lit || rhs.is_float_lit || is_float_type(lhs.t) ||
                 is_float_type(rhs.t)))
                fail(e.loc, "'%' needs integer operands");
            bool fl = lhs.is_float_lit || rhs.is_float_lit || is_float_type(lhs.t) ||
                      is_float_type(rhs.t);
            e.rtype = u_.fundamental(fl ? "double" : "long");
            return {e.rtype, false, false, false};
        }
        case Expr::Kind::Load: {
            TypeRef pt = pointer_var(e.a, "load address");
            TypeRef pointee = pt->target();
            if (!loadable(pointee))
                fail(e.loc, "cannot load a value of type " + pointee->display());
            e.mem_elem = pointee;
            e.rtype = pointee;
            return {pointee, false, false, false};
        }
        case Expr::Kind::Field: {
            TypeRef pt = pointer_var(e.a, "field base");
            TypeRef rec = pt->target();
            if (!rec->is_record())
                fail(e.loc, rec->display() + " has no members");
            const Field *f = find_field(rec, e.field);
            if (!f)
                fail(e.loc, rec->display() + " has no member '" + e.field + "'");
            e.field_offset = f->offset;
            e.mem_elem = rec;
            TypeRef mt = f->type;
            if (f->is_fam) {
                e.field_is_fam = true;
                TypeRef el = mt->elem();
                e.field_width = el->size();
                e.rtype = u_.address_of(el);
            } else if (mt->kind() == TypeKind::Array) {
                e.field_width = mt->size();
                e.rtype = u_.address_of(mt->elem());
            } else {
                e.field_width = mt->size();
                e.rtype = u_.address_of(mt);
            }
            return {e.rtype, false, false, false};
        }
        case Expr::Kind::Index: {
            TypeRef pt = pointer_var(e.a, "index base");
            TypeRef pointee = pt->target();
            if (pointee->kind() == TypeKind::Function ||
                (pointee->kind() == TypeKind::Fundamental && pointee->size() == 0))
                fail(e.loc, "cannot index a " + pt->display());
            integer_operand(e.b, "index");
            e.index_scale = pointee->size();
            e.mem_elem = pointee;
            e.rtype = pt;
            return {pt, false, false, false};
        }
        case Expr::Kind::Cast: {
            if (!dst)
                fail(e.loc, "cast is only valid as the right-hand side of an assignment");
            OpType src = operand_type(e.a);
            if (is_pointer(dst)) {
                bool ok = src.is_null || is_pointer(src.t) || src.is_int_lit ||
                          is_integer(src.t);
                if (!ok)
                    fail(e.loc, "cannot cast this operand to " + dst->display());
            } else if (is_numeric(dst)) {
                bool ok = src.is_int_lit || src.is_float_lit || is_numeric(src.t) ||
                          (is_pointer(src.t) && is_integer(dst));
                if (!ok)
                    fail(e.loc, "cannot cast this operand to " + dst->display());
            } else {
                fail(e.loc, "cannot cast to " + dst->display());
            }
            e.rtype = dst;
            return {dst, false, false, false};
        }
        case Expr::Kind::Call: {
            auto it = fns_.find(e.callee);
            if (it == fns_.end())
                fail(e.loc, "call to unknown function '" + e.callee + "'");
            const Function *callee = it->second;
            if (e.args.size() != callee->params.size())
                fail(e.loc, "'" + e.callee + "' takes " +
                                std::to_string(callee->params.size()) + " arguments, got " +
                                std::to_string(e.args.size()));
            for (size_t i = 0; i < e.args.size(); ++i) {
                OpType at = operand_type(e.args[i]);
                if (!assignable(callee->params[i].type, at))
                    fail(e.args[i].loc, "argument " + std::to_string(i + 1) +
                                            " does not match parameter '" +
                                            callee->params[i].name + "'");
            }
            e.rtype = callee->ret;
            return {callee->ret, false, false, false};
        }
        case Expr::Kind::Malloc: {
            integer_operand(e.a, "allocation size");
            e.rtype = e.explicit_alloc_type ? u_.address_of(e.alloc_elem) : void_ptr();
            return {e.rtype, false, false, false};
        }
        case Expr::Kind::New: {
            if (e.alloc_elem->size() == 0)
                fail(e.loc, "cannot allocate " + e.alloc_elem->display());
            integer_operand(e.a, "element count");
            e.rtype = u_.address_of(e.alloc_elem);
            return {e.rtype, false, false, false};
        }
        }
        fail(e.loc, "bad expression");
    }

    void check_stmt(Stmt &s) {
        switch (s.kind) {
        case Stmt::Kind::Decl: {
            if (vars_.count(s.name))
                fail(s.loc, "'" + s.name + "' redeclared");
            if (!is_scalar(s.type))
                fail(s.loc, "locals hold numbers or addresses; use 'var' for a " +
                                s.type->display() + " object");
            OpType rhs = check_expr(*s.expr, s.type);
            if (s.expr->kind == Expr::Kind::Call && !rhs.t)
                fail(s.loc, "'" + s.expr->callee + "' returns nothing");
            if (!assignable(s.type, rhs) && s.expr->kind != Expr::Kind::Cast)
                fail(s.loc, "cannot initialise " + s.type->display() + " from this expression");
            vars_[s.name] = s.type;
            return;
        }
        case Stmt::Kind::Assign: {
            auto it = vars_.find(s.name);
            if (it == vars_.end())
                fail(s.loc, "assignment to undeclared variable '" + s.name + "'");
            s.type = it->second;
            OpType rhs = check_expr(*s.expr, s.type);
            if (s.expr->kind == Expr::Kind::Call && !rhs.t)
                fail(s.loc, "'" + s.expr->callee + "' returns nothing");
            if (!assignable(s.type, rhs) && s.expr->kind != Expr::Kind::Cast)
                fail(s.loc, "cannot assign this expression to '" + s.name + "'");
            return;
        }
        case Stmt::Kind::Store: {
            TypeRef pt = pointer_var(s.a, "store address");
            TypeRef pointee = pt->target();
            if (!loadable(pointee))
                fail(s.loc, "cannot store a value of type " + pointee->display());
            OpType val = operand_type(s.b);
            if (!assignable(pointee, val))
                fail(s.b.loc, "stored value does not fit " + pointee->display());
            s.store_elem = pointee;
            return;
        }
        case Stmt::Kind::Free:
            pointer_var(s.a, "free target");
            return;
        case Stmt::Kind::Return: {
            if (!cur_->ret) {
                if (s.has_value)
                    fail(s.loc, "'" + cur_->name + "' returns nothing");
                return;
            }
            if (!s.has_value)
                fail(s.loc, "'" + cur_->name + "' must return a value");
            OpType t = operand_type(s.a);
            if (!assignable(cur_->ret, t))
                fail(s.a.loc, "return value does not match " + cur_->ret->display());
            return;
        }
        case Stmt::Kind::If:
        case Stmt::Kind::While: {
            OpType c = check_expr(*s.cond, nullptr);
            if (s.cond->kind != Expr::Kind::Bin && s.cond->kind != Expr::Kind::Opnd)
                fail(s.cond->loc, "conditions are comparisons or plain operands");
            if (s.cond->kind == Expr::Kind::Opnd && c.is_null)
                fail(s.cond->loc, "condition is always false");
            check_block(s.then_blk);
            check_block(s.else_blk);
            return;
        }
        case Stmt::Kind::CallStmt:
            check_expr(*s.expr, nullptr);
            return;
        case Stmt::Kind::VarDecl: {
            if (vars_.count(s.name))
                fail(s.loc, "'" + s.name + "' redeclared");
            TypeRef obj = s.type;
            if (obj->size() == 0)
                fail(s.loc, "cannot create a zero-sized object");
            TypeRef elem = obj->kind() == TypeKind::Array ? obj->elem() : obj;
            vars_[s.name] = u_.address_of(elem);
            return;
        }
        default:
            fail(s.loc, "instrumentation statement in source input");
        }
    }

    void check_block(Block &b) {
        for (auto &s : b.stmts)
            check_stmt(*s);
    }

    void check_function(Function &fn) {
        cur_ = &fn;
        vars_.clear();
        for (const auto &p : fn.params) {
            if (!is_scalar(p.type))
                fail(p.loc, "parameters hold numbers or addresses");
            if (vars_.count(p.name))
                fail(p.loc, "parameter '" + p.name + "' redeclared");
            vars_[p.name] = p.type;
        }
        if (fn.ret && !is_scalar(fn.ret))
            fail(fn.loc, "functions return numbers or addresses");
        check_block(fn.body);
    }

    Program &prog_;
    TypeUniverse &u_;
    std::map<std::string, const Function *> fns_;
    std::map<std::string, TypeRef> vars_;
    const Function *cur_ = nullptr;
};

} // namespace

Program parse_program(std::string_view text, std::string filename) {
    Parser parser(text, std::move(filename));
    Program prog = parser.run();
    Checker(prog).run();
    infer_malloc_types(prog);
    return prog;
}

std::shared_ptr<TypeUniverse> parse_type_file(std::string_view text, std::string filename,
                                              std::vector<TypeRef> *decls) {
    Program prog = parse_program(text, std::move(filename));
    if (decls)
        *decls = prog.decls;
    return prog.universe;
}

} // namespace etsan::ir
