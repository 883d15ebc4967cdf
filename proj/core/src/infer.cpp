#include "etsan/ir.hpp"

#include <map>
#include <string>

namespace etsan::ir {

namespace {

// Tracks which live variables still alias an untyped malloc result. The
// first load, store or member address taken through an alias fixes the
// allocation's element type; results never used that way default to char.
class Inference {
  public:
    void run(Function &fn) {
        alias_.clear();
        walk(fn.body);
    }

  private:
    void resolve(Expr *alloc, TypeRef elem) {
        if (!alloc->alloc_elem)
            alloc->alloc_elem = elem;
    }

    void use_through(const std::string &var, TypeRef elem) {
        auto it = alias_.find(var);
        if (it != alias_.end())
            resolve(it->second, elem);
    }

    void note_rhs_uses(const Expr &e) {
        switch (e.kind) {
        case Expr::Kind::Load:
            use_through(e.a.name, e.mem_elem);
            break;
        case Expr::Kind::Field:
            use_through(e.a.name, e.mem_elem);
            break;
        default:
            break;
        }
    }

    void track_target(const std::string &name, Expr &e) {
        if (e.kind == Expr::Kind::Malloc && !e.alloc_elem) {
            alias_[name] = &e;
            return;
        }
        const std::string *src = nullptr;
        if (e.kind == Expr::Kind::Opnd && e.a.kind == Operand::Kind::Var)
            src = &e.a.name;
        else if (e.kind == Expr::Kind::Cast && e.a.kind == Operand::Kind::Var)
            src = &e.a.name;
        else if (e.kind == Expr::Kind::Index)
            src = &e.a.name;
        if (src) {
            auto it = alias_.find(*src);
            if (it != alias_.end() && !it->second->alloc_elem) {
                alias_[name] = it->second;
                return;
            }
        }
        alias_.erase(name);
    }

    void walk(Block &b) {
        for (auto &sp : b.stmts) {
            Stmt &s = *sp;
            switch (s.kind) {
            case Stmt::Kind::Decl:
            case Stmt::Kind::Assign:
                note_rhs_uses(*s.expr);
                track_target(s.name, *s.expr);
                break;
            case Stmt::Kind::Store:
                use_through(s.a.name, s.store_elem);
                break;
            case Stmt::Kind::If:
            case Stmt::Kind::While:
                walk(s.then_blk);
                walk(s.else_blk);
                break;
            default:
                break;
            }
        }
    }

    std::map<std::string, Expr *> alias_;
};

void default_remaining(Block &b, TypeRef fallback) {
    for (auto &sp : b.stmts) {
        Stmt &s = *sp;
        if (s.expr && s.expr->kind == Expr::Kind::Malloc && !s.expr->alloc_elem)
            s.expr->alloc_elem = fallback;
        default_remaining(s.then_blk, fallback);
        default_remaining(s.else_blk, fallback);
    }
}

} // namespace

void infer_malloc_types(Program &prog) {
    Inference inf;
    TypeRef ch = prog.universe->fundamental("char");
    for (auto &fn : prog.functions) {
        inf.run(fn);
        default_remaining(fn.body, ch);
    }
}

} // namespace etsan::ir
