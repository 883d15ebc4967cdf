#include "etsan/ir.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace etsan::ir {

namespace {

std::string bname(const std::string &var) { return "__b_" + var; }

bool is_pointer(TypeRef t) { return t && t->kind() == TypeKind::AddressOf; }

bool checkable_pointee(TypeRef p) {
    return !(p->kind() == TypeKind::Fundamental && p->size() == 0);
}

// dst is reachable from src purely through bases at offset zero, so a cast
// src -> dst can never raise a type error.
bool base_at_zero(TypeRef src, TypeRef dst) {
    if (src == dst)
        return true;
    if (!src->is_record())
        return false;
    for (const Field &f : src->fields())
        if (f.is_base && f.offset == 0 && base_at_zero(f.type, dst))
            return true;
    return false;
}

// Static types of every variable in a function (params, decls, var objects).
class VarTypes {
  public:
    VarTypes(const Function &fn, TypeUniverse &u) {
        for (const auto &p : fn.params)
            types_[p.name] = p.type;
        walk(fn.body, u);
    }

    TypeRef of(const std::string &name) const {
        auto it = types_.find(name);
        return it == types_.end() ? nullptr : it->second;
    }
    TypeRef pointee(const std::string &name) const {
        TypeRef t = of(name);
        return is_pointer(t) ? t->target() : nullptr;
    }

  private:
    void walk(const Block &b, TypeUniverse &u) {
        for (const auto &sp : b.stmts) {
            const Stmt &s = *sp;
            if (s.kind == Stmt::Kind::Decl || s.kind == Stmt::Kind::Assign) {
                if (s.type)
                    types_[s.name] = s.type;
            } else if (s.kind == Stmt::Kind::VarDecl) {
                TypeRef elem = s.type->kind() == TypeKind::Array ? s.type->elem() : s.type;
                types_[s.name] = u.address_of(elem);
            }
            walk(s.then_blk, u);
            walk(s.else_blk, u);
        }
    }

    std::map<std::string, TypeRef> types_;
};

class Emitter {
  public:
    Emitter(const Function &fn, Variant variant, TypeUniverse &u)
        : fn_(fn), variant_(variant), types_(fn, u) {}

    Function run() {
        collect_uses(fn_.body);
        close_uses();

        Function out;
        out.name = fn_.name;
        out.params = fn_.params;
        out.ret = fn_.ret;
        out.loc = fn_.loc;
        for (const auto &p : fn_.params)
            if (is_pointer(p.type))
                emit_input_def(p.name, p.loc, out.body);
        emit_into(fn_.body, out.body);
        return out;
    }

  private:
    bool used(const std::string &name) const { return used_.count(name) != 0; }

    void collect_uses(const Block &b) {
        for (const auto &sp : b.stmts) {
            const Stmt &s = *sp;
            if ((s.kind == Stmt::Kind::Decl || s.kind == Stmt::Kind::Assign) && s.expr) {
                const Expr &e = *s.expr;
                switch (e.kind) {
                case Expr::Kind::Load:
                    deref_.insert(e.a.name);
                    break;
                case Expr::Kind::Field:
                case Expr::Kind::Index:
                    derived_[s.name].insert(e.a.name);
                    break;
                case Expr::Kind::Cast:
                case Expr::Kind::Opnd:
                    if (e.a.kind == Operand::Kind::Var)
                        derived_[s.name].insert(e.a.name);
                    break;
                default:
                    break;
                }
            } else if (s.kind == Stmt::Kind::Store) {
                deref_.insert(s.a.name);
            }
            collect_uses(s.then_blk);
            collect_uses(s.else_blk);
        }
    }

    void close_uses() {
        used_ = deref_;
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto &[dst, srcs] : derived_) {
                if (!used_.count(dst))
                    continue;
                for (const auto &src : srcs)
                    if (used_.insert(src).second)
                        changed = true;
            }
        }
    }

    static StmtPtr make(Stmt::Kind k, Loc loc) {
        auto s = std::make_unique<Stmt>();
        s->kind = k;
        s->loc = loc;
        return s;
    }

    void push_wide(const std::string &var, Loc loc, Block &out) {
        auto s = make(Stmt::Kind::BoundsAssign, loc);
        s->bounds = bname(var);
        s->bsrc = BoundsSrc::Wide;
        out.stmts.push_back(std::move(s));
    }

    void push_copy(const std::string &dst, const std::string &src, Loc loc, Block &out) {
        if (dst == src)
            return;
        auto s = make(Stmt::Kind::BoundsAssign, loc);
        s->bounds = bname(dst);
        s->bounds_src = bname(src);
        s->bsrc = BoundsSrc::Copy;
        out.stmts.push_back(std::move(s));
    }

    void push_narrow(const std::string &dst, const std::string &src, uint64_t width,
                     bool lower_only, Loc loc, Block &out) {
        auto s = make(Stmt::Kind::BoundsAssign, loc);
        s->bounds = bname(dst);
        s->bounds_src = bname(src);
        s->bsrc = BoundsSrc::Narrow;
        s->a = Operand::var(dst, loc);
        s->width = width;
        s->narrow_lower_only = lower_only;
        out.stmts.push_back(std::move(s));
    }

    void push_check_type(const std::string &var, TypeRef query, Loc loc, Block &out,
                         bool keep_bounds) {
        auto s = make(Stmt::Kind::CheckType, loc);
        s->a = Operand::var(var, loc);
        s->query = query;
        if (keep_bounds)
            s->bounds = bname(var);
        out.stmts.push_back(std::move(s));
    }

    void push_bounds_get(const std::string &var, Loc loc, Block &out) {
        auto s = make(Stmt::Kind::BoundsGetS, loc);
        s->a = Operand::var(var, loc);
        s->bounds = bname(var);
        out.stmts.push_back(std::move(s));
    }

    void push_access_check(const Operand &addr, uint64_t width, TypeRef elem, AccessKind kind,
                           Loc loc, Block &out) {
        if (variant_ == Variant::Type)
            return;
        auto s = make(Stmt::Kind::CheckBounds, loc);
        s->a = addr;
        s->width = width;
        s->bounds = bname(addr.name);
        s->access = kind;
        s->query = elem;
        out.stmts.push_back(std::move(s));
    }

    void emit_escape(const Operand &o, Loc loc, Block &out) {
        if (o.kind != Operand::Kind::Var)
            return;
        TypeRef t = types_.of(o.name);
        if (!is_pointer(t))
            return;
        push_access_check(o, 0, t->target(), AccessKind::Escape, loc, out);
    }

    // Bounds definition for a pointer produced by an allocation, call
    // result, load or parameter (schema rows (a)-(c)).
    void emit_input_def(const std::string &var, Loc loc, Block &out) {
        TypeRef p = types_.pointee(var);
        if (!p)
            return;
        switch (variant_) {
        case Variant::Type:
            return;
        case Variant::Bounds:
            if (used(var))
                push_bounds_get(var, loc, out);
            else
                push_wide(var, loc, out);
            return;
        case Variant::Full:
            if (used(var) && checkable_pointee(p))
                push_check_type(var, p, loc, out, true);
            else
                push_wide(var, loc, out);
            return;
        }
    }

    // Row (d): cast results.
    void emit_cast_def(const Stmt &s, Block &out) {
        TypeRef dst_t = s.type;
        if (!is_pointer(dst_t))
            return;
        TypeRef dstp = dst_t->target();
        switch (variant_) {
        case Variant::Type:
            if (checkable_pointee(dstp))
                push_check_type(s.name, dstp, s.loc, out, false);
            return;
        case Variant::Bounds:
            if (used(s.name))
                push_bounds_get(s.name, s.loc, out);
            else
                push_wide(s.name, s.loc, out);
            return;
        case Variant::Full:
            if (used(s.name) && checkable_pointee(dstp))
                push_check_type(s.name, dstp, s.loc, out, true);
            else
                push_wide(s.name, s.loc, out);
            return;
        }
    }

    void emit_value_def(const Stmt &s, Block &out) {
        const Expr &e = *s.expr;
        bool addr = is_pointer(s.type);
        switch (e.kind) {
        case Expr::Kind::Load:
            push_access_check(e.a, e.mem_elem->size(), e.mem_elem, AccessKind::Access, s.loc,
                              out);
            break;
        case Expr::Kind::Call:
            for (const auto &arg : e.args)
                emit_escape(arg, s.loc, out);
            break;
        default:
            break;
        }

        out.stmts.push_back(std::make_unique<Stmt>(s.clone()));

        if (!addr)
            return;
        switch (e.kind) {
        case Expr::Kind::Malloc:
        case Expr::Kind::New:
        case Expr::Kind::Call:
        case Expr::Kind::Load:
            emit_input_def(s.name, s.loc, out);
            break;
        case Expr::Kind::Cast:
            emit_cast_def(s, out);
            break;
        case Expr::Kind::Field:
            if (variant_ == Variant::Full)
                push_narrow(s.name, e.a.name, e.field_width, e.field_is_fam, s.loc, out);
            else if (variant_ == Variant::Bounds)
                push_copy(s.name, e.a.name, s.loc, out);
            break;
        case Expr::Kind::Index:
            if (variant_ != Variant::Type)
                push_copy(s.name, e.a.name, s.loc, out);
            break;
        case Expr::Kind::Opnd:
            if (variant_ == Variant::Type)
                break;
            if (e.a.kind == Operand::Kind::Var)
                push_copy(s.name, e.a.name, s.loc, out);
            else
                push_wide(s.name, s.loc, out);
            break;
        case Expr::Kind::Bin:
            break;
        }
    }

    void emit_stmt(const Stmt &s, Block &out) {
        switch (s.kind) {
        case Stmt::Kind::Decl:
        case Stmt::Kind::Assign:
            emit_value_def(s, out);
            return;
        case Stmt::Kind::Store:
            emit_escape(s.b, s.loc, out);
            push_access_check(s.a, s.store_elem->size(), s.store_elem, AccessKind::Access,
                              s.loc, out);
            out.stmts.push_back(std::make_unique<Stmt>(s.clone()));
            return;
        case Stmt::Kind::Return:
            if (s.has_value)
                emit_escape(s.a, s.loc, out);
            out.stmts.push_back(std::make_unique<Stmt>(s.clone()));
            return;
        case Stmt::Kind::CallStmt:
            for (const auto &arg : s.expr->args)
                emit_escape(arg, s.loc, out);
            out.stmts.push_back(std::make_unique<Stmt>(s.clone()));
            return;
        case Stmt::Kind::VarDecl:
            out.stmts.push_back(std::make_unique<Stmt>(s.clone()));
            emit_input_def(s.name, s.loc, out);
            return;
        case Stmt::Kind::If:
        case Stmt::Kind::While: {
            auto c = make(s.kind, s.loc);
            c->cond = s.cond;
            emit_into(s.then_blk, c->then_blk);
            emit_into(s.else_blk, c->else_blk);
            out.stmts.push_back(std::move(c));
            return;
        }
        default:
            out.stmts.push_back(std::make_unique<Stmt>(s.clone()));
            return;
        }
    }

    void emit_into(const Block &in, Block &out) {
        for (const auto &sp : in.stmts)
            emit_stmt(*sp, out);
    }

    const Function &fn_;
    Variant variant_;
    VarTypes types_;
    std::set<std::string> deref_;
    std::set<std::string> used_;
    std::map<std::string, std::set<std::string>> derived_;
};

// ---------------------------------------------------------------------------
// Optimization passes over instrumented functions.

// (1) CheckType directly after a cast that cannot change the type: replace
// with a bounds copy from the cast source (or drop it when it kept no
// bounds, as in the type-only variant).
void drop_never_fail_casts(Function &fn, const VarTypes &types) {
    auto walk = [&](auto &&self, Block &b) -> void {
        for (size_t i = 0; i < b.stmts.size(); ++i) {
            Stmt &s = *b.stmts[i];
            self(self, s.then_blk);
            self(self, s.else_blk);
            if (s.kind != Stmt::Kind::CheckType || i == 0)
                continue;
            const Stmt &prev = *b.stmts[i - 1];
            if (prev.kind != Stmt::Kind::Decl && prev.kind != Stmt::Kind::Assign)
                continue;
            if (!prev.expr || prev.expr->kind != Expr::Kind::Cast)
                continue;
            if (prev.name != s.a.name || prev.expr->a.kind != Operand::Kind::Var)
                continue;
            TypeRef srcp = types.pointee(prev.expr->a.name);
            if (!srcp || !base_at_zero(srcp, s.query))
                continue;
            if (s.bounds.empty()) {
                b.stmts.erase(b.stmts.begin() + static_cast<ptrdiff_t>(i));
                --i;
                continue;
            }
            std::string src_bounds = bname(prev.expr->a.name);
            if (src_bounds == s.bounds) {
                b.stmts.erase(b.stmts.begin() + static_cast<ptrdiff_t>(i));
                --i;
                continue;
            }
            Stmt copy;
            copy.kind = Stmt::Kind::BoundsAssign;
            copy.loc = s.loc;
            copy.bounds = s.bounds;
            copy.bounds_src = src_bounds;
            copy.bsrc = BoundsSrc::Copy;
            *b.stmts[i] = std::move(copy);
        }
    };
    walk(walk, fn.body);
}

// (2) CheckBounds subsumed by an earlier check on the same address variable
// and bounds within straight-line code.
void drop_subsumed_bounds(Function &fn) {
    struct Fact {
        std::string addr;
        std::string bounds;
        uint64_t width;
        AccessKind kind;
    };
    auto walk = [&](auto &&self, Block &b) -> void {
        std::vector<Fact> facts;
        auto kill_name = [&](const std::string &n) {
            std::erase_if(facts,
                          [&](const Fact &f) { return f.addr == n || f.bounds == n; });
        };
        for (size_t i = 0; i < b.stmts.size(); ++i) {
            Stmt &s = *b.stmts[i];
            switch (s.kind) {
            case Stmt::Kind::CheckBounds: {
                bool covered = false;
                for (const Fact &f : facts) {
                    if (f.addr != s.a.name || f.bounds != s.bounds)
                        continue;
                    if (s.access == AccessKind::Escape ||
                        (f.kind == AccessKind::Access && f.width >= s.width)) {
                        covered = true;
                        break;
                    }
                }
                if (covered) {
                    b.stmts.erase(b.stmts.begin() + static_cast<ptrdiff_t>(i));
                    --i;
                } else {
                    facts.push_back(Fact{s.a.name, s.bounds, s.width, s.access});
                }
                break;
            }
            case Stmt::Kind::Decl:
            case Stmt::Kind::Assign:
            case Stmt::Kind::VarDecl:
                kill_name(s.name);
                break;
            case Stmt::Kind::CheckType:
            case Stmt::Kind::BoundsGetS:
            case Stmt::Kind::BoundsAssign:
                if (!s.bounds.empty())
                    kill_name(s.bounds);
                break;
            case Stmt::Kind::If:
            case Stmt::Kind::While:
                self(self, s.then_blk);
                self(self, s.else_blk);
                facts.clear();
                break;
            default:
                break;
            }
        }
    };
    walk(walk, fn.body);
}

// (3) Narrowing that provably re-establishes the bounds it starts from:
// replaced by a copy. Value identity is tracked through copies, casts and
// zero-offset derivations.
void drop_redundant_narrows(Function &fn) {
    struct Constraint {
        std::string root;
        uint64_t width;
    };
    auto walk = [&](auto &&self, Block &b) -> void {
        std::map<std::string, std::string> root;
        std::map<std::string, Constraint> constraints;
        auto root_of = [&](const std::string &n) {
            auto it = root.find(n);
            return it == root.end() ? n : it->second;
        };
        auto kill_value = [&](const std::string &n) {
            std::erase_if(constraints,
                          [&](const auto &kv) { return kv.second.root == n; });
            std::erase_if(root, [&](const auto &kv) {
                return kv.first == n || kv.second == n;
            });
        };
        for (auto &sp : b.stmts) {
            Stmt &s = *sp;
            switch (s.kind) {
            case Stmt::Kind::Decl:
            case Stmt::Kind::Assign: {
                const Expr &e = *s.expr;
                std::string new_root;
                bool alias = false;
                if ((e.kind == Expr::Kind::Opnd || e.kind == Expr::Kind::Cast) &&
                    e.a.kind == Operand::Kind::Var) {
                    alias = true;
                } else if (e.kind == Expr::Kind::Field && e.field_offset == 0) {
                    alias = true;
                } else if (e.kind == Expr::Kind::Index &&
                           e.b.kind == Operand::Kind::Int && e.b.ival == 0) {
                    alias = true;
                }
                if (alias)
                    new_root = root_of(e.a.name);
                kill_value(s.name);
                if (alias && new_root != s.name)
                    root[s.name] = new_root;
                break;
            }
            case Stmt::Kind::VarDecl:
                kill_value(s.name);
                break;
            case Stmt::Kind::CheckType:
            case Stmt::Kind::BoundsGetS:
                if (!s.bounds.empty())
                    constraints.erase(s.bounds);
                break;
            case Stmt::Kind::BoundsAssign:
                switch (s.bsrc) {
                case BoundsSrc::Wide:
                    constraints.erase(s.bounds);
                    break;
                case BoundsSrc::Copy: {
                    auto it = constraints.find(s.bounds_src);
                    if (it != constraints.end())
                        constraints[s.bounds] = it->second;
                    else
                        constraints.erase(s.bounds);
                    break;
                }
                case BoundsSrc::Narrow: {
                    if (!s.narrow_lower_only) {
                        auto it = constraints.find(s.bounds_src);
                        if (it != constraints.end() && it->second.root == root_of(s.a.name) &&
                            s.width >= it->second.width) {
                            Constraint keep = it->second;
                            std::string dst = s.bounds, src = s.bounds_src;
                            Stmt copy;
                            copy.kind = Stmt::Kind::BoundsAssign;
                            copy.loc = s.loc;
                            copy.bounds = dst;
                            copy.bsrc = BoundsSrc::Copy;
                            copy.bounds_src = src;
                            s = std::move(copy);
                            constraints[dst] = keep;
                            break;
                        }
                        constraints[s.bounds] =
                            Constraint{root_of(s.a.name), s.width};
                    } else {
                        constraints.erase(s.bounds);
                    }
                    break;
                }
                }
                break;
            case Stmt::Kind::If:
            case Stmt::Kind::While:
                self(self, s.then_blk);
                self(self, s.else_blk);
                root.clear();
                constraints.clear();
                break;
            default:
                break;
            }
        }
    };
    walk(walk, fn.body);
}

} // namespace

Program optimize(const Program &instrumented, InstrumentOptions opts) {
    if (!instrumented.instrumented)
        throw Error("optimize needs an instrumented program");
    Program out = instrumented.clone_shell();
    for (const auto &fn : instrumented.functions) {
        Function f;
        f.name = fn.name;
        f.params = fn.params;
        f.ret = fn.ret;
        f.loc = fn.loc;
        f.body = clone_block(fn.body);
        VarTypes types(f, *out.universe);
        if (opts.opt_never_fail_casts)
            drop_never_fail_casts(f, types);
        if (opts.opt_subsumed_bounds)
            drop_subsumed_bounds(f);
        if (opts.opt_redundant_narrow)
            drop_redundant_narrows(f);
        out.functions.push_back(std::move(f));
    }
    return out;
}

Program instrument(const Program &prog, InstrumentOptions opts) {
    if (prog.instrumented)
        throw Error("program is already instrumented");
    Program out = prog.clone_shell();
    out.instrumented = true;
    for (const auto &fn : prog.functions) {
        Emitter em(fn, opts.variant, *prog.universe);
        out.functions.push_back(em.run());
    }
    if (opts.opt_never_fail_casts || opts.opt_subsumed_bounds || opts.opt_redundant_narrow)
        out = optimize(out, opts);
    return out;
}

InstrCounts count_checks(const Function &fn) {
    InstrCounts c;
    auto walk = [&](auto &&self, const Block &b) -> void {
        for (const auto &sp : b.stmts) {
            const Stmt &s = *sp;
            switch (s.kind) {
            case Stmt::Kind::CheckType:
                ++c.check_type;
                break;
            case Stmt::Kind::BoundsGetS:
                ++c.bounds_get;
                break;
            case Stmt::Kind::CheckBounds:
                ++c.check_bounds;
                break;
            case Stmt::Kind::BoundsAssign:
                if (s.bsrc == BoundsSrc::Narrow)
                    ++c.narrows;
                break;
            default:
                break;
            }
            self(self, s.then_blk);
            self(self, s.else_blk);
        }
    };
    walk(walk, fn.body);
    return c;
}

namespace {

struct AuditFail {
    std::string msg;
};

// Path-sensitive audit: walks each function keeping, per control-flow path,
// the set of still-valid CheckBounds facts (address var -> widest Access
// check) and the set of defined bounds variables. Facts die when the address
// variable is reassigned; joins intersect.
class Auditor {
  public:
    explicit Auditor(const Function &fn) : fn_(fn) {}

    void run() {
        Facts facts;
        std::set<std::string> defined;
        audit_block(fn_.body, facts, defined);
    }

  private:
    using Facts = std::map<std::string, uint64_t>;

    [[noreturn]] void fail(const Stmt &s, const std::string &msg) const {
        throw AuditFail{fn_.name + ":" + std::to_string(s.loc.line) + ": " + msg};
    }

    static void collect_assigned(const Block &b, std::set<std::string> &out) {
        for (const auto &sp : b.stmts) {
            const Stmt &s = *sp;
            if (s.kind == Stmt::Kind::Decl || s.kind == Stmt::Kind::Assign ||
                s.kind == Stmt::Kind::VarDecl)
                out.insert(s.name);
            collect_assigned(s.then_blk, out);
            collect_assigned(s.else_blk, out);
        }
    }

    static Facts intersect(const Facts &x, const Facts &y) {
        Facts out;
        for (const auto &[name, w] : x) {
            auto it = y.find(name);
            if (it != y.end())
                out[name] = std::min(w, it->second);
        }
        return out;
    }

    void require_guard(const Facts &facts, const Stmt &s, const std::string &addr,
                       uint64_t width) const {
        auto it = facts.find(addr);
        if (it == facts.end() || it->second < width)
            fail(s, "unguarded access through '" + addr + "'");
    }

    void audit_block(const Block &b, Facts &facts, std::set<std::string> &defined) const {
        for (const auto &sp : b.stmts) {
            const Stmt &s = *sp;
            switch (s.kind) {
            case Stmt::Kind::CheckType:
            case Stmt::Kind::BoundsGetS:
                if (!s.bounds.empty())
                    defined.insert(s.bounds);
                break;
            case Stmt::Kind::BoundsAssign:
                if (s.bsrc != BoundsSrc::Wide && !defined.count(s.bounds_src))
                    fail(s, "bounds '" + s.bounds_src + "' read before definition");
                defined.insert(s.bounds);
                break;
            case Stmt::Kind::CheckBounds: {
                if (!defined.count(s.bounds))
                    fail(s, "check against undefined bounds '" + s.bounds + "'");
                if (s.access == AccessKind::Access) {
                    uint64_t &w = facts[s.a.name];
                    w = std::max(w, s.width);
                }
                break;
            }
            case Stmt::Kind::Decl:
            case Stmt::Kind::Assign:
                if (s.expr->kind == Expr::Kind::Load)
                    require_guard(facts, s, s.expr->a.name, s.expr->mem_elem->size());
                facts.erase(s.name);
                break;
            case Stmt::Kind::VarDecl:
                facts.erase(s.name);
                break;
            case Stmt::Kind::Store:
                require_guard(facts, s, s.a.name, s.store_elem->size());
                break;
            case Stmt::Kind::If: {
                Facts f1 = facts, f2 = facts;
                auto d1 = defined, d2 = defined;
                audit_block(s.then_blk, f1, d1);
                audit_block(s.else_blk, f2, d2);
                facts = intersect(f1, f2);
                std::set<std::string> dj;
                for (const auto &n : d1)
                    if (d2.count(n))
                        dj.insert(n);
                defined = std::move(dj);
                break;
            }
            case Stmt::Kind::While: {
                std::set<std::string> killed;
                collect_assigned(s.then_blk, killed);
                Facts inv = facts;
                for (const auto &n : killed)
                    inv.erase(n);
                Facts fb = inv;
                auto db = defined;
                audit_block(s.then_blk, fb, db);
                facts = std::move(inv);
                break;
            }
            default:
                break;
            }
        }
    }

    const Function &fn_;
};

} // namespace

bool audit_instrumentation(const Program &prog, std::string *why) {
    if (!prog.instrumented) {
        if (why)
            *why = "program is not instrumented";
        return false;
    }
    try {
        for (const auto &fn : prog.functions)
            Auditor(fn).run();
    } catch (const AuditFail &f) {
        if (why)
            *why = f.msg;
        return false;
    }
    return true;
}

} // namespace etsan::ir
