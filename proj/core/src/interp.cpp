#include "etsan/ir.hpp"

#include <bit>
#include <map>
#include <string>
#include <vector>

namespace etsan::ir {

namespace {

struct Value {
    enum class K { Int, Float, Addr, Bounds };
    K k = K::Int;
    int64_t i = 0;
    double f = 0;
    uint64_t a = 0;
    AbsBounds b;
};

struct AbortSignal {};

bool signed_fundamental(TypeRef t) {
    const std::string &n = t->tag();
    return !(n == "bool" || n == "uchar" || n == "ushort" || n == "uint" || n == "ulong");
}

bool is_float_type(TypeRef t) { return t->tag() == "float" || t->tag() == "double"; }

class Interp {
  public:
    Interp(const Program &prog, const RunOptions &opts)
        : prog_(prog), opts_(opts), metas_(*prog.universe), space_(opts.space),
          reporter_(opts.mode, opts.abort_after), rt_(space_, metas_, reporter_) {}

    ExecReport run() {
        metas_.preregister_all();
        const Function *main_fn = prog_.find("main");
        if (!main_fn)
            throw Error(prog_.filename + ": no 'main' function");
        if (!main_fn->params.empty())
            throw Error(prog_.filename + ": 'main' takes no parameters");
        if (main_fn->ret && main_fn->ret->tag() != "int")
            throw Error(prog_.filename + ": 'main' must return int or nothing");

        ExecReport rep;
        try {
            Value v = call_function(*main_fn, {}, main_fn->loc);
            rep.return_value = v.k == Value::K::Addr ? static_cast<int64_t>(v.a) : v.i;
        } catch (const AbortSignal &) {
            rep.halted_by = ExecReport::Halt::Aborted;
        } catch (const MemFault &f) {
            rep.halted_by = ExecReport::Halt::Fault;
            rep.fault_message = f.what();
        }
        rep.counters = rt_.counters();
        rep.buckets = reporter_.buckets();
        rep.first_sites = reporter_.first_sites();
        rep.log = reporter_.log();
        rep.memory_digest = space_.memory_digest();
        rep.allocations = allocs_;
        return rep;
    }

  private:
    struct Frame {
        const Function *fn = nullptr;
        uint64_t id = 0;
        std::map<std::string, Value> vars;
    };

    [[noreturn]] void fault(Loc loc, const std::string &msg) const {
        throw MemFault(site(loc) + ": " + msg);
    }
    std::string site(Loc loc) const { return prog_.filename + ":" + std::to_string(loc.line); }

    void maybe_halt() const {
        if (reporter_.should_halt())
            throw AbortSignal{};
    }

    const TypeMeta *meta_of(TypeRef t) { return metas_.meta_of(t); }

    // ---- value plumbing ----

    int64_t as_int(const Value &v, Loc loc) const {
        switch (v.k) {
        case Value::K::Int:
            return v.i;
        case Value::K::Float:
            return static_cast<int64_t>(v.f);
        case Value::K::Addr:
            return static_cast<int64_t>(v.a);
        case Value::K::Bounds:
            break;
        }
        fault(loc, "bounds value used as a number");
    }

    uint64_t as_addr(const Value &v, Loc loc) const {
        if (v.k != Value::K::Addr)
            fault(loc, "value used as an address");
        return v.a;
    }

    static int64_t fit_int(uint64_t raw, uint64_t width, bool sign) {
        if (width >= 8)
            return static_cast<int64_t>(raw);
        uint64_t mask = (1ull << (width * 8)) - 1;
        raw &= mask;
        if (sign) {
            uint64_t sign_bit = 1ull << (width * 8 - 1);
            if (raw & sign_bit)
                raw |= ~mask;
        }
        return static_cast<int64_t>(raw);
    }

    Value convert(TypeRef dst, const Value &v, Loc loc) const {
        Value out;
        if (!dst) // void return slot
            return out;
        if (dst->kind() == TypeKind::AddressOf) {
            out.k = Value::K::Addr;
            out.a = v.k == Value::K::Addr ? v.a : static_cast<uint64_t>(as_int(v, loc));
            return out;
        }
        if (is_float_type(dst)) {
            double d = v.k == Value::K::Float ? v.f : static_cast<double>(as_int(v, loc));
            out.k = Value::K::Float;
            out.f = dst->tag() == "float" ? static_cast<double>(static_cast<float>(d)) : d;
            return out;
        }
        out.k = Value::K::Int;
        out.i = fit_int(static_cast<uint64_t>(as_int(v, loc)), dst->size(),
                        signed_fundamental(dst));
        if (dst->tag() == "bool")
            out.i = out.i != 0 ? 1 : 0;
        return out;
    }

    bool truthy(const Value &v, Loc loc) const {
        switch (v.k) {
        case Value::K::Int:
            return v.i != 0;
        case Value::K::Float:
            return v.f != 0;
        case Value::K::Addr:
            return v.a != 0;
        case Value::K::Bounds:
            break;
        }
        fault(loc, "bounds value used as a condition");
    }

    Value eval_operand(Frame &fr, const Operand &o) const {
        Value v;
        switch (o.kind) {
        case Operand::Kind::Var: {
            auto it = fr.vars.find(o.name);
            if (it == fr.vars.end())
                fault(o.loc, "'" + o.name + "' holds no value on this path");
            return it->second;
        }
        case Operand::Kind::Int:
            v.i = o.ival;
            return v;
        case Operand::Kind::Float:
            v.k = Value::K::Float;
            v.f = o.fval;
            return v;
        case Operand::Kind::Null:
            v.k = Value::K::Addr;
            return v;
        case Operand::Kind::SizeOf:
            v.i = static_cast<int64_t>(o.size_of->size());
            return v;
        }
        fault(o.loc, "bad operand");
    }

    Value load_from(uint64_t addr, TypeRef elem, Loc loc) {
        uint64_t raw = space_.mem_load(addr, static_cast<unsigned>(elem->size()));
        Value v;
        if (elem->kind() == TypeKind::AddressOf) {
            v.k = Value::K::Addr;
            v.a = raw;
        } else if (elem->tag() == "float") {
            v.k = Value::K::Float;
            v.f = std::bit_cast<float>(static_cast<uint32_t>(raw));
        } else if (elem->tag() == "double") {
            v.k = Value::K::Float;
            v.f = std::bit_cast<double>(raw);
        } else {
            v.i = fit_int(raw, elem->size(), signed_fundamental(elem));
        }
        (void)loc;
        return v;
    }

    void store_to(uint64_t addr, TypeRef elem, const Value &val, Loc loc) {
        Value v = convert(elem, val, loc);
        uint64_t raw;
        if (elem->kind() == TypeKind::AddressOf)
            raw = v.a;
        else if (elem->tag() == "float")
            raw = std::bit_cast<uint32_t>(static_cast<float>(v.f));
        else if (elem->tag() == "double")
            raw = std::bit_cast<uint64_t>(v.f);
        else
            raw = static_cast<uint64_t>(v.i);
        space_.mem_store(addr, static_cast<unsigned>(elem->size()), raw);
    }

    Value eval_bin(Frame &fr, const Expr &e) {
        Value lhs = eval_operand(fr, e.a);
        Value rhs = eval_operand(fr, e.b);
        bool fl = lhs.k == Value::K::Float || rhs.k == Value::K::Float;
        Value out;
        auto cmp = [&](auto l, auto r) -> int64_t {
            switch (e.op) {
            case BinOp::Eq: return l == r;
            case BinOp::Ne: return l != r;
            case BinOp::Lt: return l < r;
            case BinOp::Le: return l <= r;
            case BinOp::Gt: return l > r;
            case BinOp::Ge: return l >= r;
            default: return 0;
            }
        };
        bool rel = e.op == BinOp::Eq || e.op == BinOp::Ne || e.op == BinOp::Lt ||
                   e.op == BinOp::Le || e.op == BinOp::Gt || e.op == BinOp::Ge;
        if (rel) {
            if (lhs.k == Value::K::Addr || rhs.k == Value::K::Addr)
                out.i = cmp(as_addr_like(lhs, e.loc), as_addr_like(rhs, e.loc));
            else if (fl)
                out.i = cmp(to_f(lhs), to_f(rhs));
            else
                out.i = cmp(lhs.i, rhs.i);
            return out;
        }
        if (fl) {
            double l = to_f(lhs), r = to_f(rhs);
            double d = 0;
            switch (e.op) {
            case BinOp::Add: d = l + r; break;
            case BinOp::Sub: d = l - r; break;
            case BinOp::Mul: d = l * r; break;
            case BinOp::Div:
                if (r == 0)
                    fault(e.loc, "division by zero");
                d = l / r;
                break;
            default:
                fault(e.loc, "bad float operation");
            }
            out.k = Value::K::Float;
            out.f = d;
            return out;
        }
        uint64_t l = static_cast<uint64_t>(lhs.i), r = static_cast<uint64_t>(rhs.i);
        uint64_t d = 0;
        switch (e.op) {
        case BinOp::Add: d = l + r; break;
        case BinOp::Sub: d = l - r; break;
        case BinOp::Mul: d = l * r; break;
        case BinOp::Div:
            if (rhs.i == 0)
                fault(e.loc, "division by zero");
            if (lhs.i == INT64_MIN && rhs.i == -1)
                d = l;
            else
                d = static_cast<uint64_t>(lhs.i / rhs.i);
            break;
        case BinOp::Mod:
            if (rhs.i == 0)
                fault(e.loc, "division by zero");
            if (lhs.i == INT64_MIN && rhs.i == -1)
                d = 0;
            else
                d = static_cast<uint64_t>(lhs.i % rhs.i);
            break;
        default:
            break;
        }
        out.i = static_cast<int64_t>(d);
        return out;
    }

    static double to_f(const Value &v) {
        return v.k == Value::K::Float ? v.f : static_cast<double>(v.i);
    }
    uint64_t as_addr_like(const Value &v, Loc loc) const {
        if (v.k == Value::K::Addr)
            return v.a;
        return static_cast<uint64_t>(as_int(v, loc));
    }

    Value eval_expr(Frame &fr, const Expr &e) {
        switch (e.kind) {
        case Expr::Kind::Opnd:
            return eval_operand(fr, e.a);
        case Expr::Kind::Bin:
            return eval_bin(fr, e);
        case Expr::Kind::Load: {
            uint64_t addr = as_addr(eval_operand(fr, e.a), e.loc);
            return load_from(addr, e.mem_elem, e.loc);
        }
        case Expr::Kind::Field: {
            uint64_t addr = as_addr(eval_operand(fr, e.a), e.loc);
            Value v;
            v.k = Value::K::Addr;
            v.a = addr + e.field_offset;
            return v;
        }
        case Expr::Kind::Index: {
            uint64_t addr = as_addr(eval_operand(fr, e.a), e.loc);
            int64_t idx = as_int(eval_operand(fr, e.b), e.loc);
            Value v;
            v.k = Value::K::Addr;
            v.a = addr + static_cast<uint64_t>(idx) * e.index_scale;
            return v;
        }
        case Expr::Kind::Cast:
            return convert(e.rtype, eval_operand(fr, e.a), e.loc);
        case Expr::Kind::Call: {
            const Function *callee = prog_.find(e.callee);
            std::vector<Value> args;
            args.reserve(e.args.size());
            for (size_t i = 0; i < e.args.size(); ++i)
                args.push_back(
                    convert(callee->params[i].type, eval_operand(fr, e.args[i]), e.loc));
            return call_function(*callee, std::move(args), e.loc);
        }
        case Expr::Kind::Malloc: {
            int64_t size = as_int(eval_operand(fr, e.a), e.loc);
            if (size < 0)
                fault(e.loc, "negative allocation size");
            Value v;
            v.k = Value::K::Addr;
            v.a = rt_.type_malloc(static_cast<uint64_t>(size), meta_of(e.alloc_elem));
            ++allocs_;
            return v;
        }
        case Expr::Kind::New: {
            int64_t count = as_int(eval_operand(fr, e.a), e.loc);
            if (count < 0)
                fault(e.loc, "negative element count");
            uint64_t esz = e.alloc_elem->size();
            uint64_t size = static_cast<uint64_t>(count) * esz;
            if (esz != 0 && size / esz != static_cast<uint64_t>(count))
                fault(e.loc, "allocation size overflow");
            Value v;
            v.k = Value::K::Addr;
            v.a = rt_.type_malloc(size, meta_of(e.alloc_elem));
            ++allocs_;
            return v;
        }
        }
        fault(e.loc, "bad expression");
    }

    AbsBounds bounds_of(Frame &fr, const std::string &name, Loc loc) const {
        auto it = fr.vars.find(name);
        if (it == fr.vars.end() || it->second.k != Value::K::Bounds)
            fault(loc, "internal: bounds '" + name + "' undefined");
        return it->second.b;
    }

    std::optional<Value> exec_stmt(Frame &fr, const Stmt &s) {
        if (++steps_ > opts_.max_steps)
            fault(s.loc, "step limit exceeded");
        switch (s.kind) {
        case Stmt::Kind::Decl:
        case Stmt::Kind::Assign: {
            Value v = eval_expr(fr, *s.expr);
            fr.vars[s.name] = convert(s.type, v, s.loc);
            return std::nullopt;
        }
        case Stmt::Kind::Store: {
            uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
            Value val = eval_operand(fr, s.b);
            store_to(addr, s.store_elem, val, s.loc);
            return std::nullopt;
        }
        case Stmt::Kind::Free: {
            uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
            rt_.type_free(addr, site(s.loc));
            maybe_halt();
            return std::nullopt;
        }
        case Stmt::Kind::Return: {
            Value v;
            if (s.has_value)
                v = convert(fr.fn->ret, eval_operand(fr, s.a), s.loc);
            return v;
        }
        case Stmt::Kind::If: {
            bool c = truthy(eval_expr(fr, *s.cond), s.loc);
            return exec_block(fr, c ? s.then_blk : s.else_blk);
        }
        case Stmt::Kind::While: {
            while (truthy(eval_expr(fr, *s.cond), s.loc)) {
                if (++steps_ > opts_.max_steps)
                    fault(s.loc, "step limit exceeded");
                if (auto r = exec_block(fr, s.then_blk))
                    return r;
            }
            return std::nullopt;
        }
        case Stmt::Kind::CallStmt:
            eval_expr(fr, *s.expr);
            return std::nullopt;
        case Stmt::Kind::VarDecl: {
            TypeRef elem = s.type->kind() == TypeKind::Array ? s.type->elem() : s.type;
            uint64_t addr = rt_.stack_alloc(fr.id, s.type->size(), meta_of(elem));
            ++allocs_;
            Value v;
            v.k = Value::K::Addr;
            v.a = addr;
            fr.vars[s.name] = v;
            return std::nullopt;
        }
        case Stmt::Kind::CheckType: {
            uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
            AbsBounds b = rt_.type_check(addr, meta_of(s.query), site(s.loc));
            if (!s.bounds.empty()) {
                Value v;
                v.k = Value::K::Bounds;
                v.b = b;
                fr.vars[s.bounds] = v;
            }
            maybe_halt();
            return std::nullopt;
        }
        case Stmt::Kind::BoundsGetS: {
            uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
            Value v;
            v.k = Value::K::Bounds;
            v.b = rt_.bounds_get(addr);
            fr.vars[s.bounds] = v;
            return std::nullopt;
        }
        case Stmt::Kind::CheckBounds: {
            uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
            AbsBounds b = bounds_of(fr, s.bounds, s.loc);
            rt_.bounds_check(addr, s.width, b, s.access, meta_of(s.query), site(s.loc));
            maybe_halt();
            return std::nullopt;
        }
        case Stmt::Kind::BoundsAssign: {
            AbsBounds nb;
            switch (s.bsrc) {
            case BoundsSrc::Wide:
                nb = AbsBounds::wide();
                break;
            case BoundsSrc::Copy:
                nb = bounds_of(fr, s.bounds_src, s.loc);
                break;
            case BoundsSrc::Narrow: {
                AbsBounds src = bounds_of(fr, s.bounds_src, s.loc);
                uint64_t addr = as_addr(eval_operand(fr, s.a), s.loc);
                AbsBounds sub = s.narrow_lower_only ? AbsBounds{addr, UINT64_MAX}
                                                    : AbsBounds{addr, addr + s.width};
                nb = bounds_narrow(src, sub);
                break;
            }
            }
            Value v;
            v.k = Value::K::Bounds;
            v.b = nb;
            fr.vars[s.bounds] = v;
            return std::nullopt;
        }
        }
        fault(s.loc, "bad statement");
    }

    std::optional<Value> exec_block(Frame &fr, const Block &b) {
        for (const auto &sp : b.stmts)
            if (auto r = exec_stmt(fr, *sp))
                return r;
        return std::nullopt;
    }

    Value call_function(const Function &fn, std::vector<Value> args, Loc loc) {
        if (++depth_ > opts_.max_frames)
            fault(loc, "call depth exceeded");
        Frame fr;
        fr.fn = &fn;
        fr.id = ++next_frame_;
        for (size_t i = 0; i < fn.params.size(); ++i)
            fr.vars[fn.params[i].name] = args[i];
        auto r = exec_block(fr, fn.body);
        rt_.stack_release(fr.id);
        --depth_;
        if (r)
            return *r;
        return convert(fn.ret, Value{}, fn.loc);
    }

    const Program &prog_;
    const RunOptions &opts_;
    MetaRegistry metas_;
    AddressSpace space_;
    Reporter reporter_;
    TypedRuntime rt_;
    uint64_t steps_ = 0;
    uint64_t depth_ = 0;
    uint64_t next_frame_ = 0;
    uint64_t allocs_ = 0;
};

} // namespace

ExecReport interpret(const Program &prog, const RunOptions &opts) {
    Interp interp(prog, opts);
    return interp.run();
}

} // namespace etsan::ir
