#pragma once

// A small three-address IR with structured control flow. Address-valued
// locals carry declared static pointer types; memory is reached only via
// load/store; allocation comes from new / malloc (heap) and var (stack).
// Check instructions never appear in parsed input; the instrumenter
// inserts them.

#include "etsan/layout.hpp"
#include "etsan/runtime.hpp"
#include "etsan/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace etsan::ir {

class ParseError : public Error {
  public:
    using Error::Error;
};

struct Loc {
    uint32_t line = 0;
    uint32_t col = 0;
};

enum class BinOp { Add, Sub, Mul, Div, Mod, Eq, Ne, Lt, Le, Gt, Ge };

struct Operand {
    enum class Kind { Var, Int, Float, Null, SizeOf };
    Kind kind = Kind::Int;
    std::string name;            // Var
    int64_t ival = 0;            // Int
    double fval = 0;             // Float
    TypeRef size_of = nullptr;   // SizeOf
    Loc loc;

    static Operand var(std::string n, Loc l = {}) {
        Operand o;
        o.kind = Kind::Var;
        o.name = std::move(n);
        o.loc = l;
        return o;
    }
    static Operand imm(int64_t v, Loc l = {}) {
        Operand o;
        o.kind = Kind::Int;
        o.ival = v;
        o.loc = l;
        return o;
    }
};

struct Expr {
    enum class Kind { Opnd, Bin, Load, Field, Index, Cast, Call, Malloc, New };
    Kind kind = Kind::Opnd;
    Operand a, b;               // operands (Bin: a op b; Load/Field/Index/Cast: a; Malloc: size a; New: count a)
    BinOp op = BinOp::Add;
    std::string field;          // Field
    std::string callee;         // Call
    std::vector<Operand> args;  // Call
    TypeRef alloc_elem = nullptr; // Malloc/New element type (Malloc: null until inferred)
    bool explicit_alloc_type = false; // malloc<T>
    Loc loc;

    // filled by the static checker
    TypeRef rtype = nullptr;     // result type
    TypeRef mem_elem = nullptr;  // Load: pointee
    uint64_t index_scale = 0;    // Index: sizeof(pointee)
    uint64_t field_offset = 0;   // Field
    uint64_t field_width = 0;    // Field: sizeof of the member as declared
    bool field_is_fam = false;   // Field addresses a flexible member
};

enum class BoundsSrc { Wide, Copy, Narrow };

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;

struct Block {
    std::vector<StmtPtr> stmts;
};

struct Stmt {
    enum class Kind {
        Decl,        // name: type = expr
        Assign,      // name = expr
        Store,       // store a, b
        Free,        // free a
        Return,      // return a?
        If,          // if (cond) then_blk else else_blk
        While,       // while (cond) body
        CallStmt,    // call f(args) discarding the result
        VarDecl,     // var name: object_type  (stack object; name becomes elem*)
        CheckType,   // bounds = type_check(a, query[])        [instrumentation]
        BoundsGetS,  // bounds = bounds_get(a)                 [instrumentation]
        CheckBounds, // bounds_check(a, width, bounds, kind)   [instrumentation]
        BoundsAssign // bounds = wide | copy(src) | narrow(src, a, width) [instrumentation]
    };
    Kind kind;
    Loc loc;

    std::string name;              // Decl/Assign target; VarDecl name
    TypeRef type = nullptr;        // Decl declared type; VarDecl object type
    std::optional<Expr> expr;      // Decl/Assign/CallStmt
    Operand a, b;                  // Store addr/value; Free/Return target; checks: a = address
    bool has_value = false;        // Return with operand
    std::optional<Expr> cond;      // If/While
    Block then_blk, else_blk;      // If (else possibly empty) / While body in then_blk

    // instrumentation fields
    std::string bounds;            // destination / checked bounds variable
    std::string bounds_src;        // BoundsAssign Copy/Narrow source variable
    BoundsSrc bsrc = BoundsSrc::Wide;
    TypeRef query = nullptr;       // CheckType query element; CheckBounds access element
    uint64_t width = 0;            // CheckBounds access width; BoundsAssign narrow width
    AccessKind access = AccessKind::Access;
    bool narrow_lower_only = false; // FAM member: keep the upper bound

    TypeRef store_elem = nullptr;   // Store: pointee of the address operand

    Stmt clone() const;
};

Block clone_block(const Block &b);

struct Param {
    std::string name;
    TypeRef type = nullptr;
    Loc loc;
};

struct Function {
    std::string name;
    std::vector<Param> params;
    TypeRef ret = nullptr; // null = void
    Block body;
    Loc loc;
};

struct Program {
    std::shared_ptr<TypeUniverse> universe;
    std::vector<TypeRef> decls; // record declarations in source order
    std::vector<Function> functions;
    std::string filename;
    bool instrumented = false;

    const Function *find(std::string_view name) const;
    Program clone_shell() const; // universe/decls/filename, no functions
};

// Parses, statically checks (names, arities, address typing) and runs
// allocation-type inference for untyped malloc calls.
Program parse_program(std::string_view text, std::string filename);

// Parses the type declarations of a file; function bodies are checked but
// otherwise ignored, so a full program works as a type file.
std::shared_ptr<TypeUniverse> parse_type_file(std::string_view text, std::string filename,
                                              std::vector<TypeRef> *decls = nullptr);

// First-use scan: the element type an untyped malloc result is first
// loaded/stored/field-addressed at, char if never used. Called by
// parse_program; exposed for tests.
void infer_malloc_types(Program &prog);

enum class Variant { Full, Bounds, Type };

struct InstrumentOptions {
    Variant variant = Variant::Full;
    bool opt_never_fail_casts = true;
    bool opt_subsumed_bounds = true;
    bool opt_redundant_narrow = true;

    static InstrumentOptions unoptimized(Variant v = Variant::Full) {
        return InstrumentOptions{v, false, false, false};
    }
};

// Inserts the checking schema for the chosen variant, then applies the
// enabled optimization passes.
Program instrument(const Program &prog, InstrumentOptions opts = {});

// The optimization passes alone, applied to an instrumented program:
// (1) drop never-failing casts' CheckType, (2) drop subsumed CheckBounds,
// (3) drop redundant narrowing.
Program optimize(const Program &instrumented, InstrumentOptions opts = {});

// Static audit of the guarding invariant on instrumented output: on every
// control-flow path each load/store is preceded by a wide-enough CheckBounds
// on the same address variable, and every bounds variable is defined before
// it is read. Meaningful for the variants that carry bounds (full, bounds).
bool audit_instrumentation(const Program &prog, std::string *why = nullptr);

struct InstrCounts {
    uint64_t check_type = 0;
    uint64_t bounds_get = 0;
    uint64_t check_bounds = 0;
    uint64_t narrows = 0;
};
InstrCounts count_checks(const Function &fn);

struct RunOptions {
    ReportMode mode = ReportMode::LogAll;
    uint64_t abort_after = 1;
    SpaceConfig space;
    uint64_t max_steps = 200'000'000;
    uint64_t max_frames = 1024;
};

struct ExecReport {
    Counters counters;
    std::map<BucketKey, uint64_t> buckets;
    std::map<BucketKey, std::string> first_sites;
    std::vector<SanError> log;
    int64_t return_value = 0;
    enum class Halt { Completed, Aborted, Fault };
    Halt halted_by = Halt::Completed;
    std::string fault_message;
    uint64_t memory_digest = 0;
    uint64_t allocations = 0;
};

ExecReport interpret(const Program &prog, const RunOptions &opts = {});

} // namespace etsan::ir
