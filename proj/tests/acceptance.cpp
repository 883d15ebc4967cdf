// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check is self-contained so a red line points straight at
// the broken area.

#include "etsan/ir.hpp"
#include "etsan/report.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace etsan;
using namespace etsan::ir;

namespace {

int failures = 0;

void verdict(int n, const char *name, bool ok, const std::string &detail = "") {
    std::printf("%s criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", n, name,
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok)
        ++failures;
}

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Program load_corpus(const std::string &rel) {
    return parse_program(read_file(std::string(ETSAN_CORPUS_DIR) + "/" + rel), rel);
}

ExecReport run_corpus(const std::string &rel, Variant variant = Variant::Full,
                      RunOptions opts = {}) {
    InstrumentOptions io;
    io.variant = variant;
    return interpret(instrument(load_corpus(rel), io), opts);
}

constexpr const char *kExampleDecls = R"(
struct S { int a[3] @0; char *s @12; };
struct T @size(24) { float f @0; struct S t @4; };
)";

const char *kCleanPrograms[] = {
    "clean/empty.etir",     "clean/sum.etir",        "clean/length.etir",
    "clean/quicksort.etir", "clean/list_stack.etir", "clean/matrix.etir",
    "clean/dot.etir",       "clean/union_rw.etir",   "clean/bytes.etir",
    "clean/tree.etir",      "clean/fam_ok.etir",     "clean/varstack.etir",
};

const char *kBugPrograms[] = {
    "bugs/account_overflow.etir", "bugs/subobject_underflow.etir",
    "bugs/one_past_end.etir",     "bugs/use_after_free.etir",
    "bugs/double_free.etir",      "bugs/reuse_after_free.etir",
    "bugs/byte_buffer_cast.etir", "bugs/bad_downcast.etir",
    "bugs/container_cast.etir",   "bugs/shared_prefix.etir",
    "bugs/legacy_deref.etir",     "bugs/fam_overflow.etir",
    "bugs/stack_return.etir",
};

// ---- 1: golden layout sets ------------------------------------------------

std::set<std::pair<std::string, int64_t>> view_set(TypeRef t, int64_t k) {
    std::set<std::pair<std::string, int64_t>> out;
    for (const SubObject &s : layout(t, k))
        out.insert({s.type->display(), s.delta});
    return out;
}

void criterion_layout_sets() {
    auto u = parse_type_file(kExampleDecls, "example");
    TypeRef t = u->find_tag("T");
    TypeRef i = u->fundamental("int");

    bool ok = t && t->size() == 24;
    ok = ok && view_set(t, 4) == std::set<std::pair<std::string, int64_t>>{
                                     {"S", 0}, {"int", 0}, {"int[3]", 0}, {"float", 4}};
    ok = ok && view_set(t, 12) == std::set<std::pair<std::string, int64_t>>{
                                      {"int", 0}, {"int", 4}, {"int[3]", 8}};
    ok = ok && view_set(i, 0) == std::set<std::pair<std::string, int64_t>>{{"int", 0}};
    ok = ok && layout(i, 2).empty();
    ok = ok && view_set(i, 4) == std::set<std::pair<std::string, int64_t>>{{"int", 4}};
    ok = ok && layout(t, 100).empty();
    verdict(1, "golden layout sets", ok);
}

// ---- 2: golden hash table -------------------------------------------------

void criterion_layout_table() {
    auto u = parse_type_file(kExampleDecls, "example");
    TypeRef t = u->find_tag("T");
    TypeRef s = u->find_tag("S");
    TypeRef i = u->fundamental("int");
    TypeRef f = u->fundamental("float");
    TypeRef cp = u->address_of(u->fundamental("char"));
    LayoutTable table = build_layout_table(*u, t);

    auto expect = [&](TypeRef sub, uint64_t k, RelBounds want) {
        auto got = table.find(sub, k);
        return got.has_value() && *got == want;
    };
    bool ok = expect(t, 0, RelBounds{0, 0, true});
    ok = ok && expect(f, 0, RelBounds{0, 4, false});
    ok = ok && expect(s, 4, RelBounds{0, 20, false});
    ok = ok && expect(i, 4, RelBounds{0, 12, false});
    ok = ok && expect(i, 8, RelBounds{-4, 8, false});
    ok = ok && expect(i, 12, RelBounds{-8, 4, false});
    ok = ok && expect(cp, 16, RelBounds{0, 8, false});
    ok = ok && table.size() >= 7; // rule-(b)/interior entries on top
    verdict(2, "golden layout hash table", ok);
}

// ---- 3: golden type_check -------------------------------------------------

void criterion_type_check() {
    auto u = parse_type_file(kExampleDecls, "example");
    MetaRegistry metas(*u);
    AddressSpace space;
    Reporter rep;
    TypedRuntime rt(space, metas, rep);

    bool ok = kMetaSize == 16;
    uint64_t p = rt.type_malloc(24, metas.meta_of(u->find_tag("T")));
    AbsBounds b = rt.type_check(p + 12, metas.meta_of(u->fundamental("int")), "acc:1");
    ok = ok && b.lo == p + 4 && b.hi == p + 16 && rep.total_errors() == 0;

    AbsBounds w = rt.type_check(p + 12, metas.meta_of(u->fundamental("double")), "acc:2");
    ok = ok && w.is_wide() && rep.total_errors() == 1;
    if (ok) {
        const BucketKey &key = rep.buckets().begin()->first;
        ok = key.kind == ErrorKind::TypeError && key.static_type == "double[]" &&
             key.dynamic_type == "T[]" && key.offset == 12;
    }
    verdict(3, "golden type_check bounds and miss", ok);
}

// ---- 4: oracle equivalence ------------------------------------------------

TypeRef key_of(TypeRef s) { return s->kind() == TypeKind::Array ? s->elem() : s; }

bool better_view(const SubObject &a, bool aw, const SubObject &b, bool bw) {
    if (a.is_end() != b.is_end())
        return !a.is_end();
    uint64_t wa = aw ? UINT64_MAX : a.type->size();
    uint64_t wb = bw ? UINT64_MAX : b.type->size();
    if (wa != wb)
        return wa > wb;
    if (a.depth != b.depth)
        return a.depth < b.depth;
    return a.order < b.order;
}

struct Oracle {
    TypeRef t;
    TypeRef char_t;
    TypeRef void_ptr;

    std::optional<RelBounds> best_for(TypeRef key, uint64_t k, bool any_pointer = false) const {
        std::optional<SubObject> best;
        bool best_wide = false;
        for (const SubObject &s : layout(t, static_cast<int64_t>(k))) {
            TypeRef sk = key_of(s.type);
            if (any_pointer ? sk->kind() != TypeKind::AddressOf : sk != key)
                continue;
            bool wide = s.fam_view || (s.type == t && s.delta == 0);
            if (!best || better_view(s, wide, *best, best_wide)) {
                best = s;
                best_wide = wide;
            }
        }
        if (!best)
            return std::nullopt;
        return best_wide ? RelBounds{0, 0, true} : rel_bounds(*best);
    }

    std::optional<RelBounds> lookup(TypeRef sub, int64_t k_raw) const {
        if (k_raw < 0)
            return std::nullopt;
        uint64_t k = static_cast<uint64_t>(k_raw);
        const Field *fam = t->is_record() ? t->fam() : nullptr;
        if (fam) {
            if (k > fam->offset)
                k = (k - fam->offset) % fam->type->elem()->size() + fam->offset;
        } else if (k > t->size()) {
            k %= t->size();
        }
        TypeRef key = key_of(sub);
        if (auto hit = best_for(key, k))
            return hit;
        if (key->kind() == TypeKind::AddressOf) {
            if (key == void_ptr) {
                if (auto hit = best_for(nullptr, k, true))
                    return hit;
            } else if (auto hit = best_for(void_ptr, k)) {
                return hit;
            }
        }
        if (key != char_t) {
            if (auto hit = best_for(char_t, k))
                return hit;
            return std::nullopt;
        }
        return RelBounds{0, 0, true};
    }
};

TypeRef gen_type(TypeUniverse &u, std::mt19937_64 &rng, int depth, int &tags) {
    using MD = TypeUniverse::MemberDecl;
    auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<uint64_t>(n)); };
    static const char *kFunds[] = {"bool", "char", "short", "int", "uint", "long", "float", "double"};
    if (depth <= 0)
        return u.fundamental(kFunds[pick(8)]);
    auto embeddable = [&](TypeRef e, const char *fallback) {
        return e->is_record() && e->fam() ? u.fundamental(fallback) : e;
    };
    switch (pick(8)) {
    case 0:
    case 1:
        return u.fundamental(kFunds[pick(8)]);
    case 2:
        return u.address_of(pick(4) == 0 ? u.fundamental("void")
                                         : gen_type(u, rng, depth - 1, tags));
    case 3:
        return u.array_of(embeddable(gen_type(u, rng, depth - 1, tags), "int"), 1 + pick(4));
    case 4: {
        std::vector<MD> ms;
        int n = 1 + pick(2);
        for (int i = 0; i < n; ++i)
            ms.push_back(MD{"m" + std::to_string(i),
                            embeddable(gen_type(u, rng, depth - 1, tags), "long")});
        return u.record(TypeKind::Union, "U" + std::to_string(tags++), ms);
    }
    case 5: {
        std::vector<MD> ms;
        ms.push_back(MD{"n", u.fundamental(kFunds[pick(8)])});
        MD fam{"tail", u.fundamental(kFunds[pick(8)])};
        fam.is_fam = true;
        ms.push_back(fam);
        return u.record(TypeKind::Struct, "F" + std::to_string(tags++), ms);
    }
    default: {
        std::vector<MD> ms;
        int n = 1 + pick(3);
        for (int i = 0; i < n; ++i)
            ms.push_back(MD{"m" + std::to_string(i),
                            embeddable(gen_type(u, rng, depth - 1, tags), "int")});
        return u.record(TypeKind::Struct, "R" + std::to_string(tags++), ms);
    }
    }
}

void collect_keys(TypeRef t, std::set<TypeRef> &out) {
    if (!out.insert(key_of(t)).second)
        return;
    if (t->kind() == TypeKind::Array)
        collect_keys(t->elem(), out);
    if (t->is_record())
        for (const Field &f : t->fields())
            collect_keys(f.type, out);
}

void criterion_oracle() {
    TypeUniverse u;
    std::mt19937_64 rng(424242);
    int tags = 0;
    uint64_t cases = 0, agreed = 0, types = 0;

    for (int iter = 0; iter < 520; ++iter) {
        TypeRef t = gen_type(u, rng, 1 + static_cast<int>(rng() % 4), tags);
        if (t->size() == 0)
            continue;
        ++types;
        LayoutTable table = build_layout_table(u, t);
        Oracle oracle{t, u.fundamental("char"), u.address_of(u.fundamental("void"))};

        std::set<TypeRef> keys;
        collect_keys(t, keys);
        keys.insert(u.fundamental("char"));
        keys.insert(u.fundamental("double"));
        keys.insert(u.address_of(u.fundamental("void")));
        keys.insert(u.address_of(u.fundamental("int")));

        for (uint64_t k = 0; k <= t->size(); ++k)
            for (TypeRef s : keys) {
                ++cases;
                if (table_lookup(table, s, static_cast<int64_t>(k), t->size() * 2) ==
                    oracle.lookup(s, static_cast<int64_t>(k)))
                    ++agreed;
            }
    }
    std::ostringstream ss;
    ss << types << " types, " << agreed << "/" << cases << " lookups agree";
    verdict(4, "table_lookup equals the brute-force oracle", types >= 500 && agreed == cases,
            ss.str());
}

// ---- 5: low-fat invariants ------------------------------------------------

void criterion_lowfat() {
    AddressSpace space;
    std::mt19937_64 rng(99);
    uint64_t checked = 0, correct = 0;

    std::vector<std::pair<uint64_t, uint64_t>> live;
    for (int i = 0; i < 10000; ++i) {
        uint64_t size = 1 + rng() % 4096;
        uint64_t base = space.lf_alloc(size);
        uint64_t cls = space.lf_size(base);
        live.push_back({base, cls});
    }
    for (const auto &[base, cls] : live) {
        uint64_t addr = base + rng() % cls;
        ++checked;
        if (space.lf_base(addr) == std::optional<uint64_t>{base} && space.lf_size(addr) == cls &&
            cls >= 16 && (cls & (cls - 1)) == 0 && base % cls == 0)
            ++correct;
    }
    for (int i = 0; i < 200; ++i) {
        uint64_t base = space.lf_alloc((1 << 20) + 1 + rng() % 4096); // oversize: legacy
        uint64_t addr = base + rng() % (1 << 20);
        ++checked;
        if (space.lf_base(addr) == std::nullopt && space.lf_size(addr) == UINT64_MAX &&
            space.is_legacy(addr))
            ++correct;
    }
    std::ostringstream ss;
    ss << correct << "/" << checked << " addresses resolved";
    verdict(5, "low-fat base/size invariants", checked == correct && checked >= 10200, ss.str());
}

// ---- 6: seeded-bug corpus -------------------------------------------------

struct WantBucket {
    const char *rel;
    ErrorKind kind;
    const char *static_type;
    const char *dynamic_type;
    int64_t offset;
};

void criterion_bug_corpus() {
    const WantBucket wants[] = {
        {"bugs/account_overflow.etir", ErrorKind::BoundsError, "int[]", "account[]", 32},
        {"bugs/subobject_underflow.etir", ErrorKind::BoundsError, "int[]", "pair[]", 0},
        {"bugs/one_past_end.etir", ErrorKind::BoundsError, "int[]", "int[]", 24},
        {"bugs/use_after_free.etir", ErrorKind::UseAfterFree, "int[]", "FREE", 0},
        {"bugs/double_free.etir", ErrorKind::DoubleFree, "free", "FREE", 0},
        {"bugs/reuse_after_free.etir", ErrorKind::TypeError, "int[]", "float[]", 0},
        {"bugs/byte_buffer_cast.etir", ErrorKind::TypeError, "float[]", "widget[]", 0},
        {"bugs/bad_downcast.etir", ErrorKind::TypeError, "D2[]", "D1[]", 0},
        {"bugs/shared_prefix.etir", ErrorKind::TypeError, "Derived[]", "Base[]", 0},
        {"bugs/fam_overflow.etir", ErrorKind::BoundsError, "char[]", "msg[]", 11},
        {"bugs/stack_return.etir", ErrorKind::UseAfterFree, "int[]", "FREE", 0},
    };
    bool ok = true;
    std::string detail;
    for (const WantBucket &w : wants) {
        ExecReport rep = run_corpus(w.rel);
        BucketKey want{w.kind, w.static_type, w.dynamic_type, w.offset};
        bool hit = rep.halted_by == ExecReport::Halt::Completed && rep.buckets.size() == 1 &&
                   rep.buckets.begin()->first == want;
        if (!hit) {
            ok = false;
            detail += std::string(w.rel) + " ";
        }
    }
    // Pass-by-design rows: a container-type cast and a legacy dereference.
    ExecReport container = run_corpus("bugs/container_cast.etir");
    if (!container.buckets.empty() || container.return_value != 9) {
        ok = false;
        detail += "container_cast ";
    }
    ExecReport legacy = run_corpus("bugs/legacy_deref.etir");
    if (!legacy.buckets.empty() || legacy.counters.legacy_checks == 0) {
        ok = false;
        detail += "legacy_deref ";
    }
    verdict(6, "seeded bugs flag exactly their bucket (13 programs)", ok, detail);
}

// ---- 7: clean corpus ------------------------------------------------------

void criterion_clean_corpus() {
    bool ok = true;
    std::string detail;
    for (const char *rel : kCleanPrograms) {
        Program plain = load_corpus(rel);
        ExecReport raw = interpret(plain);
        ExecReport ins = interpret(instrument(plain));
        bool good = ins.halted_by == ExecReport::Halt::Completed && ins.buckets.empty() &&
                    raw.return_value == ins.return_value &&
                    raw.memory_digest == ins.memory_digest && raw.allocations == ins.allocations;
        if (!good) {
            ok = false;
            detail += std::string(rel) + " ";
        }
    }
    verdict(7, "clean corpus: zero buckets, identical results (12 programs)", ok, detail);
}

// ---- 8: structural check counts -------------------------------------------

std::string length_src(int n, bool with_call) {
    std::ostringstream out;
    out << R"(
struct node { int val; struct node *next; };

fn length(l: *struct node) -> int {
    n: int = 0;
    c: *struct node = l;
    while (c != null) {
        nx: **struct node = field c, next;
        c = load nx;
        n = n + 1;
    }
    return n;
}

fn push(h: *struct node, v: int) -> *struct node {
    m: *struct node = malloc<struct node>(16);
    vp: *int = field m, val;
    store vp, v;
    np: **struct node = field m, next;
    store np, h;
    return m;
}

fn main() -> int {
    h: *struct node = null;
    i: int = 0;
    while (i < )"
        << n << R"() {
        h = call push(h, i);
        i = i + 1;
    }
)";
    if (with_call)
        out << "    r: int = call length(h);\n    return r;\n}\n";
    else
        out << "    return 0;\n}\n";
    return out.str();
}

void criterion_check_counts() {
    ExecReport sum = run_corpus("clean/sum.etir");
    bool ok = sum.counters.type_checks == 1;
    std::string detail = "sum=" + std::to_string(sum.counters.type_checks);

    for (int n : {0, 3, 100}) {
        auto count = [&](bool with_call) {
            Program p = parse_program(length_src(n, with_call), "length_gen.etir");
            return interpret(instrument(p)).counters.type_checks;
        };
        uint64_t with = count(true), without = count(false);
        uint64_t walk = with - without;
        detail += " length(" + std::to_string(n) + ")=" + std::to_string(walk);
        if (walk != static_cast<uint64_t>(n) + 1)
            ok = false;
    }
    verdict(8, "sum costs 1 type check, length over n nodes costs n+1", ok, detail);
}

// ---- 9: variant semantics -------------------------------------------------

bool detects(const char *rel, Variant v) { return !run_corpus(rel, v).buckets.empty(); }

void criterion_variants() {
    bool ok = true;
    std::string detail;
    auto expect = [&](const char *rel, Variant v, bool want, const char *label) {
        if (detects(rel, v) != want) {
            ok = false;
            detail += std::string(label) + ":" + rel + " ";
        }
    };

    // Bounds-only: object-level bounds bugs yes, sub-object and type bugs no.
    expect("bugs/one_past_end.etir", Variant::Bounds, true, "b");
    expect("bugs/fam_overflow.etir", Variant::Bounds, true, "b");
    expect("bugs/account_overflow.etir", Variant::Bounds, false, "b");
    expect("bugs/subobject_underflow.etir", Variant::Bounds, false, "b");
    expect("bugs/bad_downcast.etir", Variant::Bounds, false, "b");
    expect("bugs/shared_prefix.etir", Variant::Bounds, false, "b");
    expect("bugs/byte_buffer_cast.etir", Variant::Bounds, false, "b");
    expect("bugs/reuse_after_free.etir", Variant::Bounds, false, "b");

    // Type-only: explicit cast confusion yes, bounds and implicit casts no.
    expect("bugs/bad_downcast.etir", Variant::Type, true, "t");
    expect("bugs/shared_prefix.etir", Variant::Type, true, "t");
    expect("bugs/one_past_end.etir", Variant::Type, false, "t");
    expect("bugs/fam_overflow.etir", Variant::Type, false, "t");
    expect("bugs/account_overflow.etir", Variant::Type, false, "t");
    expect("bugs/subobject_underflow.etir", Variant::Type, false, "t");
    expect("bugs/byte_buffer_cast.etir", Variant::Type, false, "t");
    expect("bugs/use_after_free.etir", Variant::Type, false, "t");

    // Full detects all of the above.
    for (const char *rel :
         {"bugs/one_past_end.etir", "bugs/fam_overflow.etir", "bugs/account_overflow.etir",
          "bugs/subobject_underflow.etir", "bugs/bad_downcast.etir", "bugs/shared_prefix.etir",
          "bugs/byte_buffer_cast.etir", "bugs/reuse_after_free.etir", "bugs/use_after_free.etir",
          "bugs/double_free.etir"})
        expect(rel, Variant::Full, true, "f");

    // Frees are runtime events: every variant sees a double free.
    expect("bugs/double_free.etir", Variant::Bounds, true, "b");
    expect("bugs/double_free.etir", Variant::Type, true, "t");

    verdict(9, "variant detection matrix", ok, detail);
}

// ---- 10: optimization soundness --------------------------------------------

void criterion_optimizations() {
    bool ok = true;
    std::string detail;
    std::vector<std::string> all;
    for (const char *rel : kBugPrograms)
        all.push_back(rel);
    for (const char *rel : kCleanPrograms)
        all.push_back(rel);

    for (const std::string &rel : all) {
        Program plain = load_corpus(rel);
        ExecReport opt = interpret(instrument(plain, InstrumentOptions{}));
        ExecReport unopt = interpret(instrument(plain, InstrumentOptions::unoptimized()));
        if (opt.buckets != unopt.buckets || opt.return_value != unopt.return_value) {
            ok = false;
            detail += rel + " ";
        }
    }

    // And the passes actually remove work on a crafted program.
    const char *src = R"(
fn main() -> int {
    p: *int = malloc<int>(8);
    q: *int = cast p;
    store q, 3;
    v: int = load q;
    free p;
    return v;
}
)";
    Program unopt = instrument(parse_program(src, "t.etir"), InstrumentOptions::unoptimized());
    Program opt = instrument(parse_program(src, "t.etir"), InstrumentOptions{});
    InstrCounts cu = count_checks(*unopt.find("main"));
    InstrCounts co = count_checks(*opt.find("main"));
    uint64_t before = cu.check_type + cu.check_bounds;
    uint64_t after = co.check_type + co.check_bounds;
    if (after >= before)
        ok = false;
    detail += "crafted " + std::to_string(before) + "->" + std::to_string(after) + " checks";
    verdict(10, "optimizations keep buckets and remove checks", ok, detail);
}

// ---- 11: mode and determinism ----------------------------------------------

void criterion_modes() {
    RunOptions log_opts, count_opts;
    count_opts.mode = ReportMode::CountOnly;

    bool ok = true;
    for (const char *rel : {"bugs/account_overflow.etir", "clean/tree.etir"}) {
        ExecReport a = run_corpus(rel, Variant::Full, log_opts);
        ExecReport b = run_corpus(rel, Variant::Full, count_opts);
        ok = ok && a.counters.type_checks == b.counters.type_checks &&
             a.counters.bounds_checks == b.counters.bounds_checks &&
             a.counters.legacy_checks == b.counters.legacy_checks && a.buckets == b.buckets;
    }

    RunConfig cfg;
    cfg.space.seed = 7;
    auto render = [&] {
        Program p = load_corpus("clean/list_stack.etir");
        ExecReport rep =
            interpret(instrument(p, cfg.instrument_options()), cfg.run_options());
        return render_json("list_stack", cfg, rep);
    };
    std::string first = render(), second = render();
    ok = ok && first == second && !first.empty();
    verdict(11, "modes agree on counters; same-seed reports are byte-identical", ok);
}

} // namespace

int main() {
    try {
        criterion_layout_sets();
        criterion_layout_table();
        criterion_type_check();
        criterion_oracle();
        criterion_lowfat();
        criterion_bug_corpus();
        criterion_clean_corpus();
        criterion_check_counts();
        criterion_variants();
        criterion_optimizations();
        criterion_modes();
    } catch (const std::exception &e) {
        std::printf("FAIL unexpected exception: %s\n", e.what());
        return 1;
    }
    if (failures == 0) {
        std::printf("all 11 acceptance criteria hold\n");
        return 0;
    }
    std::printf("%d criteria failing\n", failures);
    return 1;
}
