#include "helpers.hpp"

#include "etsan/runtime.hpp"

#include <doctest.h>

using namespace etsan;

TEST_SUITE_BEGIN("runtime");

namespace {

struct Rig {
    std::shared_ptr<TypeUniverse> u = tst::example_universe();
    MetaRegistry metas{*u};
    AddressSpace space;
    Reporter rep;
    TypedRuntime rt{space, metas, rep};

    explicit Rig(ReportMode mode = ReportMode::LogAll, uint64_t abort_after = 1)
        : rep(mode, abort_after) {}

    const TypeMeta *meta(const char *name) {
        TypeRef t = u->find_tag(name);
        if (!t)
            t = u->fundamental(name);
        return metas.meta_of(t);
    }
};

} // namespace

TEST_CASE("allocation writes the META header ahead of the object") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));
    CHECK(p % 16 == 0);
    MetaHeader m = r.rt.read_meta(p - kMetaSize);
    CHECK(m.type_id == r.meta("T")->id);
    CHECK(m.size == 24);
    CHECK(r.space.lf_size(p) == 64); // 24 + 16 header rounds up to the 64 class
}

TEST_CASE("interior pointer resolves to narrowed sub-object bounds") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));

    AbsBounds b = r.rt.type_check(p + 12, r.meta("int"), "t:1");
    CHECK(b.lo == p + 4);
    CHECK(b.hi == p + 16);
    CHECK(r.rep.total_errors() == 0);

    AbsBounds w = r.rt.type_check(p + 12, r.meta("double"), "t:2");
    CHECK(w.is_wide());
    REQUIRE(r.rep.total_errors() == 1);
    const SanError &e = r.rep.log()[0];
    CHECK(e.kind == ErrorKind::TypeError);
    CHECK(e.static_type == "double[]");
    CHECK(e.dynamic_type == "T[]");
    CHECK(e.offset == 12);
    CHECK(e.site == "t:2");

    CHECK(r.rt.counters().type_checks == 2);
    CHECK(r.rt.counters().legacy_checks == 0);
}

TEST_CASE("sub-object bounds are clipped to the allocation") {
    Rig r;
    // Allocate 12 bytes of T: the int[3] window would extend to 16.
    uint64_t p = r.rt.type_malloc(12, r.meta("T"));
    AbsBounds b = r.rt.type_check(p + 8, r.meta("int"), "t:1");
    CHECK(b.lo == p + 4);
    CHECK(b.hi == p + 12);
}

TEST_CASE("offsets before the base are a type error, not a crash") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));
    AbsBounds w = r.rt.type_check(p - 4, r.meta("int"), "t:1");
    CHECK(w.is_wide());
    REQUIRE(r.rep.total_errors() == 1);
    CHECK(r.rep.log()[0].kind == ErrorKind::TypeError);
    CHECK(r.rep.log()[0].offset == -4);
}

TEST_CASE("legacy and null addresses pass vacuously and are counted") {
    Rig r;
    uint64_t lg = r.rt.type_malloc(2 * 1024 * 1024, r.meta("char"));
    CHECK(r.space.is_legacy(lg));
    CHECK(r.rt.type_check(lg + 100, r.meta("T"), "t:1").is_wide());
    CHECK(r.rt.type_check(0, r.meta("int"), "t:2").is_wide());
    CHECK(r.rt.bounds_get(0).is_wide());
    CHECK(r.rep.total_errors() == 0);
    CHECK(r.rt.counters().type_checks == 3);
    CHECK(r.rt.counters().legacy_checks == 3);
}

TEST_CASE("free retypes the slot FREE and later checks say use-after-free") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));
    r.rt.type_free(p, "f:1");
    CHECK(r.rep.total_errors() == 0);
    CHECK(r.rt.read_meta(p - kMetaSize).type_id == 0);
    CHECK(r.rt.read_meta(p - kMetaSize).size == 24); // size survives for diagnostics

    AbsBounds w = r.rt.type_check(p + 4, r.meta("int"), "f:2");
    CHECK(w.is_wide());
    REQUIRE(r.rep.total_errors() == 1);
    CHECK(r.rep.log()[0].kind == ErrorKind::UseAfterFree);
    CHECK(r.rep.log()[0].dynamic_type == "FREE");

    // The freed slot's object bounds collapse to zero width.
    AbsBounds z = r.rt.bounds_get(p);
    CHECK(z.lo == p);
    CHECK(z.hi == p);
}

TEST_CASE("free diagnoses double free, interior free, legacy free and ignores null") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));
    r.rt.type_free(p, "f:1");
    r.rt.type_free(p, "f:2");
    REQUIRE(r.rep.total_errors() == 1);
    CHECK(r.rep.log()[0].kind == ErrorKind::DoubleFree);
    CHECK(r.rep.log()[0].static_type == "free");
    CHECK(r.rep.log()[0].dynamic_type == "FREE");

    uint64_t q = r.rt.type_malloc(24, r.meta("T"));
    r.rt.type_free(q + 4, "f:3");
    REQUIRE(r.rep.total_errors() == 2);
    CHECK(r.rep.log()[1].kind == ErrorKind::TypeError);
    CHECK(r.rep.log()[1].static_type == "free");
    CHECK(r.rep.log()[1].dynamic_type == "T[]");
    CHECK(r.rep.log()[1].offset == 4);

    uint64_t lg = r.rt.type_malloc(2 * 1024 * 1024, r.meta("char"));
    r.rt.type_free(lg, "f:4");
    REQUIRE(r.rep.total_errors() == 3);
    CHECK(r.rep.log()[2].dynamic_type == "legacy");

    r.rt.type_free(0, "f:5");
    CHECK(r.rep.total_errors() == 3);
}

TEST_CASE("bounds_narrow intersects and collapses empty overlaps") {
    CHECK(bounds_narrow({0, 100}, {10, 20}) == AbsBounds{10, 20});
    CHECK(bounds_narrow({0, 15}, {10, 20}) == AbsBounds{10, 15});
    CHECK(bounds_narrow({10, 20}, {30, 40}) == AbsBounds{30, 30});
    CHECK(bounds_narrow(AbsBounds::wide(), {10, 20}) == AbsBounds{10, 20});
}

TEST_CASE("escape tolerates one-past-the-end, access does not") {
    AbsBounds b{100, 116};
    CHECK(bounds_contain(b, 116, 0, AccessKind::Escape));
    CHECK(bounds_contain(b, 112, 4, AccessKind::Access));
    CHECK_FALSE(bounds_contain(b, 116, 4, AccessKind::Access));
    CHECK_FALSE(bounds_contain(b, 99, 0, AccessKind::Escape));
    CHECK_FALSE(bounds_contain(b, 117, 0, AccessKind::Escape));
    CHECK_FALSE(bounds_contain(b, UINT64_MAX - 2, 8, AccessKind::Access)); // wrap
}

TEST_CASE("failed bounds checks name the allocation they landed in") {
    Rig r;
    uint64_t p = r.rt.type_malloc(24, r.meta("T"));
    AbsBounds b{p + 4, p + 16};
    r.rt.bounds_check(p + 16, 4, b, AccessKind::Access, r.meta("int"), "b:1");
    REQUIRE(r.rep.total_errors() == 1);
    const SanError &e = r.rep.log()[0];
    CHECK(e.kind == ErrorKind::BoundsError);
    CHECK(e.static_type == "int[]");
    CHECK(e.dynamic_type == "T[]");
    CHECK(e.offset == 16);
    CHECK(r.rt.counters().bounds_checks == 1);
}

TEST_CASE("stack objects are retyped FREE when the frame releases") {
    Rig r;
    uint64_t p = r.rt.stack_alloc(1, 24, r.meta("T"));
    CHECK(r.rt.type_check(p, r.meta("T"), "s:1").lo == p);
    r.rt.stack_release(1);
    (void)r.rt.type_check(p, r.meta("T"), "s:2");
    REQUIRE(r.rep.total_errors() == 1);
    CHECK(r.rep.log()[0].kind == ErrorKind::UseAfterFree);
}

TEST_CASE("reporter modes: log keeps a trail, count only buckets") {
    SanError e{ErrorKind::TypeError, "int[]", "T[]", 4, "x:1"};

    Reporter log(ReportMode::LogAll);
    log.report(e);
    log.report(e);
    CHECK(log.total_errors() == 2);
    CHECK(log.log().size() == 2);
    REQUIRE(log.buckets().size() == 1);
    CHECK(log.buckets().begin()->second == 2);
    CHECK(log.first_sites().begin()->second == "x:1");
    CHECK_FALSE(log.should_halt());

    Reporter count(ReportMode::CountOnly);
    count.report(e);
    count.report(e);
    CHECK(count.total_errors() == 2);
    CHECK(count.log().empty());
    CHECK(count.buckets() == log.buckets());
}

TEST_CASE("abort mode halts on the Nth distinct bucket") {
    SanError a{ErrorKind::TypeError, "int[]", "T[]", 4, "x:1"};
    SanError b{ErrorKind::BoundsError, "int[]", "T[]", 24, "x:2"};

    Reporter rep(ReportMode::AbortAfterN, 2);
    rep.report(a);
    CHECK_FALSE(rep.should_halt());
    rep.report(a); // same bucket, still one distinct
    CHECK_FALSE(rep.should_halt());
    rep.report(b);
    CHECK(rep.should_halt());

    Reporter one(ReportMode::AbortAfterN, 1);
    one.report(a);
    CHECK(one.should_halt());
}

TEST_SUITE_END();
