#include "etsan/heap.hpp"

#include <doctest.h>

#include <random>
#include <vector>

using namespace etsan;

TEST_SUITE_BEGIN("heap");

TEST_CASE("default size classes are the powers of two from 16 B to 1 MiB") {
    auto classes = SpaceConfig::default_classes();
    REQUIRE(classes.size() == 17);
    CHECK(classes.front() == 16);
    CHECK(classes.back() == 1 << 20);
    for (size_t i = 1; i < classes.size(); ++i)
        CHECK(classes[i] == classes[i - 1] * 2);
}

TEST_CASE("base and size of a managed address are recovered from the address alone") {
    AddressSpace space;
    std::mt19937_64 rng(7);
    std::vector<std::pair<uint64_t, uint64_t>> live; // base, class size

    for (int i = 0; i < 10000; ++i) {
        uint64_t size = 1 + rng() % 2048;
        uint64_t base = space.lf_alloc(size);
        uint64_t cls = space.lf_size(base);
        CHECK(cls >= size);
        CHECK((cls & (cls - 1)) == 0);
        CHECK(base % cls == 0);
        live.push_back({base, cls});
    }
    for (const auto &[base, cls] : live) {
        for (int probe = 0; probe < 4; ++probe) {
            uint64_t addr = base + rng() % cls;
            REQUIRE(space.lf_base(addr) == std::optional<uint64_t>{base});
            REQUIRE(space.lf_size(addr) == cls);
        }
    }

    // Drop every other allocation; arithmetic still answers for the rest.
    for (size_t i = 0; i < live.size(); i += 2)
        space.lf_free(live[i].first);
    for (size_t i = 1; i < live.size(); i += 2) {
        CHECK(space.lf_base(live[i].first + 3) == std::optional<uint64_t>{live[i].first});
        CHECK(space.slot_live(live[i].first));
    }
    CHECK_FALSE(space.slot_live(live[0].first));
}

TEST_CASE("legacy addresses answer none and SIZE_MAX") {
    SpaceConfig cfg;
    cfg.classes = {16, 32};
    cfg.region_size = 1 << 20;
    AddressSpace space(cfg);
    std::mt19937_64 rng(11);

    std::vector<uint64_t> legacy;
    for (int i = 0; i < 32; ++i)
        legacy.push_back(space.lf_alloc(33 + rng() % 512)); // beyond the largest class

    for (uint64_t base : legacy) {
        for (int probe = 0; probe < 8; ++probe) {
            uint64_t addr = base + rng() % 64;
            CHECK(space.is_legacy(addr));
            CHECK(space.lf_base(addr) == std::nullopt);
            CHECK(space.lf_size(addr) == UINT64_MAX);
        }
    }

    // Addresses below the first class region are legacy too.
    CHECK(space.lf_base(8) == std::nullopt);
    CHECK(space.lf_size(8) == UINT64_MAX);
}

TEST_CASE("slots are reused LIFO within a class") {
    AddressSpace space;
    uint64_t a = space.lf_alloc(40);
    uint64_t b = space.lf_alloc(40);
    CHECK(a != b);
    space.lf_free(a);
    space.lf_free(b);
    CHECK(space.lf_alloc(40) == b);
    CHECK(space.lf_alloc(40) == a);
}

TEST_CASE("freeing rejects legacy, interior and dead addresses") {
    SpaceConfig cfg;
    cfg.classes = {16, 32};
    cfg.region_size = 1 << 20;
    AddressSpace space(cfg);
    uint64_t base = space.lf_alloc(24);
    CHECK_THROWS_AS(space.lf_free(base + 4), Error);
    space.lf_free(base);
    CHECK_THROWS_AS(space.lf_free(base), Error);
    uint64_t lg = space.lf_alloc(4096);
    CHECK_THROWS_AS(space.lf_free(lg), Error);
}

TEST_CASE("a class region eventually exhausts") {
    SpaceConfig cfg;
    cfg.classes = {65536};
    cfg.region_size = 1 << 20;
    AddressSpace space(cfg);
    for (int i = 0; i < 16; ++i)
        (void)space.lf_alloc(100);
    CHECK_THROWS_AS(space.lf_alloc(100), MemFault);
}

TEST_CASE("memory is little-endian, lazily zeroed, and faults when unmapped") {
    AddressSpace space;
    uint64_t base = space.lf_alloc(64);
    CHECK(space.mem_load(base, 8) == 0); // fresh slot reads zero
    space.mem_store(base, 8, 0x1122334455667788ull);
    CHECK(space.mem_load(base, 1) == 0x88);
    CHECK(space.mem_load(base + 7, 1) == 0x11);
    CHECK(space.mem_load(base + 2, 4) == 0x33445566);
    CHECK(space.is_mapped(base, 8));

    // A store spanning a page boundary round-trips.
    uint64_t edge = base + 4096 - (base % 4096) - 4;
    if (space.lf_base(edge) != std::optional<uint64_t>{base}) {
        uint64_t big = space.lf_alloc(8192 - 16);
        edge = big + 4096 - (big % 4096) - 4;
    }
    space.mem_store(edge, 8, 0xcafebabe12345678ull);
    CHECK(space.mem_load(edge, 8) == 0xcafebabe12345678ull);

    CHECK_FALSE(space.is_mapped(8, 1));
    CHECK_THROWS_AS(space.mem_load(8, 1), MemFault);

    // Legacy region: mapped (and zero) up to the bump cursor only.
    uint64_t lg = space.lf_alloc((1 << 20) + 1);
    CHECK(space.mem_load(lg + 12345, 1) == 0);
    CHECK_FALSE(space.is_mapped(space.legacy_cursor() + (1 << 20), 1));
}

TEST_CASE("stack frames release their objects newest first") {
    AddressSpace space;
    uint64_t f1 = 1, f2 = 2;
    uint64_t a = space.stack_alloc(f1, 32);
    uint64_t b = space.stack_alloc(f1, 32);
    uint64_t c = space.stack_alloc(f2, 32);
    const auto *objs = space.frame_objects(f1);
    REQUIRE(objs != nullptr);
    REQUIRE(objs->size() == 2);
    CHECK((*objs)[0] == a);
    CHECK((*objs)[1] == b);
    space.stack_release(f1);
    CHECK(space.frame_objects(f1) == nullptr);
    CHECK_FALSE(space.slot_live(a));
    CHECK(space.slot_live(c));
    // LIFO release order means b's slot comes back before a's.
    CHECK(space.lf_alloc(32 - 1) == a);
    space.stack_release(f2);
}

TEST_CASE("digest covers content deterministically") {
    auto run = [] {
        AddressSpace space;
        uint64_t p = space.lf_alloc(48);
        space.mem_store(p, 8, 0xdeadbeef);
        space.mem_store(p + 40, 4, 7);
        return space.memory_digest();
    };
    CHECK(run() == run());

    AddressSpace space;
    uint64_t p = space.lf_alloc(48);
    uint64_t d0 = space.memory_digest();
    space.mem_store(p, 4, 1);
    CHECK(space.memory_digest() != d0);
}

TEST_SUITE_END();
