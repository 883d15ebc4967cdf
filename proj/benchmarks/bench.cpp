#include "etsan/ir.hpp"

#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>
#include <string>

using namespace etsan;
using namespace etsan::ir;

namespace {

constexpr const char *kDecls = R"(
struct S { int a[3] @0; char *s @12; };
struct T @size(24) { float f @0; struct S t @4; };
)";

std::string read_corpus(const std::string &rel) {
    std::ifstream in(std::string(ETSAN_CORPUS_DIR) + "/" + rel, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void bm_build_table(benchmark::State &state) {
    auto u = parse_type_file(kDecls, "bench");
    TypeRef t = u->find_tag("T");
    for (auto _ : state)
        benchmark::DoNotOptimize(build_layout_table(*u, t));
}
BENCHMARK(bm_build_table);

void bm_table_lookup(benchmark::State &state) {
    auto u = parse_type_file(kDecls, "bench");
    TypeRef t = u->find_tag("T");
    TypeRef i = u->fundamental("int");
    LayoutTable table = build_layout_table(*u, t);
    uint64_t k = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(table_lookup(table, i, static_cast<int64_t>(k), 24));
        k = (k + 4) % 24;
    }
}
BENCHMARK(bm_table_lookup);

void bm_layout_reference(benchmark::State &state) {
    auto u = parse_type_file(kDecls, "bench");
    TypeRef t = u->find_tag("T");
    uint64_t k = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(layout(t, static_cast<int64_t>(k)));
        k = (k + 4) % 24;
    }
}
BENCHMARK(bm_layout_reference);

void bm_alloc_free(benchmark::State &state) {
    AddressSpace space;
    for (auto _ : state) {
        uint64_t p = space.lf_alloc(48);
        space.lf_free(p);
        benchmark::DoNotOptimize(p);
    }
}
BENCHMARK(bm_alloc_free);

void bm_type_check(benchmark::State &state) {
    auto u = parse_type_file(kDecls, "bench");
    MetaRegistry metas(*u);
    AddressSpace space;
    Reporter rep(ReportMode::CountOnly);
    TypedRuntime rt(space, metas, rep);
    uint64_t p = rt.type_malloc(24, metas.meta_of(u->find_tag("T")));
    const TypeMeta *q = metas.meta_of(u->fundamental("int"));
    for (auto _ : state)
        benchmark::DoNotOptimize(rt.type_check(p + 12, q, "bench:1"));
}
BENCHMARK(bm_type_check);

void bm_interpret_sum(benchmark::State &state) {
    Program prog = instrument(parse_program(read_corpus("clean/sum.etir"), "sum.etir"));
    for (auto _ : state)
        benchmark::DoNotOptimize(interpret(prog));
}
BENCHMARK(bm_interpret_sum);

void bm_instrument_quicksort(benchmark::State &state) {
    Program prog = parse_program(read_corpus("clean/quicksort.etir"), "quicksort.etir");
    for (auto _ : state)
        benchmark::DoNotOptimize(instrument(prog));
}
BENCHMARK(bm_instrument_quicksort);

} // namespace

BENCHMARK_MAIN();
