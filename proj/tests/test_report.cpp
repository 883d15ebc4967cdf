#include "helpers.hpp"

#include "etsan/report.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace etsan;
using nlohmann::ordered_json;

TEST_SUITE_BEGIN("report");

namespace {

ir::ExecReport run_corpus(const char *rel, const RunConfig &cfg) {
    ir::Program p = tst::load_corpus(rel);
    return interpret(ir::instrument(p, cfg.instrument_options()), cfg.run_options());
}

} // namespace

TEST_CASE("a rendered config parses back to itself") {
    RunConfig cfg;
    cfg.space.seed = 42;
    cfg.space.classes = {16, 32, 64};
    cfg.space.region_size = 1 << 24;
    cfg.mode = ReportMode::AbortAfterN;
    cfg.abort_after = 3;
    cfg.variant = ir::Variant::Bounds;
    cfg.opt_subsumed_bounds = false;
    cfg.max_steps = 1234;

    std::string text = cfg.render();
    RunConfig back = RunConfig::parse(text, "cfg");
    CHECK(back.render() == text);
    CHECK(back.space.seed == 42);
    CHECK(back.space.classes == std::vector<uint64_t>{16, 32, 64});
    CHECK(back.mode == ReportMode::AbortAfterN);
    CHECK(back.abort_after == 3);
    CHECK(back.variant == ir::Variant::Bounds);
    CHECK_FALSE(back.opt_subsumed_bounds);
    CHECK(back.opt_never_fail_casts);
    CHECK(back.max_steps == 1234);
}

TEST_CASE("config files take comments and blank lines; junk is refused") {
    RunConfig cfg = RunConfig::parse("# a comment\n\nseed = 9 # trailing\nmode=count\n", "cfg");
    CHECK(cfg.space.seed == 9);
    CHECK(cfg.mode == ReportMode::CountOnly);

    CHECK_THROWS_AS(RunConfig::parse("nonsense\n", "cfg"), Error);
    CHECK_THROWS_AS(RunConfig::parse("frobnicate = 1\n", "cfg"), Error);
    CHECK_THROWS_AS(RunConfig::parse("mode = sometimes\n", "cfg"), Error);
    CHECK_THROWS_AS(RunConfig::parse("abort_after = 0\n", "cfg"), Error);
    CHECK_THROWS_AS(RunConfig::parse("classes = \n", "cfg"), Error);
    CHECK_THROWS_AS(RunConfig::parse("seed = x\n", "cfg"), Error);
}

TEST_CASE("json reports are stable, ordered and round-trip byte for byte") {
    RunConfig cfg;
    ir::ExecReport rep = run_corpus("bugs/use_after_free.etir", cfg);
    std::string a = render_json("use_after_free", cfg, rep);
    std::string b = render_json("use_after_free", cfg, rep);
    CHECK(a == b);

    // Parsing and re-dumping reproduces the exact bytes.
    ordered_json j = ordered_json::parse(a);
    CHECK(j.dump(2) + "\n" == a);

    CHECK(j["schema"] == 1);
    CHECK(j["program"] == "use_after_free");
    CHECK(j["mode"] == "log");
    CHECK(j["variant"] == "full");
    CHECK(j["halted_by"] == "completed");
    CHECK(j["return_value"] == 7);
    CHECK(j["errors"]["total"] == 1);
    CHECK(j["errors"]["distinct"] == 1);
    REQUIRE(j["buckets"].size() == 1);
    CHECK(j["buckets"][0]["kind"] == "use_after_free");
    CHECK(j["buckets"][0]["static"] == "int[]");
    CHECK(j["buckets"][0]["dynamic"] == "FREE");
    CHECK(j["buckets"][0]["offset"] == 0);
    CHECK(j["buckets"][0]["count"] == 1);
    CHECK(j["buckets"][0]["site"].get<std::string>().find("use_after_free.etir") !=
          std::string::npos);
    CHECK(j["counters"]["type_checks"] == 2);
    CHECK(j["optimizations"]["never_fail_casts"] == true);
    std::string digest = j["memory_digest"].get<std::string>();
    CHECK(digest.substr(0, 2) == "0x");
    CHECK(digest.size() == 18);
    REQUIRE(j.contains("log"));
    CHECK(j["log"].size() == 1);
}

TEST_CASE("count mode omits the log array entirely") {
    RunConfig cfg;
    cfg.mode = ReportMode::CountOnly;
    ir::ExecReport rep = run_corpus("bugs/use_after_free.etir", cfg);
    ordered_json j = ordered_json::parse(render_json("p", cfg, rep));
    CHECK_FALSE(j.contains("log"));
    CHECK(j["mode"] == "count");
}

TEST_CASE("fault reports carry the fault message") {
    RunConfig cfg;
    cfg.max_steps = 10;
    ir::ExecReport rep = run_corpus("clean/sum.etir", cfg);
    REQUIRE(rep.halted_by == ir::ExecReport::Halt::Fault);
    ordered_json j = ordered_json::parse(render_json("sum", cfg, rep));
    CHECK(j["halted_by"] == "fault");
    CHECK_FALSE(j["fault"].get<std::string>().empty());
}

TEST_CASE("the text summary shows verdict, counters and buckets") {
    RunConfig cfg;
    ir::ExecReport rep = run_corpus("bugs/double_free.etir", cfg);
    std::string text = render_text("double_free", cfg, rep);
    CHECK(text.find("double_free: completed (returned 0)") != std::string::npos);
    CHECK(text.find("variant=full mode=log seed=0") != std::string::npos);
    CHECK(text.find("#type_checks=0 #bounds_checks=0 #legacy_checks=0") != std::string::npos);
    CHECK(text.find("errors: 1 total, 1 distinct") != std::string::npos);
    CHECK(text.find("double_free static=free dynamic=FREE offset=0 count=1") != std::string::npos);
}

TEST_CASE("error lines carry every bucket dimension") {
    SanError e{ErrorKind::TypeError, "double[]", "T[]", 12, "prog.etir:9"};
    CHECK(format_error_line(e) ==
          "ETSAN type_error static=double[] dynamic=T[] offset=12 site=prog.etir:9");
    e.site.clear();
    CHECK(format_error_line(e).find("site=<unknown>") != std::string::npos);
}

TEST_CASE("layout and table formatting match the worked example") {
    auto u = tst::example_universe();
    TypeRef t = u->find_tag("T");

    std::string l4 = format_layout(t, 4);
    CHECK(l4 == "(S, 0)\n(int, 0)\n(int[3], 0)\n(float, 4)\n");
    CHECK(format_layout(t, 100).empty());

    std::string table = format_table(*u, t);
    CHECK(table.find("(T, T, 0) -> -inf..inf") != std::string::npos);
    CHECK(table.find("(T, float, 0) -> 0..4") != std::string::npos);
    CHECK(table.find("(T, S, 4) -> 0..20") != std::string::npos);
    CHECK(table.find("(T, int, 4) -> 0..12") != std::string::npos);
    CHECK(table.find("(T, int, 8) -> -4..8") != std::string::npos);
    CHECK(table.find("(T, int, 12) -> -8..4") != std::string::npos);
    CHECK(table.find("(T, char*, 16) -> 0..8") != std::string::npos);
}

TEST_CASE("stats render as an aligned table") {
    std::vector<StatsRow> rows;
    StatsRow a;
    a.program = "sum.etir";
    a.counters.type_checks = 1;
    a.counters.bounds_checks = 1001;
    rows.push_back(a);
    StatsRow b;
    b.program = "x";
    b.buckets = 2;
    rows.push_back(b);

    std::string text = format_stats(rows);
    CHECK(text.find("program") == 0);
    CHECK(text.find("#type_checks") != std::string::npos);
    CHECK(text.find("#bounds_checks") != std::string::npos);
    CHECK(text.find("#legacy_checks") != std::string::npos);
    CHECK(text.find("#buckets") != std::string::npos);
    CHECK(text.find("sum.etir") != std::string::npos);
    CHECK(text.find("1001") != std::string::npos);
}

TEST_SUITE_END();
