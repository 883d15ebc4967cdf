#pragma once

// Run configuration (config files and CLI flags share the same keys) and
// report rendering: a stable JSON document, a human summary, and the
// layout/table/stats text formats.

#include "etsan/ir.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace etsan {

struct RunConfig {
    SpaceConfig space;
    ReportMode mode = ReportMode::LogAll;
    uint64_t abort_after = 1;
    ir::Variant variant = ir::Variant::Full;
    bool opt_never_fail_casts = true;
    bool opt_subsumed_bounds = true;
    bool opt_redundant_narrow = true;
    uint64_t max_steps = 200'000'000;

    ir::InstrumentOptions instrument_options() const;
    ir::RunOptions run_options() const;

    // Recognised keys: seed, region_size, legacy_base, classes (comma
    // separated), mode (log|count|abort), abort_after, variant
    // (full|bounds|type), max_steps, opt_never_fail_casts,
    // opt_subsumed_bounds, opt_redundant_narrow (booleans).
    void set(std::string_view key, std::string_view value);

    // "key = value" lines; '#' starts a comment.
    static RunConfig parse(std::string_view text, const std::string &filename);

    // All keys in parseable form; parse(render()) reproduces the config.
    std::string render() const;
};

std::string_view mode_name(ReportMode m);
std::string_view variant_name(ir::Variant v);
std::string_view halt_name(ir::ExecReport::Halt h);

// Machine-readable run report; stable field order, newline terminated.
std::string render_json(const std::string &program, const RunConfig &cfg,
                        const ir::ExecReport &rep);

// Console summary of the same run.
std::string render_text(const std::string &program, const RunConfig &cfg,
                        const ir::ExecReport &rep);

// One "(U, delta)" view per line for layout(t, k).
std::string format_layout(TypeRef t, int64_t k);

// One "(T, S, k) -> lo..hi" row per table entry; wide rows as -inf..inf.
std::string format_table(TypeUniverse &u, TypeRef t);

struct StatsRow {
    std::string program;
    Counters counters; // executed checks
    uint64_t buckets = 0;
};
std::string format_stats(const std::vector<StatsRow> &rows);

} // namespace etsan
