#include "etsan/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iomanip>
#include <sstream>

namespace etsan {

using nlohmann::ordered_json;

ir::InstrumentOptions RunConfig::instrument_options() const {
    ir::InstrumentOptions o;
    o.variant = variant;
    o.opt_never_fail_casts = opt_never_fail_casts;
    o.opt_subsumed_bounds = opt_subsumed_bounds;
    o.opt_redundant_narrow = opt_redundant_narrow;
    return o;
}

ir::RunOptions RunConfig::run_options() const {
    ir::RunOptions o;
    o.mode = mode;
    o.abort_after = abort_after;
    o.space = space;
    o.max_steps = max_steps;
    return o;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

uint64_t parse_u64(std::string_view v, std::string_view key) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw Error("bad value for '" + std::string(key) + "': " + std::string(v));
    return out;
}

bool parse_bool(std::string_view v, std::string_view key) {
    if (v == "1" || v == "true" || v == "on" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "off" || v == "no")
        return false;
    throw Error("bad value for '" + std::string(key) + "': " + std::string(v));
}

} // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    if (key == "seed") {
        space.seed = parse_u64(value, key);
    } else if (key == "region_size") {
        space.region_size = parse_u64(value, key);
    } else if (key == "legacy_base") {
        space.legacy_base = parse_u64(value, key);
    } else if (key == "classes") {
        std::vector<uint64_t> cs;
        size_t start = 0;
        std::string v(value);
        while (start <= v.size()) {
            size_t comma = v.find(',', start);
            std::string_view item =
                trim(std::string_view(v).substr(start, comma == std::string::npos
                                                           ? std::string::npos
                                                           : comma - start));
            if (!item.empty())
                cs.push_back(parse_u64(item, key));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (cs.empty())
            throw Error("'classes' needs at least one size");
        space.classes = std::move(cs);
    } else if (key == "mode") {
        if (value == "log")
            mode = ReportMode::LogAll;
        else if (value == "count")
            mode = ReportMode::CountOnly;
        else if (value == "abort")
            mode = ReportMode::AbortAfterN;
        else
            throw Error("bad value for 'mode': " + std::string(value));
    } else if (key == "abort_after") {
        abort_after = parse_u64(value, key);
        if (abort_after == 0)
            throw Error("'abort_after' must be positive");
    } else if (key == "variant") {
        if (value == "full")
            variant = ir::Variant::Full;
        else if (value == "bounds")
            variant = ir::Variant::Bounds;
        else if (value == "type")
            variant = ir::Variant::Type;
        else
            throw Error("bad value for 'variant': " + std::string(value));
    } else if (key == "max_steps") {
        max_steps = parse_u64(value, key);
    } else if (key == "opt_never_fail_casts") {
        opt_never_fail_casts = parse_bool(value, key);
    } else if (key == "opt_subsumed_bounds") {
        opt_subsumed_bounds = parse_bool(value, key);
    } else if (key == "opt_redundant_narrow") {
        opt_redundant_narrow = parse_bool(value, key);
    } else {
        throw Error("unknown configuration key '" + std::string(key) + "'");
    }
}

RunConfig RunConfig::parse(std::string_view text, const std::string &filename) {
    RunConfig cfg;
    size_t lineno = 0;
    size_t start = 0;
    while (start <= text.size()) {
        size_t nl = text.find('\n', start);
        std::string_view line = text.substr(
            start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        ++lineno;
        if (nl == std::string_view::npos)
            start = text.size() + 1;
        else
            start = nl + 1;

        if (size_t hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw Error(filename + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            cfg.set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const Error &e) {
            throw Error(filename + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.space.validate();
    return cfg;
}

std::string RunConfig::render() const {
    std::ostringstream out;
    out << "seed = " << space.seed << "\n";
    out << "region_size = " << space.region_size << "\n";
    out << "legacy_base = " << space.legacy_base << "\n";
    out << "classes = ";
    for (size_t i = 0; i < space.classes.size(); ++i)
        out << (i ? ", " : "") << space.classes[i];
    out << "\n";
    out << "mode = " << mode_name(mode) << "\n";
    out << "abort_after = " << abort_after << "\n";
    out << "variant = " << variant_name(variant) << "\n";
    out << "max_steps = " << max_steps << "\n";
    out << "opt_never_fail_casts = " << (opt_never_fail_casts ? "true" : "false") << "\n";
    out << "opt_subsumed_bounds = " << (opt_subsumed_bounds ? "true" : "false") << "\n";
    out << "opt_redundant_narrow = " << (opt_redundant_narrow ? "true" : "false") << "\n";
    return out.str();
}

std::string_view mode_name(ReportMode m) {
    switch (m) {
    case ReportMode::LogAll:
        return "log";
    case ReportMode::CountOnly:
        return "count";
    case ReportMode::AbortAfterN:
        return "abort";
    }
    return "?";
}

std::string_view variant_name(ir::Variant v) {
    switch (v) {
    case ir::Variant::Full:
        return "full";
    case ir::Variant::Bounds:
        return "bounds";
    case ir::Variant::Type:
        return "type";
    }
    return "?";
}

std::string_view halt_name(ir::ExecReport::Halt h) {
    switch (h) {
    case ir::ExecReport::Halt::Completed:
        return "completed";
    case ir::ExecReport::Halt::Aborted:
        return "aborted";
    case ir::ExecReport::Halt::Fault:
        return "fault";
    }
    return "?";
}

namespace {

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::string render_json(const std::string &program, const RunConfig &cfg,
                        const ir::ExecReport &rep) {
    ordered_json j;
    j["schema"] = 1;
    j["program"] = program;
    j["seed"] = cfg.space.seed;
    j["mode"] = mode_name(cfg.mode);
    j["abort_after"] = cfg.abort_after;
    j["variant"] = variant_name(cfg.variant);
    j["optimizations"] = {{"never_fail_casts", cfg.opt_never_fail_casts},
                          {"subsumed_bounds", cfg.opt_subsumed_bounds},
                          {"redundant_narrow", cfg.opt_redundant_narrow}};
    j["halted_by"] = halt_name(rep.halted_by);
    if (rep.halted_by == ir::ExecReport::Halt::Fault)
        j["fault"] = rep.fault_message;
    j["return_value"] = rep.return_value;
    j["memory_digest"] = hex64(rep.memory_digest);
    j["allocations"] = rep.allocations;
    j["counters"] = {{"type_checks", rep.counters.type_checks},
                     {"bounds_checks", rep.counters.bounds_checks},
                     {"legacy_checks", rep.counters.legacy_checks}};
    uint64_t total = 0;
    for (const auto &[key, count] : rep.buckets)
        total += count;
    j["errors"] = {{"total", total}, {"distinct", rep.buckets.size()}};
    ordered_json buckets = ordered_json::array();
    for (const auto &[key, count] : rep.buckets) {
        ordered_json b;
        b["kind"] = kind_name(key.kind);
        b["static"] = key.static_type;
        b["dynamic"] = key.dynamic_type;
        b["offset"] = key.offset;
        b["count"] = count;
        auto it = rep.first_sites.find(key);
        b["site"] = it == rep.first_sites.end() ? "" : it->second;
        buckets.push_back(std::move(b));
    }
    j["buckets"] = std::move(buckets);
    if (cfg.mode == ReportMode::LogAll) {
        ordered_json log = ordered_json::array();
        for (const auto &e : rep.log)
            log.push_back(format_error_line(e));
        j["log"] = std::move(log);
    }
    return j.dump(2) + "\n";
}

std::string render_text(const std::string &program, const RunConfig &cfg,
                        const ir::ExecReport &rep) {
    std::ostringstream out;
    out << program << ": " << halt_name(rep.halted_by);
    if (rep.halted_by == ir::ExecReport::Halt::Completed)
        out << " (returned " << rep.return_value << ")";
    if (rep.halted_by == ir::ExecReport::Halt::Fault)
        out << " (" << rep.fault_message << ")";
    out << "\n";
    out << "variant=" << variant_name(cfg.variant) << " mode=" << mode_name(cfg.mode)
        << " seed=" << cfg.space.seed << "\n";
    out << "#type_checks=" << rep.counters.type_checks
        << " #bounds_checks=" << rep.counters.bounds_checks
        << " #legacy_checks=" << rep.counters.legacy_checks << "\n";
    uint64_t total = 0;
    for (const auto &[key, count] : rep.buckets)
        total += count;
    out << "errors: " << total << " total, " << rep.buckets.size() << " distinct\n";
    for (const auto &[key, count] : rep.buckets) {
        auto it = rep.first_sites.find(key);
        out << "  " << kind_name(key.kind) << " static=" << key.static_type
            << " dynamic=" << key.dynamic_type << " offset=" << key.offset << " count=" << count
            << " first=" << (it == rep.first_sites.end() ? "?" : it->second) << "\n";
    }
    return out.str();
}

std::string format_layout(TypeRef t, int64_t k) {
    auto views = layout(t, k);
    std::sort(views.begin(), views.end(), [](const SubObject &a, const SubObject &b) {
        if (a.delta != b.delta)
            return a.delta < b.delta;
        return a.type->display() < b.type->display();
    });
    std::ostringstream out;
    for (const auto &v : views)
        out << "(" << v.type->display() << ", " << v.delta << ")\n";
    return out.str();
}

std::string format_table(TypeUniverse &u, TypeRef t) {
    LayoutTable table = build_layout_table(u, t);
    std::ostringstream out;
    std::string tn = t->display();
    for (const auto &e : table.entries()) {
        out << "(" << tn << ", " << e.sub->display() << ", " << e.k << ") -> ";
        if (e.bounds.wide)
            out << "-inf..inf";
        else
            out << e.bounds.lo << ".." << e.bounds.hi;
        out << "\n";
    }
    return out.str();
}

std::string format_stats(const std::vector<StatsRow> &rows) {
    std::ostringstream out;
    size_t name_w = 7;
    for (const auto &r : rows)
        name_w = std::max(name_w, r.program.size());
    out << std::left << std::setw(static_cast<int>(name_w)) << "program" << std::right
        << std::setw(14) << "#type_checks" << std::setw(16) << "#bounds_checks"
        << std::setw(16) << "#legacy_checks" << std::setw(10) << "#buckets" << "\n";
    for (const auto &r : rows) {
        out << std::left << std::setw(static_cast<int>(name_w)) << r.program << std::right
            << std::setw(14) << r.counters.type_checks << std::setw(16)
            << r.counters.bounds_checks << std::setw(16) << r.counters.legacy_checks
            << std::setw(10) << r.buckets << "\n";
    }
    return out.str();
}

} // namespace etsan
