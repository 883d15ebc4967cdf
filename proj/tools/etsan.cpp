// Command-line front end: run IR programs under the checking interpreter,
// inspect layouts and layout tables, and collect per-program check counts.

#include "etsan/report.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using etsan::RunConfig;
using nlohmann::ordered_json;

std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw etsan::Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string &path, const std::string &data) {
    if (path == "-") {
        std::cout << data;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw etsan::Error("cannot write '" + path + "'");
    out << data;
}

struct CommonOpts {
    std::string config_path;
    std::string mode;
    std::string variant;
    bool no_opt = false;
    std::optional<uint64_t> seed;

    void add_flags(CLI::App *cmd, bool with_mode = true) {
        cmd->add_option("--config", config_path, "configuration file (key = value lines)");
        if (with_mode)
            cmd->add_option("--mode", mode, "log | count | abort=N");
        cmd->add_option("--variant", variant, "full | bounds | type");
        cmd->add_flag("--no-opt", no_opt, "disable all optimization passes");
        cmd->add_option("--seed", seed, "allocator placement seed");
    }

    RunConfig config() const {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = RunConfig::parse(read_file(config_path), config_path);
        if (!mode.empty()) {
            if (mode.rfind("abort=", 0) == 0) {
                cfg.set("mode", "abort");
                cfg.set("abort_after", mode.substr(6));
            } else {
                cfg.set("mode", mode);
            }
        }
        if (!variant.empty())
            cfg.set("variant", variant);
        if (no_opt) {
            cfg.opt_never_fail_casts = false;
            cfg.opt_subsumed_bounds = false;
            cfg.opt_redundant_narrow = false;
        }
        if (seed)
            cfg.space.seed = *seed;
        return cfg;
    }
};

etsan::ir::ExecReport run_one(const std::string &file, const RunConfig &cfg) {
    auto prog = etsan::ir::parse_program(read_file(file), file);
    auto inst = etsan::ir::instrument(prog, cfg.instrument_options());
    return etsan::ir::interpret(inst, cfg.run_options());
}

int do_run(const std::string &file, const CommonOpts &co, const std::string &json_path) {
    RunConfig cfg = co.config();
    auto rep = run_one(file, cfg);
    if (cfg.mode == etsan::ReportMode::LogAll)
        for (const auto &e : rep.log)
            std::cout << etsan::format_error_line(e) << "\n";
    std::cout << etsan::render_text(file, cfg, rep);
    if (!json_path.empty())
        write_file(json_path, etsan::render_json(file, cfg, rep));
    switch (rep.halted_by) {
    case etsan::ir::ExecReport::Halt::Completed:
        return 0;
    case etsan::ir::ExecReport::Halt::Aborted:
        return 1;
    case etsan::ir::ExecReport::Halt::Fault:
        std::cerr << "etsan: fault: " << rep.fault_message << "\n";
        return 2;
    }
    return 2;
}

etsan::TypeRef resolve_type(etsan::TypeUniverse &u, const std::string &name) {
    if (etsan::TypeRef t = u.find_tag(name))
        return t;
    if (etsan::TypeRef t = u.maybe_fundamental(name))
        return t;
    throw etsan::Error("unknown type '" + name + "'");
}

int do_layout(const std::string &typefile, const std::string &tname, int64_t k, bool as_json) {
    auto universe = etsan::ir::parse_type_file(read_file(typefile), typefile);
    etsan::TypeRef t = resolve_type(*universe, tname);
    if (!as_json) {
        std::cout << etsan::format_layout(t, k);
        return 0;
    }
    auto views = etsan::layout(t, k);
    std::sort(views.begin(), views.end(), [](const etsan::SubObject &a, const etsan::SubObject &b) {
        if (a.delta != b.delta)
            return a.delta < b.delta;
        return a.type->display() < b.type->display();
    });
    ordered_json j;
    j["type"] = t->display();
    j["k"] = k;
    ordered_json arr = ordered_json::array();
    for (const auto &v : views)
        arr.push_back({{"type", v.type->display()}, {"delta", v.delta}});
    j["views"] = std::move(arr);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int do_table(const std::string &typefile, const std::string &tname, bool as_json) {
    auto universe = etsan::ir::parse_type_file(read_file(typefile), typefile);
    etsan::TypeRef t = resolve_type(*universe, tname);
    if (!as_json) {
        std::cout << etsan::format_table(*universe, t);
        return 0;
    }
    etsan::LayoutTable table = etsan::build_layout_table(*universe, t);
    ordered_json j;
    j["type"] = t->display();
    ordered_json arr = ordered_json::array();
    for (const auto &e : table.entries()) {
        ordered_json row;
        row["sub"] = e.sub->display();
        row["k"] = e.k;
        row["wide"] = e.bounds.wide;
        if (!e.bounds.wide) {
            row["lo"] = e.bounds.lo;
            row["hi"] = e.bounds.hi;
        }
        arr.push_back(std::move(row));
    }
    j["entries"] = std::move(arr);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int do_stats(const std::vector<std::string> &files, const CommonOpts &co) {
    RunConfig cfg = co.config();
    std::vector<etsan::StatsRow> rows;
    for (const auto &f : files) {
        auto rep = run_one(f, cfg);
        rows.push_back({f, rep.counters, rep.buckets.size()});
    }
    std::cout << etsan::format_stats(rows);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"dynamically typed C: layout tables, typed heap, checking interpreter"};
    app.require_subcommand(1);

    auto *run = app.add_subcommand("run", "instrument and interpret a program");
    std::string run_file, run_json;
    CommonOpts run_opts;
    run->add_option("file", run_file, "IR program")->required();
    run_opts.add_flags(run);
    run->add_option("--json", run_json, "write the JSON report here ('-' for stdout)");

    auto *layout = app.add_subcommand("layout", "print the layout set of a type at an offset");
    std::string lay_file, lay_type;
    int64_t lay_k = 0;
    bool lay_json = false;
    layout->add_option("typefile", lay_file, "type declarations")->required();
    layout->add_option("type", lay_type, "type name")->required();
    layout->add_option("k", lay_k, "byte offset")->required();
    layout->add_flag("--json", lay_json, "emit JSON");

    auto *table = app.add_subcommand("table", "print the layout hash table of a type");
    std::string tab_file, tab_type;
    bool tab_json = false;
    table->add_option("typefile", tab_file, "type declarations")->required();
    table->add_option("type", tab_type, "type name")->required();
    table->add_flag("--json", tab_json, "emit JSON");

    auto *stats = app.add_subcommand("stats", "run programs and tabulate executed checks");
    std::vector<std::string> stats_files;
    CommonOpts stats_opts;
    stats->add_option("files", stats_files, "IR programs")->required();
    stats_opts.add_flags(stats);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand(run))
            return do_run(run_file, run_opts, run_json);
        if (app.got_subcommand(layout))
            return do_layout(lay_file, lay_type, lay_k, lay_json);
        if (app.got_subcommand(table))
            return do_table(tab_file, tab_type, tab_json);
        if (app.got_subcommand(stats))
            return do_stats(stats_files, stats_opts);
    } catch (const std::exception &e) {
        std::cerr << "etsan: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
