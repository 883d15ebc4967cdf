#pragma once

#include "etsan/ir.hpp"
#include "etsan/report.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tst {

inline std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string corpus_path(const std::string &rel) {
    return std::string(ETSAN_CORPUS_DIR) + "/" + rel;
}

inline etsan::ir::Program load_corpus(const std::string &rel) {
    return etsan::ir::parse_program(read_file(corpus_path(rel)), rel);
}

// The worked example used throughout: a packed pair of records. S is 20
// bytes (explicit member offsets suppress alignment padding), T is 24.
inline constexpr const char *kExampleDecls = R"(
struct S { int a[3] @0; char *s @12; };
struct T @size(24) { float f @0; struct S t @4; };
)";

inline std::shared_ptr<etsan::TypeUniverse> example_universe() {
    return etsan::ir::parse_type_file(kExampleDecls, "example");
}

inline const char *kCleanPrograms[] = {
    "clean/empty.etir",      "clean/sum.etir",    "clean/length.etir",
    "clean/quicksort.etir",  "clean/list_stack.etir", "clean/matrix.etir",
    "clean/dot.etir",        "clean/union_rw.etir",   "clean/bytes.etir",
    "clean/tree.etir",       "clean/fam_ok.etir",     "clean/varstack.etir",
};

inline const char *kBugPrograms[] = {
    "bugs/account_overflow.etir", "bugs/subobject_underflow.etir",
    "bugs/one_past_end.etir",     "bugs/use_after_free.etir",
    "bugs/double_free.etir",      "bugs/reuse_after_free.etir",
    "bugs/byte_buffer_cast.etir", "bugs/bad_downcast.etir",
    "bugs/container_cast.etir",   "bugs/shared_prefix.etir",
    "bugs/legacy_deref.etir",     "bugs/fam_overflow.etir",
    "bugs/stack_return.etir",
};

} // namespace tst
