#pragma once

// Typed allocation and checking on top of the address space. Every
// allocation (heap, stack, legacy fallback) carries a 16-byte META header
// holding the dynamic type (a TypeMeta id) and the user size. type_check
// resolves an interior pointer against the allocation's layout table and
// returns sub-object bounds narrowed to the allocation; diagnostics are
// values handed to a Reporter, never exceptions.

#include "etsan/heap.hpp"
#include "etsan/layout.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace etsan {

struct MetaHeader {
    uint64_t type_id = 0; // TypeMeta id, 0 = FREE
    uint64_t size = 0;    // user-visible size in bytes
};
inline constexpr uint64_t kMetaSize = 16;

enum class ErrorKind { TypeError, BoundsError, UseAfterFree, DoubleFree };
const char *kind_name(ErrorKind k);

struct SanError {
    ErrorKind kind = ErrorKind::TypeError;
    std::string static_type;  // queried/access type, e.g. "double[]"
    std::string dynamic_type; // allocation type, e.g. "T[]", "FREE", "legacy"
    int64_t offset = 0;       // bytes from the allocation base pointer
    std::string site;         // "file:line"
};

std::string format_error_line(const SanError &e); // "ETSAN <kind> static=.. dynamic=.. offset=.. site=.."

struct BucketKey {
    ErrorKind kind;
    std::string static_type;
    std::string dynamic_type;
    int64_t offset;

    bool operator<(const BucketKey &o) const;
    bool operator==(const BucketKey &o) const;
};

enum class ReportMode { LogAll, CountOnly, AbortAfterN };

class Reporter {
  public:
    explicit Reporter(ReportMode mode = ReportMode::LogAll, uint64_t abort_after = 1)
        : mode_(mode), abort_after_(abort_after) {}

    void report(const SanError &e);
    bool should_halt() const { return halt_; }

    const std::map<BucketKey, uint64_t> &buckets() const { return buckets_; }
    const std::map<BucketKey, std::string> &first_sites() const { return first_sites_; }
    const std::vector<SanError> &log() const { return log_; } // LogAll only
    uint64_t total_errors() const { return total_; }
    ReportMode mode() const { return mode_; }

  private:
    ReportMode mode_;
    uint64_t abort_after_;
    bool halt_ = false;
    uint64_t total_ = 0;
    std::map<BucketKey, uint64_t> buckets_;
    std::map<BucketKey, std::string> first_sites_;
    std::vector<SanError> log_;
    mutable std::mutex mu_;
};

struct Counters {
    uint64_t type_checks = 0;
    uint64_t bounds_checks = 0;
    uint64_t legacy_checks = 0;
};

// Interval intersection; an empty intersection collapses to a zero-width
// range at the sub-object's lower bound.
AbsBounds bounds_narrow(AbsBounds b, AbsBounds sub);

enum class AccessKind { Access, Escape };

// Pure predicate: Access requires [addr, addr+width] within b; Escape
// (width 0) allows the one-past-the-end address.
bool bounds_contain(AbsBounds b, uint64_t addr, uint64_t width, AccessKind kind);

class TypedRuntime {
  public:
    TypedRuntime(AddressSpace &space, MetaRegistry &metas, Reporter &reporter)
        : space_(space), metas_(metas), reporter_(reporter) {}

    uint64_t type_malloc(uint64_t size, const TypeMeta *meta);
    void type_free(uint64_t addr, std::string_view site);
    AbsBounds type_check(uint64_t addr, const TypeMeta *query, std::string_view site);
    AbsBounds bounds_get(uint64_t addr); // allocation bounds; freed slots zero-width

    void bounds_check(uint64_t addr, uint64_t width, AbsBounds b, AccessKind kind,
                      const TypeMeta *static_meta, std::string_view site);

    uint64_t stack_alloc(uint64_t frame, uint64_t size, const TypeMeta *meta);
    void stack_release(uint64_t frame); // retypes the frame's objects FREE, then releases

    MetaHeader read_meta(uint64_t slot_base);
    void write_meta(uint64_t slot_base, MetaHeader m);

    Counters &counters() { return counters_; }
    AddressSpace &space() { return space_; }
    MetaRegistry &metas() { return metas_; }
    Reporter &reporter() { return reporter_; }

  private:
    AddressSpace &space_;
    MetaRegistry &metas_;
    Reporter &reporter_;
    Counters counters_;
};

} // namespace etsan
