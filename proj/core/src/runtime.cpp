#include "etsan/runtime.hpp"

#include <tuple>

namespace etsan {

const char *kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::TypeError:
        return "type_error";
    case ErrorKind::BoundsError:
        return "bounds_error";
    case ErrorKind::UseAfterFree:
        return "use_after_free";
    case ErrorKind::DoubleFree:
        return "double_free";
    }
    return "?";
}

std::string format_error_line(const SanError &e) {
    return std::string("ETSAN ") + kind_name(e.kind) + " static=" + e.static_type +
           " dynamic=" + e.dynamic_type + " offset=" + std::to_string(e.offset) +
           " site=" + (e.site.empty() ? "<unknown>" : e.site);
}

bool BucketKey::operator<(const BucketKey &o) const {
    return std::tie(kind, static_type, dynamic_type, offset) <
           std::tie(o.kind, o.static_type, o.dynamic_type, o.offset);
}

bool BucketKey::operator==(const BucketKey &o) const {
    return kind == o.kind && static_type == o.static_type && dynamic_type == o.dynamic_type &&
           offset == o.offset;
}

void Reporter::report(const SanError &e) {
    std::lock_guard<std::mutex> lock(mu_);
    ++total_;
    BucketKey key{e.kind, e.static_type, e.dynamic_type, e.offset};
    auto [it, fresh] = buckets_.emplace(key, 0);
    ++it->second;
    if (fresh)
        first_sites_.emplace(key, e.site);
    if (mode_ == ReportMode::LogAll)
        log_.push_back(e);
    if (mode_ == ReportMode::AbortAfterN && fresh && buckets_.size() >= abort_after_)
        halt_ = true;
}

AbsBounds bounds_narrow(AbsBounds b, AbsBounds sub) {
    AbsBounds r{std::max(b.lo, sub.lo), std::min(b.hi, sub.hi)};
    if (r.lo > r.hi)
        return AbsBounds{sub.lo, sub.lo};
    return r;
}

bool bounds_contain(AbsBounds b, uint64_t addr, uint64_t width, AccessKind kind) {
    if (kind == AccessKind::Escape)
        return addr >= b.lo && addr <= b.hi;
    uint64_t end = addr + width;
    if (end < addr) // wrap
        return false;
    return addr >= b.lo && end <= b.hi;
}

MetaHeader TypedRuntime::read_meta(uint64_t slot_base) {
    MetaHeader m;
    m.type_id = space_.mem_load(slot_base, 8);
    m.size = space_.mem_load(slot_base + 8, 8);
    return m;
}

void TypedRuntime::write_meta(uint64_t slot_base, MetaHeader m) {
    space_.mem_store(slot_base, 8, m.type_id);
    space_.mem_store(slot_base + 8, 8, m.size);
}

uint64_t TypedRuntime::type_malloc(uint64_t size, const TypeMeta *meta) {
    uint64_t base = space_.lf_alloc(size + kMetaSize);
    write_meta(base, MetaHeader{meta->id, size});
    return base + kMetaSize;
}

void TypedRuntime::type_free(uint64_t addr, std::string_view site) {
    if (addr == 0)
        return;
    auto base = space_.lf_base(addr);
    if (!base) {
        reporter_.report(SanError{ErrorKind::TypeError, "free", "legacy", 0, std::string(site)});
        return;
    }
    uint64_t bptr = *base + kMetaSize;
    MetaHeader m = read_meta(*base);
    if (addr != bptr) {
        const TypeMeta *meta = metas_.by_id(m.type_id);
        reporter_.report(SanError{ErrorKind::TypeError, "free", meta ? meta->name : "FREE",
                                  static_cast<int64_t>(addr - bptr), std::string(site)});
        return;
    }
    if (m.type_id == 0) {
        reporter_.report(SanError{ErrorKind::DoubleFree, "free", "FREE", 0, std::string(site)});
        return;
    }
    write_meta(*base, MetaHeader{0, m.size}); // retype FREE, bytes stay until reuse
    space_.lf_free(*base);
}

AbsBounds TypedRuntime::type_check(uint64_t addr, const TypeMeta *query, std::string_view site) {
    ++counters_.type_checks;
    auto base = space_.lf_base(addr);
    if (!base) {
        ++counters_.legacy_checks;
        return AbsBounds::wide(); // legacy pointers are never faulted
    }
    MetaHeader m = read_meta(*base);
    const TypeMeta *meta = metas_.by_id(m.type_id);
    bool freed = !meta || meta->id == 0;
    uint64_t bptr = *base + kMetaSize;
    int64_t k = static_cast<int64_t>(addr - bptr);
    std::optional<RelBounds> rel;
    if (!freed && k >= 0)
        rel = table_lookup(*meta->table, query->type, k, m.size);
    if (!rel) {
        reporter_.report(SanError{freed ? ErrorKind::UseAfterFree : ErrorKind::TypeError, query->name,
                                  freed ? "FREE" : meta->name, k, std::string(site)});
        return AbsBounds::wide(); // errors yield WIDE: no cascading failures
    }
    AbsBounds alloc{bptr, bptr + m.size};
    AbsBounds sub = rel->wide
                        ? AbsBounds::wide()
                        : AbsBounds{addr + static_cast<uint64_t>(rel->lo), addr + static_cast<uint64_t>(rel->hi)};
    return bounds_narrow(alloc, sub);
}

AbsBounds TypedRuntime::bounds_get(uint64_t addr) {
    ++counters_.type_checks; // occupies the same schema slots as type_check
    auto base = space_.lf_base(addr);
    if (!base) {
        ++counters_.legacy_checks;
        return AbsBounds::wide();
    }
    MetaHeader m = read_meta(*base);
    uint64_t bptr = *base + kMetaSize;
    const TypeMeta *meta = metas_.by_id(m.type_id);
    if (!meta || meta->id == 0)
        return AbsBounds{bptr, bptr}; // freed: any access errors
    return AbsBounds{bptr, bptr + m.size};
}

void TypedRuntime::bounds_check(uint64_t addr, uint64_t width, AbsBounds b, AccessKind kind,
                                const TypeMeta *static_meta, std::string_view site) {
    ++counters_.bounds_checks;
    if (bounds_contain(b, addr, width, kind))
        return;
    std::string dyn = "legacy";
    int64_t k = 0;
    if (auto base = space_.lf_base(addr)) {
        MetaHeader m = read_meta(*base);
        const TypeMeta *meta = metas_.by_id(m.type_id);
        dyn = meta ? meta->name : "FREE";
        k = static_cast<int64_t>(addr - (*base + kMetaSize));
    }
    reporter_.report(SanError{ErrorKind::BoundsError, static_meta ? static_meta->name : "?", dyn, k,
                              std::string(site)});
}

uint64_t TypedRuntime::stack_alloc(uint64_t frame, uint64_t size, const TypeMeta *meta) {
    uint64_t base = space_.stack_alloc(frame, size + kMetaSize);
    write_meta(base, MetaHeader{meta->id, size});
    return base + kMetaSize;
}

void TypedRuntime::stack_release(uint64_t frame) {
    if (const std::vector<uint64_t> *objs = space_.frame_objects(frame))
        for (auto it = objs->rbegin(); it != objs->rend(); ++it) {
            MetaHeader m = read_meta(*it);
            write_meta(*it, MetaHeader{0, m.size});
        }
    space_.stack_release(frame);
}

} // namespace etsan
