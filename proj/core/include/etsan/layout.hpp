#pragma once

// The memory layout relation and its hash-table encoding.
//
// layout(t, k) enumerates every valid sub-object view <U, delta> of an
// object with dynamic type t[] at byte offset k: the queried address lies
// delta bytes past the start of a U. It is the brute-force reference; the
// LayoutTable precomputes one winning entry per (sub-object key, offset)
// with relative bounds, which is what the runtime consults.

#include "etsan/types.hpp"

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

namespace etsan {

struct SubObject {
    TypeRef type = nullptr;
    int64_t delta = 0;
    uint32_t depth = 0;    // embedding depth at which the view was found
    uint32_t order = 0;    // deterministic discovery index
    bool fam_view = false; // view of a flexible array member's own array

    bool is_end() const { return delta > 0 && static_cast<uint64_t>(delta) == type->size(); }
};

// Reference enumeration of all sub-object views. FREE absorbs every offset.
std::vector<SubObject> layout(TypeRef t, int64_t k);

// Bounds relative to the queried address; wide means (-inf, +inf).
struct RelBounds {
    int64_t lo = 0;
    int64_t hi = 0;
    bool wide = false;

    bool operator==(const RelBounds &o) const {
        return wide == o.wide && (wide || (lo == o.lo && hi == o.hi));
    }
};

inline RelBounds rel_bounds(const SubObject &s) {
    return RelBounds{-s.delta, static_cast<int64_t>(s.type->size()) - s.delta, false};
}

// Absolute bounds of the sub-object containing address q per view s.
struct AbsBounds {
    uint64_t lo = 0;
    uint64_t hi = 0;

    bool operator==(const AbsBounds &o) const { return lo == o.lo && hi == o.hi; }
    bool contains(uint64_t addr, uint64_t width) const {
        return addr >= lo && addr + width <= hi && addr + width >= addr;
    }
    static AbsBounds wide() { return AbsBounds{0, UINT64_MAX}; }
    bool is_wide() const { return lo == 0 && hi == UINT64_MAX; }
};

AbsBounds type_bounds(uint64_t q, const SubObject &s);

class LayoutTable {
  public:
    struct Entry {
        TypeRef sub = nullptr; // sub-object key (arrays keyed by element)
        uint64_t k = 0;
        RelBounds bounds;
    };

    TypeRef elem() const { return elem_; }
    uint64_t elem_size() const { return elem_size_; }
    const std::vector<Entry> &entries() const { return entries_; } // sorted (k, sub display)
    std::optional<RelBounds> find(TypeRef sub, uint64_t k) const;
    std::optional<RelBounds> find_any_pointer(uint64_t k) const;
    size_t size() const { return entries_.size(); }

  private:
    friend LayoutTable build_layout_table(TypeUniverse &u, TypeRef t);

    static uint64_t pack(uint32_t id, uint64_t k) { return (static_cast<uint64_t>(id) << 40) | k; }

    TypeRef elem_ = nullptr;
    uint64_t elem_size_ = 0;
    bool has_fam_ = false;
    uint64_t fam_offset_ = 0;
    uint64_t fam_elem_size_ = 1;
    uint32_t char_id_ = 0;
    uint32_t void_ptr_id_ = 0;
    std::unordered_map<uint64_t, RelBounds> map_;     // (sub id, k) -> bounds
    std::unordered_map<uint64_t, RelBounds> any_ptr_; // k -> winning pointer entry
    std::vector<Entry> entries_;

  public:
    friend std::optional<RelBounds> table_lookup(const LayoutTable &table, TypeRef sub, int64_t k,
                                                 uint64_t alloc_size);
};

// Builds the table for element type t: entries for every 0 <= k <= sizeof(t),
// the top-level entry (t, t, 0) and flexible-member views WIDE, ties broken
// in favour of non-end, then wider, then shallower, then declaration order.
LayoutTable build_layout_table(TypeUniverse &u, TypeRef t);

// Table lookup with offset normalization (k mod sizeof(t) when k exceeds
// sizeof(t); the flexible window for FAM types) and the fixed coercions
// {T <-> char[], T* <-> void*}. sub is the element type of the queried S[].
std::optional<RelBounds> table_lookup(const LayoutTable &table, TypeRef sub, int64_t k,
                                      uint64_t alloc_size);

// Runtime representation of an incomplete dynamic type T[]: one per element
// type, id 0 reserved for FREE.
struct TypeMeta {
    uint64_t id = 0;
    TypeRef type = nullptr; // element type; FREE for the free meta
    uint64_t size = 0;      // sizeof(element)
    std::string name;       // "T[]"
    const LayoutTable *table = nullptr; // null for FREE
};

class MetaRegistry {
  public:
    explicit MetaRegistry(TypeUniverse &u);

    const TypeMeta *meta_of(TypeRef elem);
    const TypeMeta *free_meta() const { return metas_[0].get(); }
    const TypeMeta *by_id(uint64_t id) const {
        return id < metas_.size() ? metas_[id].get() : nullptr;
    }
    // Deterministic ids: one meta per eligible type in universe order.
    void preregister_all();
    TypeUniverse &universe() { return universe_; }

  private:
    TypeUniverse &universe_;
    std::vector<std::unique_ptr<TypeMeta>> metas_;
    std::vector<std::unique_ptr<LayoutTable>> tables_;
    std::unordered_map<TypeRef, TypeMeta *> by_type_;
};

} // namespace etsan
