#include "etsan/layout.hpp"

#include <algorithm>

namespace etsan {

namespace {

struct Walker {
    std::vector<SubObject> out;
    uint32_t next_order = 0;

    void add(TypeRef type, int64_t delta, uint32_t depth, bool fam_view) {
        for (const SubObject &s : out)
            if (s.type == type && s.delta == delta)
                return; // set semantics: first discovery wins
        out.push_back(SubObject{type, delta, depth, next_order++, fam_view});
    }

    // mark_fam marks the self views (a)/(b)/(d) of t itself, used when t is
    // the array of a flexible member.
    void walk(TypeRef t, int64_t k, uint32_t depth, bool mark_fam) {
        if (t->kind() == TypeKind::Free) {
            add(t, 0, depth, false);
            return;
        }
        int64_t size = static_cast<int64_t>(t->size());
        if (k == 0)
            add(t, 0, depth, mark_fam); // rule (a)
        if (k == size && size > 0)
            add(t, size, depth, mark_fam); // rule (b)
        if (k < 0 || k >= size)
            return; // rules (c)-(g) need 0 <= k < sizeof(t)

        switch (t->kind()) {
        case TypeKind::Array: {
            TypeRef u = t->elem();
            int64_t s = static_cast<int64_t>(u->size());
            int64_t r = k % s;
            walk(u, r, depth + 1, false); // rule (c)
            if (r == 0) {
                if (k > 0)
                    walk(u, s, depth + 1, false); // end view of the previous element
                add(t, k, depth, mark_fam);       // rule (d)
            }
            break;
        }
        case TypeKind::Struct:
        case TypeKind::Class: {
            for (const Field &f : t->fields()) { // rules (e)/(f)
                int64_t rel = k - static_cast<int64_t>(f.offset);
                if (rel < 0 || rel > static_cast<int64_t>(f.type->size()))
                    continue;
                walk(f.type, rel, depth + 1, f.is_fam);
            }
            break;
        }
        case TypeKind::Union: {
            for (const Field &f : t->fields()) // rule (g)
                if (k <= static_cast<int64_t>(f.type->size()))
                    walk(f.type, k, depth + 1, f.is_fam);
            break;
        }
        default:
            break;
        }
    }
};

TypeRef key_of(TypeRef sub) {
    return sub->kind() == TypeKind::Array ? sub->elem() : sub;
}

// Tie-break: non-end before end, then wider (WIDE widest), then shallower,
// then first discovered.
bool better(const SubObject &a, bool a_wide, const SubObject &b, bool b_wide) {
    if (a.is_end() != b.is_end())
        return !a.is_end();
    uint64_t wa = a_wide ? UINT64_MAX : a.type->size();
    uint64_t wb = b_wide ? UINT64_MAX : b.type->size();
    if (wa != wb)
        return wa > wb;
    if (a.depth != b.depth)
        return a.depth < b.depth;
    return a.order < b.order;
}

} // namespace

std::vector<SubObject> layout(TypeRef t, int64_t k) {
    Walker w;
    w.walk(t, k, 0, false);
    return std::move(w.out);
}

AbsBounds type_bounds(uint64_t q, const SubObject &s) {
    uint64_t base = q - static_cast<uint64_t>(s.delta);
    return AbsBounds{base, base + s.type->size()};
}

std::optional<RelBounds> LayoutTable::find(TypeRef sub, uint64_t k) const {
    auto it = map_.find(pack(sub->id(), k));
    if (it == map_.end())
        return std::nullopt;
    return it->second;
}

std::optional<RelBounds> LayoutTable::find_any_pointer(uint64_t k) const {
    auto it = any_ptr_.find(k);
    if (it == any_ptr_.end())
        return std::nullopt;
    return it->second;
}

LayoutTable build_layout_table(TypeUniverse &u, TypeRef t) {
    if (t->kind() == TypeKind::Free)
        throw Error("no layout table for FREE");
    if (t->is_record() && !t->sealed())
        throw Error("no layout table for incomplete type '" + t->display() + "'");
    if (t->size() == 0)
        throw Error("no layout table for zero-sized type '" + t->display() + "'");

    LayoutTable table;
    table.elem_ = t;
    table.elem_size_ = t->size();
    table.char_id_ = u.fundamental("char")->id();
    table.void_ptr_id_ = u.address_of(u.fundamental("void"))->id();
    if (t->is_record() && t->fam()) {
        const Field *fam = t->fam();
        table.has_fam_ = true;
        table.fam_offset_ = fam->offset;
        table.fam_elem_size_ = fam->type->elem()->size();
    }

    struct Winner {
        SubObject sub;
        bool wide = false;
        bool valid = false;
    };

    for (uint64_t k = 0; k <= t->size(); ++k) {
        std::unordered_map<TypeRef, Winner> winners;
        Winner any_ptr;
        for (const SubObject &s : layout(t, static_cast<int64_t>(k))) {
            bool wide = s.fam_view || (s.type == t && s.delta == 0); // top-level incomplete
            TypeRef key = key_of(s.type);
            Winner &w = winners[key];
            if (!w.valid || better(s, wide, w.sub, w.wide)) {
                w.sub = s;
                w.wide = wide;
                w.valid = true;
            }
            if (key->kind() == TypeKind::AddressOf &&
                (!any_ptr.valid || better(s, wide, any_ptr.sub, any_ptr.wide))) {
                any_ptr.sub = s;
                any_ptr.wide = wide;
                any_ptr.valid = true;
            }
        }
        for (const auto &[key, w] : winners) {
            RelBounds b = w.wide ? RelBounds{0, 0, true} : rel_bounds(w.sub);
            table.map_.emplace(LayoutTable::pack(key->id(), k), b);
            table.entries_.push_back(LayoutTable::Entry{key, k, b});
        }
        if (any_ptr.valid)
            table.any_ptr_.emplace(k, any_ptr.wide ? RelBounds{0, 0, true} : rel_bounds(any_ptr.sub));
    }

    std::sort(table.entries_.begin(), table.entries_.end(),
              [](const LayoutTable::Entry &a, const LayoutTable::Entry &b) {
                  if (a.k != b.k)
                      return a.k < b.k;
                  return a.sub->display() < b.sub->display();
              });
    return table;
}

std::optional<RelBounds> table_lookup(const LayoutTable &table, TypeRef sub, int64_t k,
                                      uint64_t alloc_size) {
    (void)alloc_size; // bounds are narrowed to the allocation by the caller
    if (k < 0)
        return std::nullopt;
    uint64_t off = static_cast<uint64_t>(k);
    if (table.has_fam_) {
        if (off > table.fam_offset_)
            off = (off - table.fam_offset_) % table.fam_elem_size_ + table.fam_offset_;
    } else if (off > table.elem_size_) {
        off %= table.elem_size_;
    }

    TypeRef key = key_of(sub);
    if (auto hit = table.find(key, off))
        return hit;

    // T* <-> void* (non-transitive: a concrete pointer query only matches a
    // stored void* entry, and a void* query matches any stored pointer).
    if (key->kind() == TypeKind::AddressOf) {
        bool query_is_void_ptr = key->id() == table.void_ptr_id_;
        if (query_is_void_ptr) {
            if (auto hit = table.find_any_pointer(off))
                return hit;
        } else if (auto it = table.map_.find(LayoutTable::pack(table.void_ptr_id_, off));
                   it != table.map_.end()) {
            return it->second;
        }
    }

    // char[] <-> T[]: a non-char query matches a char sub-object; a char[]
    // query matches any live object with allocation-wide bounds.
    bool query_is_char = key->id() == table.char_id_;
    if (!query_is_char) {
        if (auto it = table.map_.find(LayoutTable::pack(table.char_id_, off)); it != table.map_.end())
            return it->second;
        return std::nullopt;
    }
    return RelBounds{0, 0, true};
}

MetaRegistry::MetaRegistry(TypeUniverse &u) : universe_(u) {
    auto free_meta = std::make_unique<TypeMeta>();
    free_meta->id = 0;
    free_meta->type = u.free_type();
    free_meta->size = 0;
    free_meta->name = "FREE";
    free_meta->table = nullptr;
    metas_.push_back(std::move(free_meta));
    by_type_[u.free_type()] = metas_[0].get();
}

const TypeMeta *MetaRegistry::meta_of(TypeRef elem) {
    auto it = by_type_.find(elem);
    if (it != by_type_.end())
        return it->second;
    tables_.push_back(std::make_unique<LayoutTable>(build_layout_table(universe_, elem)));
    auto meta = std::make_unique<TypeMeta>();
    meta->id = metas_.size();
    meta->type = elem;
    meta->size = elem->size();
    meta->name = elem->display() + "[]";
    meta->table = tables_.back().get();
    TypeMeta *raw = meta.get();
    metas_.push_back(std::move(meta));
    by_type_[elem] = raw;
    return raw;
}

void MetaRegistry::preregister_all() {
    // Table building may intern new types (void*), so snapshot first.
    std::vector<TypeRef> snapshot(universe_.all().begin(), universe_.all().end());
    for (TypeRef t : snapshot) {
        if (t->kind() == TypeKind::Free)
            continue;
        if (t->is_record() && !t->sealed())
            continue;
        if (t->size() == 0)
            continue;
        meta_of(t);
    }
}

} // namespace etsan
