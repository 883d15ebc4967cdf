#include "etsan/types.hpp"

#include <algorithm>

namespace etsan {

namespace {

struct Fundamental {
    const char *name;
    uint64_t size;
};

// Default data model: 32-bit int, 64-bit long and addresses.
constexpr Fundamental kFundamentals[] = {
    {"void", 0},  {"bool", 1},   {"char", 1},  {"uchar", 1}, {"short", 2}, {"ushort", 2},
    {"int", 4},   {"uint", 4},   {"long", 8},  {"ulong", 8}, {"float", 4}, {"double", 8},
};

uint64_t round_up(uint64_t v, uint64_t align) {
    return align <= 1 ? v : (v + align - 1) / align * align;
}

} // namespace

uint64_t TypeDesc::size() const {
    if (is_record() && !sealed_)
        throw Error("sizeof of incomplete type '" + display() + "'");
    return size_;
}

TypeRef TypeDesc::target() const {
    if (kind_ != TypeKind::AddressOf)
        throw Error("target() on non-pointer type '" + display() + "'");
    return target_;
}

TypeRef TypeDesc::elem() const {
    if (kind_ != TypeKind::Array)
        throw Error("elem() on non-array type '" + display() + "'");
    return elem_;
}

uint64_t TypeDesc::count() const {
    if (kind_ != TypeKind::Array)
        throw Error("count() on non-array type '" + display() + "'");
    return count_;
}

const std::vector<Field> &TypeDesc::fields() const {
    if (!is_record())
        throw Error("fields() on non-record type '" + display() + "'");
    return fields_;
}

const Field *TypeDesc::fam() const {
    if (!is_record() || fam_index_ < 0)
        return nullptr;
    return &fields_[static_cast<size_t>(fam_index_)];
}

std::string TypeDesc::display() const {
    switch (kind_) {
    case TypeKind::Fundamental:
        return tag_;
    case TypeKind::AddressOf:
        return target_->display() + "*";
    case TypeKind::Function:
        return "fn";
    case TypeKind::Array:
        return elem_->display() + "[" + std::to_string(count_) + "]";
    case TypeKind::Struct:
    case TypeKind::Class:
    case TypeKind::Union: {
        if (!tag_.empty())
            return tag_;
        const char *kw = kind_ == TypeKind::Union ? "union" : (kind_ == TypeKind::Class ? "class" : "struct");
        return std::string(kw) + "#" + std::to_string(id_);
    }
    case TypeKind::Free:
        return "FREE";
    }
    return "?";
}

uint64_t sizeof_type(TypeRef t) { return t->size(); }

uint64_t align_of(TypeRef t) {
    switch (t->kind()) {
    case TypeKind::Fundamental:
        return std::max<uint64_t>(1, std::min<uint64_t>(t->size(), 8));
    case TypeKind::AddressOf:
        return 8;
    case TypeKind::Function:
        return 1;
    case TypeKind::Array:
        return align_of(t->elem());
    case TypeKind::Struct:
    case TypeKind::Class:
    case TypeKind::Union: {
        uint64_t a = 1;
        for (const Field &f : t->fields())
            a = std::max(a, align_of(f.type));
        return a;
    }
    case TypeKind::Free:
        return 1;
    }
    return 1;
}

const Field *find_field(TypeRef rec, std::string_view member) {
    if (!rec->is_record())
        return nullptr;
    for (const Field &f : rec->fields())
        if (f.name == member)
            return &f;
    return nullptr;
}

uint64_t offset_of(TypeRef rec, std::string_view member) {
    const Field *f = find_field(rec, member);
    if (!f)
        throw Error("type '" + rec->display() + "' has no member '" + std::string(member) + "'");
    return f->offset;
}

TypeUniverse::TypeUniverse() {
    for (const Fundamental &fu : kFundamentals) {
        TypeDesc *t = make(TypeKind::Fundamental);
        t->tag_ = fu.name;
        t->size_ = fu.size;
        t->sealed_ = true;
        interned_["f:" + t->tag_] = t;
    }
    TypeDesc *fr = make(TypeKind::Free);
    fr->tag_ = "FREE";
    fr->size_ = 0;
    fr->sealed_ = true;
    free_ = fr;
    TypeDesc *fn = make(TypeKind::Function);
    fn->tag_ = "fn";
    fn->size_ = 1;
    fn->sealed_ = true;
    fn_ = fn;
}

TypeDesc *TypeUniverse::make(TypeKind kind) {
    pool_.push_back(std::unique_ptr<TypeDesc>(new TypeDesc()));
    TypeDesc *t = pool_.back().get();
    t->kind_ = kind;
    t->id_ = static_cast<uint32_t>(pool_.size() - 1);
    order_.push_back(t);
    return t;
}

void TypeUniverse::set_fundamental_size(std::string_view name, uint64_t size) {
    if (frozen_fundamentals_)
        throw Error("fundamental sizes are frozen once dependent types exist");
    auto it = interned_.find("f:" + std::string(name));
    if (it == interned_.end())
        throw Error("unknown fundamental type '" + std::string(name) + "'");
    if (size == 0 || size > 8)
        throw Error("fundamental size must be 1..8");
    it->second->size_ = size;
}

TypeRef TypeUniverse::fundamental(std::string_view name) const {
    TypeRef t = maybe_fundamental(name);
    if (!t)
        throw Error("unknown fundamental type '" + std::string(name) + "'");
    return t;
}

TypeRef TypeUniverse::maybe_fundamental(std::string_view name) const {
    auto it = interned_.find("f:" + std::string(name));
    return it == interned_.end() ? nullptr : it->second;
}

TypeRef TypeUniverse::address_of(TypeRef t) {
    if (t->kind() == TypeKind::Free)
        throw Error("pointer to FREE is not a type");
    frozen_fundamentals_ = true;
    std::string key = "p:" + std::to_string(t->id());
    auto it = interned_.find(key);
    if (it != interned_.end())
        return it->second;
    TypeDesc *p = make(TypeKind::AddressOf);
    p->target_ = t;
    p->size_ = 8;
    p->sealed_ = true;
    interned_[key] = p;
    return p;
}

TypeRef TypeUniverse::function_type() { return fn_; }

TypeRef TypeUniverse::array_of(TypeRef elem, uint64_t n) {
    if (n == 0)
        throw Error("array count must be at least 1");
    if (elem->kind() == TypeKind::Free)
        throw Error("array of FREE is not a type");
    if (elem->kind() == TypeKind::Fundamental && elem->size() == 0)
        throw Error("array of void is not a type");
    if (elem->is_record() && !elem->sealed())
        throw Error("array of incomplete type '" + elem->display() + "'");
    if (elem->is_record() && elem->fam())
        throw Error("array of a record with a flexible member");
    frozen_fundamentals_ = true;
    std::string key = "a:" + std::to_string(elem->id()) + ":" + std::to_string(n);
    auto it = interned_.find(key);
    if (it != interned_.end())
        return it->second;
    TypeDesc *a = make(TypeKind::Array);
    a->elem_ = elem;
    a->count_ = n;
    a->size_ = elem->size() * n;
    a->sealed_ = true;
    interned_[key] = a;
    return a;
}

TypeDesc *TypeUniverse::begin_record(TypeKind kind, const std::string &tag) {
    if (kind != TypeKind::Struct && kind != TypeKind::Class && kind != TypeKind::Union)
        throw Error("begin_record expects struct, class or union");
    if (!tag.empty()) {
        if (tags_.count(tag) || maybe_fundamental(tag))
            throw Error("redefinition of type '" + tag + "'");
    }
    frozen_fundamentals_ = true;
    TypeDesc *r = make(kind);
    r->tag_ = tag;
    if (!tag.empty())
        tags_[tag] = r;
    return r;
}

TypeRef TypeUniverse::finish_record(TypeDesc *rec, const std::vector<MemberDecl> &members,
                                    std::optional<uint64_t> explicit_size) {
    if (rec->sealed_)
        throw Error("record '" + rec->display() + "' is already sealed");
    if (members.empty())
        throw Error("record '" + rec->display() + "' has no members");

    bool is_union = rec->kind_ == TypeKind::Union;
    size_t explicit_count = 0;
    for (const MemberDecl &m : members)
        if (m.offset)
            ++explicit_count;
    if (explicit_count != 0 && explicit_count != members.size())
        throw Error("record '" + rec->display() + "': mix of explicit and natural offsets");
    bool explicit_layout = explicit_count != 0;

    std::vector<Field> fields;
    fields.reserve(members.size());
    uint64_t cursor = 0;
    for (size_t i = 0; i < members.size(); ++i) {
        const MemberDecl &m = members[i];
        if (!m.type)
            throw Error("member '" + m.name + "' has no type");
        if (m.type->kind() == TypeKind::Free)
            throw Error("member '" + m.name + "' cannot have type FREE");
        if (m.type->kind() == TypeKind::Fundamental && m.type->size() == 0)
            throw Error("member '" + m.name + "' cannot have type void");
        if (m.type->is_record() && !m.type->sealed())
            throw Error("member '" + m.name + "' has incomplete type '" + m.type->display() + "'");
        if (m.type->is_record() && m.type->fam())
            throw Error("member '" + m.name + "' embeds a record with a flexible member");
        if (m.is_fam) {
            if (is_union)
                throw Error("flexible member '" + m.name + "' in a union");
            if (i + 1 != members.size())
                throw Error("flexible member '" + m.name + "' must be the last member");
            if (members.size() < 2)
                throw Error("flexible member '" + m.name + "' needs a preceding member");
        }
        for (const Field &prev : fields)
            if (prev.name == m.name)
                throw Error("duplicate member '" + m.name + "'");

        Field f;
        f.name = m.name;
        f.type = m.is_fam ? array_of(m.type, 1) : m.type;
        f.is_base = m.is_base;
        f.is_fam = m.is_fam;
        if (is_union) {
            if (m.offset && *m.offset != 0)
                throw Error("union member '" + m.name + "' must be at offset 0");
            f.offset = 0;
        } else if (explicit_layout) {
            f.offset = *m.offset;
        } else {
            f.offset = round_up(cursor, align_of(f.type));
            cursor = f.offset + f.type->size();
        }
        fields.push_back(std::move(f));
    }

    uint64_t max_end = 0;
    for (const Field &f : fields)
        max_end = std::max(max_end, f.offset + f.type->size());

    uint64_t size;
    if (explicit_size) {
        if (*explicit_size < max_end)
            throw Error("record '" + rec->display() + "': declared size " + std::to_string(*explicit_size) +
                        " smaller than member extent " + std::to_string(max_end));
        size = *explicit_size;
    } else if (explicit_layout || is_union) {
        size = is_union ? round_up(max_end, [&] {
            uint64_t a = 1;
            for (const Field &f : fields)
                a = std::max(a, align_of(f.type));
            return a;
        }()) : max_end;
    } else {
        uint64_t a = 1;
        for (const Field &f : fields)
            a = std::max(a, align_of(f.type));
        size = round_up(max_end, a);
    }
    if (size == 0)
        throw Error("record '" + rec->display() + "' has size 0");

    if (!is_union) {
        std::vector<const Field *> sorted;
        for (const Field &f : fields)
            sorted.push_back(&f);
        std::sort(sorted.begin(), sorted.end(),
                  [](const Field *a, const Field *b) { return a->offset < b->offset; });
        for (size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i - 1]->offset + sorted[i - 1]->type->size() > sorted[i]->offset)
                throw Error("record '" + rec->display() + "': members '" + sorted[i - 1]->name + "' and '" +
                            sorted[i]->name + "' overlap");
    }

    rec->fields_ = std::move(fields);
    rec->size_ = size;
    for (size_t i = 0; i < rec->fields_.size(); ++i)
        if (rec->fields_[i].is_fam)
            rec->fam_index_ = static_cast<int>(i);
    rec->sealed_ = true;

    // Anonymous records intern structurally: two identical bodies are one type.
    if (rec->tag_.empty()) {
        std::string key = "anon:" + std::to_string(static_cast<int>(rec->kind_)) + ":" + std::to_string(rec->size_);
        for (const Field &f : rec->fields_)
            key += ";" + f.name + ":" + std::to_string(f.type->id()) + "@" + std::to_string(f.offset) +
                   (f.is_fam ? "~" : "") + (f.is_base ? "^" : "");
        auto it = interned_.find(key);
        if (it != interned_.end()) {
            order_.erase(std::find(order_.begin(), order_.end(), rec));
            return it->second;
        }
        interned_[key] = rec;
    }
    return rec;
}

TypeRef TypeUniverse::record(TypeKind kind, const std::string &tag, const std::vector<MemberDecl> &members,
                             std::optional<uint64_t> explicit_size) {
    return finish_record(begin_record(kind, tag), members, explicit_size);
}

TypeRef TypeUniverse::find_tag(std::string_view tag) const {
    auto it = tags_.find(std::string(tag));
    return it == tags_.end() ? nullptr : it->second;
}

} // namespace etsan
