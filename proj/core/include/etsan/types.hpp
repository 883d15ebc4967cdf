#pragma once

// The C-like type algebra: fundamentals, pointers, one generic function
// type, sized arrays, records (struct/class/union, with lowered bases and
// flexible array members), and the FREE pseudo-type used for deallocated
// storage. Types are interned in a TypeUniverse; equality is pointer
// equality (records by tag, anonymous records structurally).

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace etsan {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class TypeKind { Fundamental, AddressOf, Function, Array, Struct, Class, Union, Free };

class TypeDesc;
class TypeUniverse;
using TypeRef = const TypeDesc *;

struct Field {
    std::string name;
    TypeRef type = nullptr;
    uint64_t offset = 0;
    bool is_base = false; // lowered base class of a Class record
    bool is_fam = false;  // flexible array member, stored as elem[1]
};

class TypeDesc {
  public:
    TypeKind kind() const { return kind_; }
    uint64_t size() const;
    const std::string &tag() const { return tag_; } // record tag / fundamental name; "" if anonymous
    uint32_t id() const { return id_; }
    bool sealed() const { return sealed_; }

    TypeRef target() const;                 // AddressOf
    TypeRef elem() const;                   // Array
    uint64_t count() const;                 // Array
    const std::vector<Field> &fields() const;
    const Field *fam() const;               // FAM field of a record, or nullptr
    bool is_record() const {
        return kind_ == TypeKind::Struct || kind_ == TypeKind::Class || kind_ == TypeKind::Union;
    }

    std::string display() const;

  private:
    friend class TypeUniverse;
    TypeDesc() = default;

    TypeKind kind_ = TypeKind::Fundamental;
    uint32_t id_ = 0;
    std::string tag_;
    uint64_t size_ = 0;
    uint64_t align_ = 1;
    bool sealed_ = false;

    TypeRef target_ = nullptr;  // AddressOf
    TypeRef elem_ = nullptr;    // Array
    uint64_t count_ = 0;        // Array
    std::vector<Field> fields_; // records
    int fam_index_ = -1;        // index into fields_, or -1
};

uint64_t sizeof_type(TypeRef t);
uint64_t align_of(TypeRef t);
uint64_t offset_of(TypeRef rec, std::string_view member);
const Field *find_field(TypeRef rec, std::string_view member);
inline bool types_equal(TypeRef a, TypeRef b) { return a == b; }

class TypeUniverse {
  public:
    TypeUniverse();
    TypeUniverse(const TypeUniverse &) = delete;
    TypeUniverse &operator=(const TypeUniverse &) = delete;

    // Fundamental sizes may be adjusted before any dependent type exists.
    void set_fundamental_size(std::string_view name, uint64_t size);
    TypeRef fundamental(std::string_view name) const; // throws on unknown name
    TypeRef maybe_fundamental(std::string_view name) const;

    TypeRef address_of(TypeRef t);
    TypeRef function_type();
    TypeRef array_of(TypeRef elem, uint64_t n);
    TypeRef free_type() const { return free_; }

    struct MemberDecl {
        std::string name;
        TypeRef type = nullptr;
        std::optional<uint64_t> offset; // explicit layout
        bool is_base = false;
        bool is_fam = false; // declared elem[]; `type` is the element type
    };

    // Named records may reference themselves through pointers, so record
    // construction is split: begin registers the tag, finish lays the
    // record out, validates and seals it.
    TypeDesc *begin_record(TypeKind kind, const std::string &tag);
    TypeRef finish_record(TypeDesc *rec, const std::vector<MemberDecl> &members,
                          std::optional<uint64_t> explicit_size);
    TypeRef record(TypeKind kind, const std::string &tag, const std::vector<MemberDecl> &members,
                   std::optional<uint64_t> explicit_size = {});

    TypeRef find_tag(std::string_view tag) const; // nullptr if absent
    const std::vector<const TypeDesc *> &all() const { return order_; }

  private:
    TypeDesc *make(TypeKind kind);

    std::vector<std::unique_ptr<TypeDesc>> pool_;
    std::vector<const TypeDesc *> order_;
    std::unordered_map<std::string, TypeDesc *> interned_; // structural key -> type
    std::unordered_map<std::string, TypeDesc *> tags_;
    TypeRef free_ = nullptr;
    TypeRef fn_ = nullptr;
    bool frozen_fundamentals_ = false;
};

} // namespace etsan
