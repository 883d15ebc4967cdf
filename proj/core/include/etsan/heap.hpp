#pragma once

// Simulated 64-bit address space with a low-fat style allocator. Region i
// serves exactly one power-of-two size class, so the base and size of any
// managed address are pure arithmetic (no per-allocation lookup). Oversize
// requests fall back to a bump-allocated legacy region whose addresses
// carry no base/size. Backing memory is a sparse, little-endian byte store.

#include "etsan/types.hpp"

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace etsan {

// Interpreter-level fault (unmapped access, exhaustion during a run):
// distinct from sanitizer diagnostics, which are reported, never thrown.
class MemFault : public Error {
  public:
    using Error::Error;
};

struct SpaceConfig {
    uint64_t region_size = 1ull << 32;
    std::vector<uint64_t> classes = default_classes(); // ascending powers of two
    uint64_t legacy_base = 0;                          // 0 = first region past the classes
    uint64_t seed = 0;

    static std::vector<uint64_t> default_classes(); // 16 B .. 1 MiB
    void validate() const;
};

class AddressSpace {
  public:
    explicit AddressSpace(SpaceConfig cfg = SpaceConfig{});

    uint64_t lf_alloc(uint64_t size); // throws MemFault when a region is exhausted
    void lf_free(uint64_t addr);      // throws Error on legacy, non-base or dead address

    std::optional<uint64_t> lf_base(uint64_t addr) const; // nullopt: legacy
    uint64_t lf_size(uint64_t addr) const;                // UINT64_MAX for legacy
    bool is_legacy(uint64_t addr) const { return !region_class(addr).has_value(); }
    bool slot_live(uint64_t base) const { return live_.count(base) != 0; }

    // width in {1,2,4,8}; throws MemFault on unmapped addresses
    uint64_t mem_load(uint64_t addr, unsigned width);
    void mem_store(uint64_t addr, unsigned width, uint64_t value);
    bool is_mapped(uint64_t addr, uint64_t width) const;

    uint64_t stack_alloc(uint64_t frame, uint64_t size);
    void stack_release(uint64_t frame); // frees the frame's objects, newest first
    const std::vector<uint64_t> *frame_objects(uint64_t frame) const;

    uint64_t memory_digest() const; // FNV-1a over mapped non-zero content
    const SpaceConfig &config() const { return cfg_; }
    uint64_t legacy_cursor() const { return legacy_cursor_; }

  private:
    std::optional<size_t> region_class(uint64_t addr) const; // class index of addr's region
    void zero_range(uint64_t addr, uint64_t len);
    uint8_t *page_for(uint64_t addr, bool create);

    static constexpr uint64_t kPageSize = 4096;

    SpaceConfig cfg_;
    uint64_t legacy_cursor_ = 0;
    std::vector<uint64_t> bump_;      // next slot index per class
    std::vector<uint64_t> capacity_;  // slots per region
    std::vector<std::vector<uint64_t>> free_lists_;
    std::unordered_set<uint64_t> live_;
    std::unordered_map<uint64_t, std::vector<uint8_t>> pages_;
    std::unordered_map<uint64_t, std::vector<uint64_t>> frames_;
};

} // namespace etsan
