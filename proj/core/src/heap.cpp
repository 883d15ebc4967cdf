#include "etsan/heap.hpp"

#include <algorithm>
#include <random>

namespace etsan {

std::vector<uint64_t> SpaceConfig::default_classes() {
    std::vector<uint64_t> out;
    for (uint64_t c = 16; c <= (1ull << 20); c <<= 1)
        out.push_back(c);
    return out;
}

void SpaceConfig::validate() const {
    if (region_size == 0 || (region_size & (region_size - 1)) != 0)
        throw Error("region_size must be a power of two");
    if (classes.empty())
        throw Error("at least one size class is required");
    uint64_t prev = 0;
    for (uint64_t c : classes) {
        if (c < 16 || (c & (c - 1)) != 0)
            throw Error("size classes must be powers of two, at least 16");
        if (c <= prev)
            throw Error("size classes must be strictly ascending");
        if (c > region_size)
            throw Error("size class exceeds region_size");
        prev = c;
    }
    uint64_t managed_end = region_size * (classes.size() + 1);
    if (legacy_base != 0 && legacy_base < managed_end)
        throw Error("legacy_base overlaps the managed regions");
}

AddressSpace::AddressSpace(SpaceConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.legacy_base == 0)
        cfg_.legacy_base = cfg_.region_size * (cfg_.classes.size() + 1);
    legacy_cursor_ = cfg_.legacy_base;
    free_lists_.resize(cfg_.classes.size());
    bump_.resize(cfg_.classes.size());
    capacity_.resize(cfg_.classes.size());
    std::mt19937_64 rng(cfg_.seed);
    for (size_t i = 0; i < cfg_.classes.size(); ++i) {
        capacity_[i] = cfg_.region_size / cfg_.classes[i];
        // Seeded start offset: different seeds place allocations at
        // different (deterministic) addresses without losing capacity.
        bump_[i] = capacity_[i] > 8 ? rng() % (capacity_[i] / 8) : 0;
    }
}

std::optional<size_t> AddressSpace::region_class(uint64_t addr) const {
    uint64_t region = addr / cfg_.region_size;
    if (region >= 1 && region <= cfg_.classes.size())
        return region - 1;
    return std::nullopt;
}

uint64_t AddressSpace::lf_alloc(uint64_t size) {
    if (size == 0)
        size = 1;
    if (size > cfg_.classes.back()) {
        // Oversize requests go to the legacy region.
        uint64_t addr = legacy_cursor_;
        legacy_cursor_ += (size + 15) / 16 * 16;
        return addr;
    }
    size_t cls = 0;
    while (cfg_.classes[cls] < size)
        ++cls;
    uint64_t base;
    if (!free_lists_[cls].empty()) {
        base = free_lists_[cls].back();
        free_lists_[cls].pop_back();
    } else if (bump_[cls] < capacity_[cls]) {
        base = cfg_.region_size * (cls + 1) + bump_[cls] * cfg_.classes[cls];
        ++bump_[cls];
    } else {
        throw MemFault("size class " + std::to_string(cfg_.classes[cls]) + " exhausted");
    }
    zero_range(base, cfg_.classes[cls]);
    live_.insert(base);
    return base;
}

void AddressSpace::lf_free(uint64_t addr) {
    auto cls = region_class(addr);
    if (!cls)
        throw Error("lf_free of a legacy address");
    uint64_t base = addr & ~(cfg_.classes[*cls] - 1);
    if (base != addr)
        throw Error("lf_free of a non-base address");
    if (!live_.count(base))
        throw Error("lf_free of a dead slot");
    live_.erase(base);
    free_lists_[*cls].push_back(base); // slot bytes stay intact until reuse
}

std::optional<uint64_t> AddressSpace::lf_base(uint64_t addr) const {
    auto cls = region_class(addr);
    if (!cls)
        return std::nullopt;
    return addr & ~(cfg_.classes[*cls] - 1);
}

uint64_t AddressSpace::lf_size(uint64_t addr) const {
    auto cls = region_class(addr);
    return cls ? cfg_.classes[*cls] : UINT64_MAX;
}

bool AddressSpace::is_mapped(uint64_t addr, uint64_t width) const {
    uint64_t end = addr + width;
    if (end < addr)
        return false;
    if (region_class(addr)) // managed regions are fully backed
        return width == 0 || region_class(end - 1).has_value();
    return addr >= cfg_.legacy_base && end <= legacy_cursor_;
}

uint8_t *AddressSpace::page_for(uint64_t addr, bool create) {
    uint64_t page = addr / kPageSize;
    auto it = pages_.find(page);
    if (it == pages_.end()) {
        if (!create)
            return nullptr;
        it = pages_.emplace(page, std::vector<uint8_t>(kPageSize, 0)).first;
    }
    return it->second.data();
}

void AddressSpace::zero_range(uint64_t addr, uint64_t len) {
    uint64_t end = addr + len;
    while (addr < end) {
        uint64_t page_end = (addr / kPageSize + 1) * kPageSize;
        uint64_t span = std::min(end, page_end) - addr;
        if (uint8_t *p = page_for(addr, false)) // absent pages read as zero already
            std::fill(p + addr % kPageSize, p + addr % kPageSize + span, 0);
        addr += span;
    }
}

uint64_t AddressSpace::mem_load(uint64_t addr, unsigned width) {
    if (!is_mapped(addr, width))
        throw MemFault("load of unmapped address " + std::to_string(addr));
    uint64_t v = 0;
    for (unsigned i = 0; i < width; ++i) {
        const uint8_t *p = page_for(addr + i, false);
        uint8_t byte = p ? p[(addr + i) % kPageSize] : 0;
        v |= static_cast<uint64_t>(byte) << (8 * i);
    }
    return v;
}

void AddressSpace::mem_store(uint64_t addr, unsigned width, uint64_t value) {
    if (!is_mapped(addr, width))
        throw MemFault("store to unmapped address " + std::to_string(addr));
    for (unsigned i = 0; i < width; ++i)
        page_for(addr + i, true)[(addr + i) % kPageSize] = static_cast<uint8_t>(value >> (8 * i));
}

uint64_t AddressSpace::stack_alloc(uint64_t frame, uint64_t size) {
    uint64_t addr = lf_alloc(size);
    frames_[frame].push_back(addr);
    return addr;
}

void AddressSpace::stack_release(uint64_t frame) {
    auto it = frames_.find(frame);
    if (it == frames_.end())
        return;
    for (auto rit = it->second.rbegin(); rit != it->second.rend(); ++rit)
        lf_free(*rit);
    frames_.erase(it);
}

const std::vector<uint64_t> *AddressSpace::frame_objects(uint64_t frame) const {
    auto it = frames_.find(frame);
    return it == frames_.end() ? nullptr : &it->second;
}

uint64_t AddressSpace::memory_digest() const {
    std::vector<uint64_t> keys;
    keys.reserve(pages_.size());
    for (const auto &[page, bytes] : pages_) {
        bool nonzero = std::any_of(bytes.begin(), bytes.end(), [](uint8_t b) { return b != 0; });
        if (nonzero)
            keys.push_back(page);
    }
    std::sort(keys.begin(), keys.end());
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](uint8_t b) {
        h ^= b;
        h *= 1099511628211ull;
    };
    for (uint64_t page : keys) {
        for (int i = 0; i < 8; ++i)
            mix(static_cast<uint8_t>(page >> (8 * i)));
        for (uint8_t b : pages_.at(page))
            mix(b);
    }
    return h;
}

} // namespace etsan
