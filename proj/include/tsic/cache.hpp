#pragma once

#include <cstdint>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsic/model.hpp"

// Image cache eviction policies. All variants share the per-node frequency
// records (LfuMemory); they differ in the eviction priority and in what
// triggers eviction:
//   SizeWeighted   - priority f*z, evict when storage is short (ADP)
//   FrequencyOnly  - priority f,   evict when storage is short (ADP-FRQ)
//   FixedSlots     - priority f,   record count capped at K entries
//                    (storage shortfalls still force evictions)
namespace tsic::cache {

enum class Variant { SizeWeighted, FrequencyOnly, FixedSlots };

std::string variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);

// h = f * z  (eviction priority of a record under SizeWeighted)
inline double priority(double frequency, double size_mb) {
  return frequency * size_mb;
}

// Per-node record list, oldest-touched first. Ties in eviction priority
// fall to the least recently recorded entry.
class LfuMemory {
 public:
  struct Record {
    ImageId image = 0;
    std::int64_t frequency = 0;
  };

  bool contains(ImageId m) const { return index_.count(m) != 0; }
  std::size_t size() const { return records_.size(); }
  std::int64_t frequency(ImageId m) const;

  void insert(ImageId m);            // new record, frequency 0
  void touch(ImageId m);             // frequency += 1, refresh recency
  void erase(ImageId m);             // drop record entirely
  // Oldest-first iteration order.
  std::vector<Record> snapshot() const;

 private:
  std::list<Record> records_;  // front = least recently recorded/touched
  std::unordered_map<ImageId, std::list<Record>::iterator> index_;
};

struct EvictionResult {
  bool ok = false;                 // false: impossible even with empty cache
  std::vector<ImageId> evicted;    // in eviction order
};

// One cache manager per simulated cluster; owns the LFU memory of every
// node and applies evictions/pulls against the NodeState bookkeeping.
class CacheManager {
 public:
  CacheManager(Variant variant, std::size_t fixed_slots,
               std::vector<Image> images, std::size_t num_nodes);

  Variant variant() const { return variant_; }
  const LfuMemory& memory(NodeId n) const { return memories_[std::size_t(n)]; }
  const Image& image(ImageId m) const { return images_[std::size_t(m)]; }

  // Registers an image that is already on the node (initial placement).
  void seed_image(NodeState& node, ImageId m);

  // argmin of the variant's priority over the node's cached images,
  // skipping `exclude`. Throws if nothing is evictable.
  ImageId select_victim(const NodeState& node,
                        std::optional<ImageId> exclude = std::nullopt) const;

  // Frees storage until node.storage_available() >= required_mb, evicting
  // in priority order. Returns ok=false (no mutation beyond completed
  // evictions is needed: the check is done up front) when required_mb can
  // never fit.
  EvictionResult make_room(NodeState& node, double required_mb,
                           std::optional<ImageId> exclude = std::nullopt);

  // Adaptive caching update for one incoming image: no-op if present,
  // otherwise evict until it fits, then pull. FixedSlots additionally
  // enforces its record cap.
  EvictionResult ensure_capacity(NodeState& node, const Image& incoming);

  // frequency += 1 for an image present on the node.
  void touch(NodeId n, ImageId m);

 private:
  double record_priority(const LfuMemory::Record& r) const;
  void evict(NodeState& node, ImageId m);

  Variant variant_;
  std::size_t fixed_slots_;
  std::vector<Image> images_;
  std::vector<LfuMemory> memories_;
};

}  // namespace tsic::cache
