#include "tsic/cache.hpp"

#include <limits>
#include <stdexcept>

namespace tsic::cache {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::SizeWeighted: return "ADP";
    case Variant::FrequencyOnly: return "ADP-FRQ";
    case Variant::FixedSlots: return "LFU-FIXED";
  }
  return "?";
}

std::optional<Variant> variant_from_name(const std::string& name) {
  if (name == "ADP") return Variant::SizeWeighted;
  if (name == "ADP-FRQ") return Variant::FrequencyOnly;
  if (name == "LFU-FIXED") return Variant::FixedSlots;
  return std::nullopt;
}

std::int64_t LfuMemory::frequency(ImageId m) const {
  auto it = index_.find(m);
  if (it == index_.end()) throw std::out_of_range("no LFU record for image");
  return it->second->frequency;
}

void LfuMemory::insert(ImageId m) {
  if (index_.count(m)) throw std::logic_error("duplicate LFU record");
  records_.push_back(Record{m, 0});
  index_[m] = std::prev(records_.end());
}

void LfuMemory::touch(ImageId m) {
  auto it = index_.find(m);
  if (it == index_.end())
    throw std::logic_error("touch on image without LFU record");
  it->second->frequency += 1;
  records_.splice(records_.end(), records_, it->second);
}

void LfuMemory::erase(ImageId m) {
  auto it = index_.find(m);
  if (it == index_.end()) throw std::logic_error("erase on missing record");
  records_.erase(it->second);
  index_.erase(it);
}

std::vector<LfuMemory::Record> LfuMemory::snapshot() const {
  return {records_.begin(), records_.end()};
}

CacheManager::CacheManager(Variant variant, std::size_t fixed_slots,
                           std::vector<Image> images, std::size_t num_nodes)
    : variant_(variant),
      fixed_slots_(fixed_slots),
      images_(std::move(images)),
      memories_(num_nodes) {
  if (variant_ == Variant::FixedSlots && fixed_slots_ == 0)
    throw std::invalid_argument("FixedSlots cache needs a positive cap");
}

double CacheManager::record_priority(const LfuMemory::Record& r) const {
  if (variant_ == Variant::SizeWeighted)
    return priority(double(r.frequency), images_[std::size_t(r.image)].size_mb);
  return double(r.frequency);
}

void CacheManager::seed_image(NodeState& node, ImageId m) {
  node.cache_image(images_[std::size_t(m)]);
  memories_[std::size_t(node.id())].insert(m);
}

ImageId CacheManager::select_victim(const NodeState& node,
                                    std::optional<ImageId> exclude) const {
  const auto& mem = memories_[std::size_t(node.id())];
  double best = std::numeric_limits<double>::infinity();
  ImageId victim = -1;
  // Oldest-first scan with strict less keeps the least recently recorded
  // entry on priority ties.
  for (const auto& rec : mem.snapshot()) {
    if (exclude && rec.image == *exclude) continue;
    double h = record_priority(rec);
    if (h < best) {
      best = h;
      victim = rec.image;
    }
  }
  if (victim < 0) throw std::runtime_error("no evictable image on node");
  return victim;
}

void CacheManager::evict(NodeState& node, ImageId m) {
  node.evict_image(images_[std::size_t(m)]);
  memories_[std::size_t(node.id())].erase(m);
}

EvictionResult CacheManager::make_room(NodeState& node, double required_mb,
                                       std::optional<ImageId> exclude) {
  EvictionResult result;
  double reachable = node.usable_image_storage_mb();
  if (exclude && node.has_image(*exclude))
    reachable -= images_[std::size_t(*exclude)].size_mb;
  if (required_mb > reachable) return result;  // ok already false

  while (node.storage_available_mb() < required_mb) {
    ImageId victim = select_victim(node, exclude);
    evict(node, victim);
    result.evicted.push_back(victim);
  }
  result.ok = true;
  return result;
}

EvictionResult CacheManager::ensure_capacity(NodeState& node,
                                             const Image& incoming) {
  if (node.has_image(incoming.id)) return EvictionResult{true, {}};

  auto& mem = memories_[std::size_t(node.id())];
  EvictionResult result = make_room(node, incoming.size_mb);
  if (!result.ok) return result;

  if (variant_ == Variant::FixedSlots) {
    while (mem.size() >= fixed_slots_) {
      ImageId victim = select_victim(node);
      evict(node, victim);
      result.evicted.push_back(victim);
    }
  }

  node.cache_image(incoming);
  mem.insert(incoming.id);
  return result;
}

void CacheManager::touch(NodeId n, ImageId m) {
  memories_[std::size_t(n)].touch(m);
}

}  // namespace tsic::cache
