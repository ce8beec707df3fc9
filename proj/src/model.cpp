#include "tsic/model.hpp"

#include <stdexcept>

namespace tsic {

NodeState::NodeState(NodeId id, Point2 location, double cpu, double mem_mb,
                     double storage_mb, double bandwidth_mbps,
                     double cloud_bandwidth_mbps, std::size_t num_images)
    : id_(id),
      location_(location),
      cpu_capacity_(cpu),
      cpu_available_(cpu),
      mem_capacity_mb_(mem_mb),
      mem_available_mb_(mem_mb),
      storage_capacity_mb_(storage_mb),
      storage_available_mb_(storage_mb),
      bandwidth_capacity_mbps_(bandwidth_mbps),
      bandwidth_available_mbps_(bandwidth_mbps),
      cloud_bandwidth_mbps_(cloud_bandwidth_mbps),
      cached_images_(num_images, 0) {
  if (cpu <= 0 || mem_mb <= 0 || storage_mb <= 0 || bandwidth_mbps <= 0 ||
      cloud_bandwidth_mbps <= 0)
    throw std::invalid_argument("node capacities must be positive");
}

void NodeState::cache_image(const Image& image) {
  auto idx = std::size_t(image.id);
  if (idx >= cached_images_.size())
    throw std::out_of_range("image id out of range");
  if (cached_images_[idx]) throw std::logic_error("image already cached");
  cached_images_[idx] = 1;
  cached_total_mb_ += image.size_mb;
  storage_available_mb_ -= image.size_mb;
}

void NodeState::evict_image(const Image& image) {
  auto idx = std::size_t(image.id);
  if (idx >= cached_images_.size())
    throw std::out_of_range("image id out of range");
  if (!cached_images_[idx]) throw std::logic_error("image not cached");
  cached_images_[idx] = 0;
  cached_total_mb_ -= image.size_mb;
  storage_available_mb_ += image.size_mb;
}

void NodeState::admit_task(const Task& task) {
  cpu_available_ -= task.cpu_demand;
  mem_available_mb_ -= task.mem_demand_mb;
  bandwidth_available_mbps_ -= task.bandwidth_demand_mbps;
  resident_data_mb_ += task.data_size_mb;
  storage_available_mb_ -= task.data_size_mb;
}

void NodeState::release_task(const Task& task) {
  cpu_available_ += task.cpu_demand;
  mem_available_mb_ += task.mem_demand_mb;
  bandwidth_available_mbps_ += task.bandwidth_demand_mbps;
  resident_data_mb_ -= task.data_size_mb;
  storage_available_mb_ += task.data_size_mb;
}

bool check_bandwidth(const NodeState& node, const Task& task) {
  return task.bandwidth_demand_mbps <= node.bandwidth_available_mbps();
}

bool check_compute(const NodeState& node, const Task& task) {
  return task.cpu_demand <= node.cpu_available() &&
         task.mem_demand_mb <= node.mem_available_mb();
}

bool check_storage(const NodeState& node, const Task& task,
                   const std::optional<Image>& pending_image) {
  double need = task.data_size_mb;
  if (pending_image) need += pending_image->size_mb;
  return need <= node.storage_available_mb();
}

}  // namespace tsic
