#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

// Domain types for the edge cluster: container images, services, nodes,
// tasks, and the per-task delay breakdown, plus the admission predicates
// over bandwidth, compute, and storage.
namespace tsic {

using ImageId = int;
using ServiceId = int;
using NodeId = int;
using TaskId = std::int64_t;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct Image {
  ImageId id = 0;
  double size_mb = 0.0;
};

struct Service {
  ServiceId id = 0;
  ImageId image_id = 0;      // the image this service runs on
  double start_time_s = 0.0; // container start latency
  double work_units = 0.0;   // abstract compute demand per task
};

struct Task {
  TaskId id = 0;
  ServiceId service_id = 0;
  double data_size_mb = 0.0;
  Point2 location;
  double cpu_demand = 0.0;
  double mem_demand_mb = 0.0;
  double bandwidth_demand_mbps = 0.0;
  std::int64_t arrival_slot = 0;
};

struct DelayRecord {
  double comm_s = 0.0;
  double wait_s = 0.0;
  double comp_s = 0.0;
  double total_s = 0.0;  // always comm + wait + comp
};

inline DelayRecord make_delay(double comm, double wait, double comp) {
  return DelayRecord{comm, wait, comp, comm + wait + comp};
}

// Per-node capacities plus live availability. Storage accounting couples
// cached images and resident task data:
//   storage_available = storage_capacity - sum(cached image sizes)
//                                        - sum(resident task data)
class NodeState {
 public:
  NodeState() = default;
  NodeState(NodeId id, Point2 location, double cpu, double mem_mb,
            double storage_mb, double bandwidth_mbps,
            double cloud_bandwidth_mbps, std::size_t num_images);

  NodeId id() const { return id_; }
  const Point2& location() const { return location_; }

  double cpu_capacity() const { return cpu_capacity_; }
  double cpu_available() const { return cpu_available_; }
  double mem_capacity_mb() const { return mem_capacity_mb_; }
  double mem_available_mb() const { return mem_available_mb_; }
  double storage_capacity_mb() const { return storage_capacity_mb_; }
  double storage_available_mb() const { return storage_available_mb_; }
  double bandwidth_capacity_mbps() const { return bandwidth_capacity_mbps_; }
  double bandwidth_available_mbps() const { return bandwidth_available_mbps_; }
  double cloud_bandwidth_mbps() const { return cloud_bandwidth_mbps_; }

  bool has_image(ImageId m) const { return cached_images_[std::size_t(m)]; }
  const std::vector<std::uint8_t>& cached_images() const {
    return cached_images_;
  }
  double cached_images_total_mb() const { return cached_total_mb_; }
  double resident_task_data_mb() const { return resident_data_mb_; }

  // Storage a cached image set may occupy: capacity minus resident task
  // data. Task data always has priority over the cache.
  double usable_image_storage_mb() const {
    return storage_capacity_mb_ - resident_data_mb_;
  }

  // Toggles presence and moves storage by exactly the image size.
  void cache_image(const Image& image);
  void evict_image(const Image& image);

  // Reserves cpu/mem/bandwidth and the task's data footprint.
  void admit_task(const Task& task);
  void release_task(const Task& task);

 private:
  NodeId id_ = 0;
  Point2 location_;
  double cpu_capacity_ = 0.0, cpu_available_ = 0.0;
  double mem_capacity_mb_ = 0.0, mem_available_mb_ = 0.0;
  double storage_capacity_mb_ = 0.0, storage_available_mb_ = 0.0;
  double bandwidth_capacity_mbps_ = 0.0, bandwidth_available_mbps_ = 0.0;
  double cloud_bandwidth_mbps_ = 0.0;
  double cached_total_mb_ = 0.0;
  double resident_data_mb_ = 0.0;
  std::vector<std::uint8_t> cached_images_;
};

// Admission predicates.
bool check_bandwidth(const NodeState& node, const Task& task);
bool check_compute(const NodeState& node, const Task& task);
bool check_storage(const NodeState& node, const Task& task,
                   const std::optional<Image>& pending_image);

}  // namespace tsic
