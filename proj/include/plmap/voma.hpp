#pragma once

// Volumetric map: keyframe depth images are backprojected into clouds with
// normals and fused into an octree whose leaves keep running sums, so that
// every cell reports the exact mean of the points that fell into it.

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "plmap/camera.hpp"
#include "plmap/ids.hpp"
#include "plmap/lie.hpp"

namespace plmap {

using Rgb = std::array<std::uint8_t, 3>;

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depths;  // row-major; NaN (or <= 0) marks missing
  std::vector<Rgb> colors;     // row-major, empty when the image is gray

  static DepthImage Create(int width, int height);

  bool Valid(int u, int v) const;
  double depth(int u, int v) const { return depths[Index(u, v)]; }
  void set_depth(int u, int v, double d) { depths[Index(u, v)] = d; }
  std::size_t Index(int u, int v) const {
    return static_cast<std::size_t>(v) * width + u;
  }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  std::vector<Vec3> normals;  // empty or parallel to points

  std::size_t size() const { return points.size(); }
  bool HasNormals() const { return !normals.empty(); }
  /// Throws DomainError on mismatched array lengths or non-unit normals.
  void Validate() const;
};

/// One camera-frame point per valid pixel, row-major order. Pixels of a gray
/// image get color (0, 0, 0).
PointCloud backproject_depth_image(const DepthImage& image,
                                   const CameraIntrinsics& cam);

/// Per-pixel normals from the four triangles spanned by the center and its
/// 4-connected neighbors. Summing the raw cross products weights each
/// triangle by its area. Oriented so that n . X < 0. Border pixels and
/// pixels missing any neighbor get no normal.
std::vector<std::optional<Vec3>> estimate_normals(const DepthImage& image,
                                                  const CameraIntrinsics& cam);

/// Backprojection restricted to pixels that received a normal, with normals.
PointCloud keyframe_cloud(const DepthImage& image, const CameraIntrinsics& cam);

// ---------------------------------------------------------------------------
// Octree

struct VoxelSums {
  Vec3 position = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  std::int64_t count = 0;
  std::int64_t normal_count = 0;
};

using VoxelKey = std::array<std::int64_t, 3>;

/// Sparse pointer octree over integer voxel keys floor(x / resolution). Cells
/// are half-open [k r, (k + 1) r) and the grid is anchored at the world
/// origin. The root spans keys [-2^(L-1), 2^(L-1)) per axis and doubles on
/// demand, so the tree shape depends only on the set of stored keys.
class OctreeMap {
 public:
  explicit OctreeMap(double resolution);
  OctreeMap(const OctreeMap& other);
  OctreeMap& operator=(const OctreeMap& other);
  OctreeMap(OctreeMap&&) noexcept = default;
  OctreeMap& operator=(OctreeMap&&) noexcept = default;
  ~OctreeMap();

  double resolution() const { return resolution_; }
  std::size_t cell_count() const { return cells_; }
  int levels() const { return levels_; }

  VoxelKey KeyOf(const Vec3& p) const;
  const VoxelSums* Find(const VoxelKey& key) const;
  /// Returns the cell, creating it when absent.
  VoxelSums& Touch(const VoxelKey& key, bool* created = nullptr);

  /// Visits cells in child-index order from the root; equal key sets give
  /// equal visiting orders.
  void ForEach(
      const std::function<void(const VoxelKey&, const VoxelSums&)>& fn) const;

  /// FNV-1a over keys and sums in traversal order.
  std::uint64_t Hash() const;

 private:
  struct Node;
  bool Contains(const VoxelKey& key) const;
  void Grow();

  double resolution_;
  std::unique_ptr<Node> root_;
  int levels_ = 1;
  std::size_t cells_ = 0;
};

struct IntegrationReport {
  std::size_t new_cells = 0;
  std::size_t updated_cells = 0;
};

/// pose is the world -> camera transform of the source keyframe.
IntegrationReport integrate_cloud(OctreeMap& map, const PointCloud& cloud,
                                  const Se3Pose& pose);

/// Centroids, colors rounded half up, normalized mean normals. Normals are
/// emitted only when every cell has a nonzero normal sum.
PointCloud extract_global_cloud(const OctreeMap& map);

/// Largest per-component difference of sums over the union of cells; +inf
/// when the key sets or counts differ.
double max_cell_difference(const OctreeMap& a, const OctreeMap& b);

/// Keyframe clouds as captured, in camera frame.
using KeyframeArchive = std::map<KeyframeId, PointCloud>;

/// Fresh map integrating every archived cloud with its new pose, ascending
/// keyframe id. Throws DomainError when a pose has no archived cloud.
OctreeMap rebuild_on_adjustment(double resolution,
                                const KeyframeArchive& archive,
                                const std::map<KeyframeId, Se3Pose>& poses);

// ---------------------------------------------------------------------------
// Producer / consumer integration

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw DomainError("queue capacity must be positive");
  }

  /// Blocks while full. Returns false once the queue is closed.
  bool Push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks until at least one item is queued or the queue is closed, then
  /// takes up to max_items. Empty result means closed and drained.
  std::vector<T> PopBatch(std::size_t max_items) {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    std::vector<T> out;
    while (!items_.empty() && out.size() < max_items) {
      out.push_back(std::move(items_.front()));
      items_.pop_front();
    }
    not_full_.notify_all();
    return out;
  }

  void Close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

struct KeyframePacket {
  KeyframeId id;
  Se3Pose pose;
  PointCloud cloud;  // camera frame
};

/// Owns the octree and one consumer thread that integrates queued keyframes
/// batch_size at a time, in submission order. Keyframe clouds are archived
/// for later rebuilds.
class VomaIntegrator {
 public:
  VomaIntegrator(double resolution, std::size_t queue_capacity,
                 std::size_t batch_size);
  ~VomaIntegrator();
  VomaIntegrator(const VomaIntegrator&) = delete;
  VomaIntegrator& operator=(const VomaIntegrator&) = delete;

  void Submit(KeyframePacket packet);
  /// Closes the queue and waits for the consumer to drain it.
  void Finish();

  /// Copy of the global cloud between batch integrations.
  PointCloud Snapshot() const;
  /// Valid after Finish().
  const OctreeMap& map() const { return map_; }
  const KeyframeArchive& archive() const { return archive_; }
  std::size_t batches() const;

 private:
  void Run();

  OctreeMap map_;
  KeyframeArchive archive_;
  BoundedQueue<KeyframePacket> queue_;
  std::size_t batch_size_;
  std::size_t batches_ = 0;
  mutable std::mutex map_mu_;
  std::thread consumer_;
};

// ---------------------------------------------------------------------------
// Export. Columns x y z r g b nx ny nz; reals in %.9g; missing normals as 0.

void write_ply(std::ostream& os, const PointCloud& cloud);
void write_csv(std::ostream& os, const PointCloud& cloud);

}  // namespace plmap
