#include "plmap/voma.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <set>

namespace plmap {

DepthImage DepthImage::Create(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw DomainError("depth image dimensions must be positive");
  }
  DepthImage img;
  img.width = width;
  img.height = height;
  img.depths.assign(static_cast<std::size_t>(width) * height,
                    std::numeric_limits<double>::quiet_NaN());
  return img;
}

bool DepthImage::Valid(int u, int v) const {
  if (u < 0 || v < 0 || u >= width || v >= height) return false;
  const double d = depths[Index(u, v)];
  return std::isfinite(d) && d > 0.0;
}

void PointCloud::Validate() const {
  if (colors.size() != points.size()) {
    throw DomainError("point cloud: colors and points differ in length");
  }
  if (!normals.empty()) {
    if (normals.size() != points.size()) {
      throw DomainError("point cloud: normals and points differ in length");
    }
    for (const Vec3& n : normals) {
      if (std::abs(n.norm() - 1.0) > 1e-6) {
        throw DomainError("point cloud: normal is not unit length");
      }
    }
  }
}

namespace {

Rgb PixelColor(const DepthImage& image, std::size_t i) {
  return image.colors.empty() ? Rgb{0, 0, 0} : image.colors[i];
}

}  // namespace

PointCloud backproject_depth_image(const DepthImage& image,
                                   const CameraIntrinsics& cam) {
  PointCloud cloud;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      if (!image.Valid(u, v)) continue;
      cloud.points.push_back(backproject(cam, Vec2(u, v), image.depth(u, v)));
      cloud.colors.push_back(PixelColor(image, image.Index(u, v)));
    }
  }
  return cloud;
}

std::vector<std::optional<Vec3>> estimate_normals(const DepthImage& image,
                                                  const CameraIntrinsics& cam) {
  std::vector<std::optional<Vec3>> out(image.depths.size());
  auto at = [&](int u, int v) {
    return backproject(cam, Vec2(u, v), image.depth(u, v));
  };
  for (int v = 1; v + 1 < image.height; ++v) {
    for (int u = 1; u + 1 < image.width; ++u) {
      if (!image.Valid(u, v) || !image.Valid(u + 1, v) ||
          !image.Valid(u - 1, v) || !image.Valid(u, v + 1) ||
          !image.Valid(u, v - 1)) {
        continue;
      }
      const Vec3 x = at(u, v);
      // Neighbors in rotational order: right, down, left, up.
      const std::array<Vec3, 4> ring{at(u + 1, v) - x, at(u, v + 1) - x,
                                     at(u - 1, v) - x, at(u, v - 1) - x};
      Vec3 n = Vec3::Zero();
      for (int k = 0; k < 4; ++k) n += ring[k].cross(ring[(k + 1) % 4]);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(x) > 0.0) n = -n;
      out[image.Index(u, v)] = n;
    }
  }
  return out;
}

PointCloud keyframe_cloud(const DepthImage& image, const CameraIntrinsics& cam) {
  const auto normals = estimate_normals(image, cam);
  PointCloud cloud;
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const std::size_t i = image.Index(u, v);
      if (!normals[i]) continue;
      cloud.points.push_back(backproject(cam, Vec2(u, v), image.depths[i]));
      cloud.colors.push_back(PixelColor(image, i));
      cloud.normals.push_back(*normals[i]);
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Octree

struct OctreeMap::Node {
  std::array<std::unique_ptr<Node>, 8> child;
  VoxelSums sums;  // used at level 0 only

  std::unique_ptr<Node> Clone() const {
    auto n = std::make_unique<Node>();
    n->sums = sums;
    for (int i = 0; i < 8; ++i) {
      if (child[i]) n->child[i] = child[i]->Clone();
    }
    return n;
  }
};

OctreeMap::OctreeMap(double resolution) : resolution_(resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw DomainError("octree resolution must be positive");
  }
}

OctreeMap::OctreeMap(const OctreeMap& other)
    : resolution_(other.resolution_),
      root_(other.root_ ? other.root_->Clone() : nullptr),
      levels_(other.levels_),
      cells_(other.cells_) {}

OctreeMap& OctreeMap::operator=(const OctreeMap& other) {
  if (this != &other) {
    OctreeMap copy(other);
    *this = std::move(copy);
  }
  return *this;
}

OctreeMap::~OctreeMap() = default;

VoxelKey OctreeMap::KeyOf(const Vec3& p) const {
  if (!p.allFinite()) throw DomainError("octree: non-finite point");
  return {static_cast<std::int64_t>(std::floor(p.x() / resolution_)),
          static_cast<std::int64_t>(std::floor(p.y() / resolution_)),
          static_cast<std::int64_t>(std::floor(p.z() / resolution_))};
}

bool OctreeMap::Contains(const VoxelKey& key) const {
  const std::int64_t half = std::int64_t{1} << (levels_ - 1);
  for (std::int64_t k : key) {
    if (k < -half || k >= half) return false;
  }
  return true;
}

void OctreeMap::Grow() {
  if (levels_ >= 62) throw DomainError("octree: key out of representable range");
  if (root_) {
    // Old octant i becomes child 7 - i of the new root's octant i.
    auto root = std::make_unique<Node>();
    for (int i = 0; i < 8; ++i) {
      if (!root_->child[i]) continue;
      root->child[i] = std::make_unique<Node>();
      root->child[i]->child[7 - i] = std::move(root_->child[i]);
    }
    root_ = std::move(root);
  }
  ++levels_;
}

const VoxelSums* OctreeMap::Find(const VoxelKey& key) const {
  if (!root_ || !Contains(key)) return nullptr;
  const Node* node = root_.get();
  VoxelKey lo;
  lo.fill(-(std::int64_t{1} << (levels_ - 1)));
  for (int level = levels_; level > 0; --level) {
    const std::int64_t half = std::int64_t{1} << (level - 1);
    int idx = 0;
    for (int a = 0; a < 3; ++a) {
      if (key[a] >= lo[a] + half) {
        idx |= 1 << a;
        lo[a] += half;
      }
    }
    node = node->child[idx].get();
    if (!node) return nullptr;
  }
  return &node->sums;
}

VoxelSums& OctreeMap::Touch(const VoxelKey& key, bool* created) {
  while (!Contains(key)) Grow();
  if (!root_) root_ = std::make_unique<Node>();
  Node* node = root_.get();
  VoxelKey lo;
  lo.fill(-(std::int64_t{1} << (levels_ - 1)));
  bool made = false;
  for (int level = levels_; level > 0; --level) {
    const std::int64_t half = std::int64_t{1} << (level - 1);
    int idx = 0;
    for (int a = 0; a < 3; ++a) {
      if (key[a] >= lo[a] + half) {
        idx |= 1 << a;
        lo[a] += half;
      }
    }
    if (!node->child[idx]) {
      node->child[idx] = std::make_unique<Node>();
      made = level == 1;
    }
    node = node->child[idx].get();
  }
  if (made) ++cells_;
  if (created) *created = made;
  return node->sums;
}

void OctreeMap::ForEach(
    const std::function<void(const VoxelKey&, const VoxelSums&)>& fn) const {
  if (!root_) return;
  struct Frame {
    const Node* node;
    VoxelKey lo;
    int level;
  };
  auto visit = [&](auto&& self, const Frame& f) -> void {
    if (f.level == 0) {
      fn(f.lo, f.node->sums);
      return;
    }
    const std::int64_t half = std::int64_t{1} << (f.level - 1);
    for (int i = 0; i < 8; ++i) {
      const Node* c = f.node->child[i].get();
      if (!c) continue;
      VoxelKey lo = f.lo;
      for (int a = 0; a < 3; ++a) {
        if (i & (1 << a)) lo[a] += half;
      }
      self(self, Frame{c, lo, f.level - 1});
    }
  };
  VoxelKey lo;
  lo.fill(-(std::int64_t{1} << (levels_ - 1)));
  visit(visit, Frame{root_.get(), lo, levels_});
}

std::uint64_t OctreeMap::Hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  ForEach([&](const VoxelKey& k, const VoxelSums& s) {
    mix(k.data(), sizeof(k));
    mix(s.position.data(), 3 * sizeof(double));
    mix(s.color.data(), 3 * sizeof(double));
    mix(s.normal.data(), 3 * sizeof(double));
    mix(&s.count, sizeof(s.count));
    mix(&s.normal_count, sizeof(s.normal_count));
  });
  return h;
}

IntegrationReport integrate_cloud(OctreeMap& map, const PointCloud& cloud,
                                  const Se3Pose& pose) {
  cloud.Validate();
  const Se3Pose to_world = pose.inverse();
  const Mat3 rt = pose.rotation().transpose();
  std::set<VoxelKey> created;
  std::set<VoxelKey> updated;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 xw = to_world * cloud.points[i];
    const VoxelKey key = map.KeyOf(xw);
    bool is_new = false;
    VoxelSums& s = map.Touch(key, &is_new);
    if (is_new) {
      created.insert(key);
    } else if (!created.count(key)) {
      updated.insert(key);
    }
    s.position += xw;
    s.color += Vec3(cloud.colors[i][0], cloud.colors[i][1], cloud.colors[i][2]);
    if (cloud.HasNormals()) {
      s.normal += rt * cloud.normals[i];
      ++s.normal_count;
    }
    ++s.count;
  }
  return {created.size(), updated.size()};
}

PointCloud extract_global_cloud(const OctreeMap& map) {
  PointCloud cloud;
  bool all_normals = map.cell_count() > 0;
  map.ForEach([&](const VoxelKey&, const VoxelSums& s) {
    const double n = static_cast<double>(s.count);
    cloud.points.push_back(s.position / n);
    Rgb c;
    for (int k = 0; k < 3; ++k) {
      c[k] = static_cast<std::uint8_t>(
          std::clamp(std::floor(s.color[k] / n + 0.5), 0.0, 255.0));
    }
    cloud.colors.push_back(c);
    const double len = s.normal.norm();
    if (s.normal_count > 0 && len > 0.0) {
      cloud.normals.push_back(s.normal / len);
    } else {
      all_normals = false;
    }
  });
  if (!all_normals) cloud.normals.clear();
  return cloud;
}

double max_cell_difference(const OctreeMap& a, const OctreeMap& b) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (a.cell_count() != b.cell_count()) return kInf;
  double worst = 0.0;
  a.ForEach([&](const VoxelKey& k, const VoxelSums& sa) {
    const VoxelSums* sb = b.Find(k);
    if (!sb || sb->count != sa.count || sb->normal_count != sa.normal_count) {
      worst = kInf;
      return;
    }
    worst = std::max({worst, (sa.position - sb->position).cwiseAbs().maxCoeff(),
                      (sa.color - sb->color).cwiseAbs().maxCoeff(),
                      (sa.normal - sb->normal).cwiseAbs().maxCoeff()});
  });
  return worst;
}

OctreeMap rebuild_on_adjustment(double resolution,
                                const KeyframeArchive& archive,
                                const std::map<KeyframeId, Se3Pose>& poses) {
  OctreeMap map(resolution);
  for (const auto& [id, pose] : poses) {
    auto it = archive.find(id);
    if (it == archive.end()) {
      throw DomainError("rebuild_on_adjustment: keyframe has no archived cloud");
    }
    integrate_cloud(map, it->second, pose);
  }
  return map;
}

// ---------------------------------------------------------------------------
// Integrator

VomaIntegrator::VomaIntegrator(double resolution, std::size_t queue_capacity,
                               std::size_t batch_size)
    : map_(resolution), queue_(queue_capacity), batch_size_(batch_size) {
  if (batch_size == 0) throw DomainError("batch size must be positive");
  consumer_ = std::thread([this] { Run(); });
}

VomaIntegrator::~VomaIntegrator() { Finish(); }

void VomaIntegrator::Submit(KeyframePacket packet) {
  if (!queue_.Push(std::move(packet))) {
    throw DomainError("VomaIntegrator: submit after finish");
  }
}

void VomaIntegrator::Finish() {
  queue_.Close();
  if (consumer_.joinable()) consumer_.join();
}

void VomaIntegrator::Run() {
  for (;;) {
    std::vector<KeyframePacket> batch = queue_.PopBatch(batch_size_);
    if (batch.empty()) return;
    std::lock_guard lock(map_mu_);
    for (KeyframePacket& p : batch) {
      integrate_cloud(map_, p.cloud, p.pose);
      archive_[p.id] = std::move(p.cloud);
    }
    ++batches_;
  }
}

PointCloud VomaIntegrator::Snapshot() const {
  std::lock_guard lock(map_mu_);
  return extract_global_cloud(map_);
}

std::size_t VomaIntegrator::batches() const {
  std::lock_guard lock(map_mu_);
  return batches_;
}

// ---------------------------------------------------------------------------
// Export

namespace {

void WriteRow(std::ostream& os, const PointCloud& c, std::size_t i, char sep) {
  char buf[256];
  const Vec3& p = c.points[i];
  const Vec3 n = c.HasNormals() ? c.normals[i] : Vec3::Zero();
  std::snprintf(buf, sizeof(buf), "%.9g%c%.9g%c%.9g%c%d%c%d%c%d%c%.9g%c%.9g%c%.9g\n",
                p.x(), sep, p.y(), sep, p.z(), sep, c.colors[i][0], sep,
                c.colors[i][1], sep, c.colors[i][2], sep, n.x(), sep, n.y(),
                sep, n.z());
  os << buf;
}

}  // namespace

void write_ply(std::ostream& os, const PointCloud& cloud) {
  cloud.Validate();
  os << "ply\nformat ascii 1.0\n"
     << "element vertex " << cloud.size() << '\n'
     << "property double x\nproperty double y\nproperty double z\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "property double nx\nproperty double ny\nproperty double nz\n"
     << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) WriteRow(os, cloud, i, ' ');
}

void write_csv(std::ostream& os, const PointCloud& cloud) {
  cloud.Validate();
  os << "x,y,z,r,g,b,nx,ny,nz\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) WriteRow(os, cloud, i, ',');
}

}  // namespace plmap
