#include "plmap/sparse_map.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace plmap {
namespace {

template <typename IdT>
[[noreturn]] void ThrowUnknown(const char* what, IdT id) {
  std::ostringstream os;
  os << "unknown " << what << " id " << id;
  throw DomainError(os.str());
}

template <typename Map, typename IdT>
auto& Lookup(Map& m, IdT id, const char* what) {
  auto it = m.find(id);
  if (it == m.end()) ThrowUnknown(what, id);
  return it->second;
}

}  // namespace

Keyframe& SparseMap::AddKeyframe(KeyframeId id, const Se3Pose& pose,
                                 const CameraIntrinsics& camera) {
  if (keyframes_.count(id)) throw DomainError("duplicate keyframe id");
  if (!pose.IsValid()) throw DomainError("keyframe pose is not a valid SE(3)");
  Keyframe& kf = keyframes_[id];
  kf.id = id;
  kf.pose = pose;
  kf.camera = camera;
  return kf;
}

void SparseMap::AddPoint(const PointLandmark& point) {
  if (points_.count(point.id)) throw DomainError("duplicate point id");
  points_[point.id] = point;
  point_observers_[point.id];
}

void SparseMap::AddLine(const LineLandmark& line) {
  if (lines_.count(line.id)) throw DomainError("duplicate line id");
  if (!((line.p - line.q).norm() > 0.0)) {
    throw DegenerateError("line landmark with coincident endpoints");
  }
  LineLandmark stored = line;
  stored.n_obs = 0;
  lines_[line.id] = stored;
  line_observers_[line.id];
  line_history_[line.id];
}

void SparseMap::LinkCovisibility(KeyframeId kf,
                                 const std::set<KeyframeId>& observers,
                                 int delta) {
  Keyframe& a = MutableKeyframe(kf);
  for (KeyframeId other : observers) {
    if (other == kf) continue;
    Keyframe& b = MutableKeyframe(other);
    if ((a.covisibility[other] += delta) == 0) a.covisibility.erase(other);
    if ((b.covisibility[kf] += delta) == 0) b.covisibility.erase(kf);
  }
}

void SparseMap::AddPointObservation(KeyframeId kf, PointId point,
                                    const PointObservation& obs) {
  Keyframe& k = MutableKeyframe(kf);
  std::set<KeyframeId>& observers = Lookup(point_observers_, point, "point");
  if (observers.count(kf)) throw DomainError("duplicate point observation");
  LinkCovisibility(kf, observers, +1);
  observers.insert(kf);
  k.points[point] = obs;
}

void SparseMap::AddLineObservation(KeyframeId kf, LineId line,
                                   const LineObservation& obs) {
  Keyframe& k = MutableKeyframe(kf);
  std::set<KeyframeId>& observers = Lookup(line_observers_, line, "line");
  if (observers.count(kf)) throw DomainError("duplicate line observation");
  LinkCovisibility(kf, observers, +1);
  observers.insert(kf);
  k.lines[line] = obs;
  lines_[line].n_obs = static_cast<int>(observers.size());
}

void SparseMap::RemovePoint(PointId id) {
  std::set<KeyframeId> observers = Lookup(point_observers_, id, "point");
  for (KeyframeId kf : observers) {
    point_observers_[id].erase(kf);
    LinkCovisibility(kf, point_observers_[id], -1);
    keyframes_[kf].points.erase(id);
  }
  point_observers_.erase(id);
  points_.erase(id);
}

void SparseMap::RemoveLine(LineId id) {
  std::set<KeyframeId> observers = Lookup(line_observers_, id, "line");
  for (KeyframeId kf : observers) {
    line_observers_[id].erase(kf);
    LinkCovisibility(kf, line_observers_[id], -1);
    keyframes_[kf].lines.erase(id);
  }
  line_observers_.erase(id);
  line_history_.erase(id);
  lines_.erase(id);
}

void SparseMap::RemoveKeyframe(KeyframeId id) {
  Keyframe& kf = MutableKeyframe(id);
  for (const auto& [pid, obs] : kf.points) {
    std::set<KeyframeId>& observers = point_observers_[pid];
    observers.erase(id);
    LinkCovisibility(id, observers, -1);
  }
  for (const auto& [lid, obs] : kf.lines) {
    std::set<KeyframeId>& observers = line_observers_[lid];
    observers.erase(id);
    LinkCovisibility(id, observers, -1);
    lines_[lid].n_obs = static_cast<int>(observers.size());
  }
  keyframes_.erase(id);
}

void SparseMap::SetPose(KeyframeId id, const Se3Pose& pose) {
  if (!pose.IsValid()) throw DomainError("keyframe pose is not a valid SE(3)");
  MutableKeyframe(id).pose = pose;
}

void SparseMap::SetPointPosition(PointId id, const Vec3& position) {
  Lookup(points_, id, "point").position = position;
}

void SparseMap::SetLineEndpoints(LineId id, const Vec3& p, const Vec3& q) {
  LineLandmark& l = Lookup(lines_, id, "line");
  l.p = p;
  l.q = q;
}

Keyframe& SparseMap::MutableKeyframe(KeyframeId id) {
  return Lookup(keyframes_, id, "keyframe");
}

const Keyframe& SparseMap::keyframe(KeyframeId id) const {
  return Lookup(keyframes_, id, "keyframe");
}

const PointLandmark& SparseMap::point(PointId id) const {
  return Lookup(points_, id, "point");
}

const LineLandmark& SparseMap::line(LineId id) const {
  return Lookup(lines_, id, "line");
}

const std::set<KeyframeId>& SparseMap::PointObservers(PointId id) const {
  return Lookup(point_observers_, id, "point");
}

const std::set<KeyframeId>& SparseMap::LineObservers(LineId id) const {
  return Lookup(line_observers_, id, "line");
}

std::vector<KeyframeId> SparseMap::CovisibleKeyframes(KeyframeId id,
                                                      int min_shared) const {
  std::vector<KeyframeId> out;
  for (const auto& [other, shared] : keyframe(id).covisibility) {
    if (shared >= min_shared) out.push_back(other);
  }
  return out;
}

void SparseMap::RecordLineMatch(LineId id, bool matched) {
  Lookup(line_history_, id, "line").push_back(matched);
}

const std::deque<bool>& SparseMap::LineMatchHistory(LineId id) const {
  return Lookup(line_history_, id, "line");
}

void SparseMap::CheckInvariants() const {
  std::map<std::pair<KeyframeId, KeyframeId>, int> covis;
  auto count_shared = [&](const auto& observers) {
    for (const auto& [lid, kfs] : observers) {
      for (KeyframeId a : kfs) {
        for (KeyframeId b : kfs) {
          if (a != b) ++covis[{a, b}];
        }
      }
    }
  };
  count_shared(point_observers_);
  count_shared(line_observers_);

  for (const auto& [id, kf] : keyframes_) {
    if (kf.id != id) throw Error("keyframe stored under a different id");
    if (!kf.pose.IsValid()) throw Error("keyframe pose invalid");
    for (const auto& [pid, obs] : kf.points) {
      auto it = point_observers_.find(pid);
      if (it == point_observers_.end()) throw Error("dangling point id");
      if (!it->second.count(id)) throw Error("point link not mirrored");
    }
    for (const auto& [lid, obs] : kf.lines) {
      auto it = line_observers_.find(lid);
      if (it == line_observers_.end()) throw Error("dangling line id");
      if (!it->second.count(id)) throw Error("line link not mirrored");
    }
    for (const auto& [other, shared] : kf.covisibility) {
      auto it = covis.find({id, other});
      if (it == covis.end() || it->second != shared) {
        throw Error("covisibility count out of date");
      }
    }
  }
  for (const auto& [key, shared] : covis) {
    const auto& c = keyframes_.at(key.first).covisibility;
    auto it = c.find(key.second);
    if (it == c.end() || it->second != shared) {
      throw Error("covisibility entry missing");
    }
  }
  for (const auto& [pid, kfs] : point_observers_) {
    if (!points_.count(pid)) throw Error("observer set for unknown point");
    for (KeyframeId kf : kfs) {
      auto it = keyframes_.find(kf);
      if (it == keyframes_.end() || !it->second.points.count(pid)) {
        throw Error("point observer not mirrored");
      }
    }
  }
  for (const auto& [lid, kfs] : line_observers_) {
    auto line = lines_.find(lid);
    if (line == lines_.end()) throw Error("observer set for unknown line");
    if (line->second.n_obs != static_cast<int>(kfs.size())) {
      throw Error("line n_obs differs from observer count");
    }
    for (KeyframeId kf : kfs) {
      auto it = keyframes_.find(kf);
      if (it == keyframes_.end() || !it->second.lines.count(lid)) {
        throw Error("line observer not mirrored");
      }
    }
  }
  if (point_observers_.size() != points_.size() ||
      line_observers_.size() != lines_.size()) {
    throw Error("landmark without observer set");
  }
}

bool cull_line_landmark(SparseMap& map, LineId id,
                        const CullingPolicy& policy) {
  if (policy.window <= 0) throw ConfigError("culling window must be positive");
  const std::deque<bool>& history = map.LineMatchHistory(id);
  const auto n = static_cast<std::size_t>(policy.window);
  if (history.size() < n) return false;
  int matched = 0;
  for (auto it = history.end() - static_cast<std::ptrdiff_t>(n);
       it != history.end(); ++it) {
    matched += *it ? 1 : 0;
  }
  if (static_cast<double>(matched) / policy.window >= policy.min_ratio) {
    return false;
  }
  map.RemoveLine(id);
  return true;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kMagic = "PLMAP";
constexpr int kVersion = 1;

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Opt(const std::optional<double>& v) {
  return v ? Num(*v) : std::string("nan");
}

std::optional<double> ReadOpt(std::istream& is) {
  std::string tok;
  is >> tok;
  const double v = std::stod(tok);
  if (std::isnan(v)) return std::nullopt;
  return v;
}

void Expect(std::istream& is, const std::string& word) {
  std::string tok;
  if (!(is >> tok) || tok != word) {
    throw ConfigError("map file: expected '" + word + "', got '" + tok + "'");
  }
}

std::size_t ReadCount(std::istream& is, const std::string& section) {
  Expect(is, section);
  std::size_t n = 0;
  if (!(is >> n)) throw ConfigError("map file: bad count for " + section);
  return n;
}

}  // namespace

void write_map(std::ostream& os, const SparseMap& map) {
  os << kMagic << ' ' << kVersion << '\n';
  os << "KEYFRAMES " << map.keyframes().size() << '\n';
  for (const auto& [id, kf] : map.keyframes()) {
    const CameraIntrinsics& c = kf.camera;
    os << id << ' ' << Num(c.fx) << ' ' << Num(c.fy) << ' ' << Num(c.cx)
       << ' ' << Num(c.cy) << ' ' << Opt(c.baseline);
    const Mat3& r = kf.pose.rotation();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) os << ' ' << Num(r(i, j));
    }
    for (int i = 0; i < 3; ++i) os << ' ' << Num(kf.pose.translation()(i));
    os << '\n';
  }
  os << "POINTS " << map.points().size() << '\n';
  for (const auto& [id, p] : map.points()) {
    os << id << ' ' << Num(p.position.x()) << ' ' << Num(p.position.y()) << ' '
       << Num(p.position.z()) << '\n';
  }
  os << "LINES " << map.lines().size() << '\n';
  for (const auto& [id, l] : map.lines()) {
    os << id;
    for (int i = 0; i < 3; ++i) os << ' ' << Num(l.p(i));
    for (int i = 0; i < 3; ++i) os << ' ' << Num(l.q(i));
    os << '\n';
  }
  std::size_t n_point_obs = 0;
  std::size_t n_line_obs = 0;
  for (const auto& [id, kf] : map.keyframes()) {
    n_point_obs += kf.points.size();
    n_line_obs += kf.lines.size();
  }
  os << "POINT_OBS " << n_point_obs << '\n';
  for (const auto& [id, kf] : map.keyframes()) {
    for (const auto& [pid, o] : kf.points) {
      os << id << ' ' << pid << ' ' << Num(o.pixel.x()) << ' '
         << Num(o.pixel.y()) << ' ' << Opt(o.depth) << ' ' << Opt(o.right_u)
         << ' ' << o.level << '\n';
    }
  }
  os << "LINE_OBS " << n_line_obs << '\n';
  for (const auto& [id, kf] : map.keyframes()) {
    for (const auto& [lid, o] : kf.lines) {
      os << id << ' ' << lid << ' ' << Num(o.p.x()) << ' ' << Num(o.p.y())
         << ' ' << Num(o.q.x()) << ' ' << Num(o.q.y()) << ' '
         << Opt(o.depth_p) << ' ' << Opt(o.depth_q) << ' ' << o.level;
      if (o.descriptor) {
        os << ' ' << o.descriptor->bits() << ' ' << o.descriptor->ToHex();
      } else {
        os << " 0 -";
      }
      os << '\n';
    }
  }
  os << "END\n";
}

SparseMap read_map(std::istream& is) {
  Expect(is, kMagic);
  int version = 0;
  if (!(is >> version) || version != kVersion) {
    throw ConfigError("map file: unsupported version");
  }
  SparseMap map;
  try {
    for (std::size_t n = ReadCount(is, "KEYFRAMES"); n > 0; --n) {
      std::uint64_t id = 0;
      double fx, fy, cx, cy;
      is >> id >> fx >> fy >> cx >> cy;
      const std::optional<double> baseline = ReadOpt(is);
      Mat3 r;
      Vec3 t;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) is >> r(i, j);
      }
      for (int i = 0; i < 3; ++i) is >> t(i);
      map.AddKeyframe(KeyframeId(id), Se3Pose(r, t),
                      CameraIntrinsics::Create(fx, fy, cx, cy, baseline));
    }
    for (std::size_t n = ReadCount(is, "POINTS"); n > 0; --n) {
      std::uint64_t id = 0;
      Vec3 x;
      is >> id >> x.x() >> x.y() >> x.z();
      map.AddPoint({PointId(id), x});
    }
    for (std::size_t n = ReadCount(is, "LINES"); n > 0; --n) {
      std::uint64_t id = 0;
      LineLandmark l;
      is >> id >> l.p.x() >> l.p.y() >> l.p.z() >> l.q.x() >> l.q.y() >>
          l.q.z();
      l.id = LineId(id);
      map.AddLine(l);
    }
    for (std::size_t n = ReadCount(is, "POINT_OBS"); n > 0; --n) {
      std::uint64_t kf = 0, pid = 0;
      PointObservation o;
      is >> kf >> pid >> o.pixel.x() >> o.pixel.y();
      o.depth = ReadOpt(is);
      o.right_u = ReadOpt(is);
      is >> o.level;
      map.AddPointObservation(KeyframeId(kf), PointId(pid), o);
    }
    for (std::size_t n = ReadCount(is, "LINE_OBS"); n > 0; --n) {
      std::uint64_t kf = 0, lid = 0;
      LineObservation o;
      is >> kf >> lid >> o.p.x() >> o.p.y() >> o.q.x() >> o.q.y();
      o.depth_p = ReadOpt(is);
      o.depth_q = ReadOpt(is);
      int bits = 0;
      std::string hex;
      is >> o.level >> bits >> hex;
      if (bits > 0) o.descriptor = BinaryDescriptor::FromHex(hex, bits);
      map.AddLineObservation(KeyframeId(kf), LineId(lid), o);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("map file: malformed number");
  }
  if (!is) throw ConfigError("map file: truncated");
  Expect(is, "END");
  return map;
}

}  // namespace plmap
