#pragma once

// Keyframes, point and line landmarks, and the bidirectional observation
// graph between them. Single writer; const queries are safe between
// mutations.

#include <deque>
#include <iosfwd>
#include <map>
#include <set>
#include <vector>

#include "plmap/camera.hpp"
#include "plmap/ids.hpp"
#include "plmap/lie.hpp"
#include "plmap/line_geometry.hpp"
#include "plmap/point_errors.hpp"

namespace plmap {

struct Keyframe {
  KeyframeId id;
  Se3Pose pose;  // world -> camera
  CameraIntrinsics camera;
  std::map<PointId, PointObservation> points;
  std::map<LineId, LineObservation> lines;
  // Shared-landmark count with every other keyframe sharing at least one.
  std::map<KeyframeId, int> covisibility;
};

struct CullingPolicy {
  int window = 3;
  double min_ratio = 1.0 / 3.0;
};

class SparseMap {
 public:
  Keyframe& AddKeyframe(KeyframeId id, const Se3Pose& pose,
                        const CameraIntrinsics& camera);
  void AddPoint(const PointLandmark& point);
  void AddLine(const LineLandmark& line);

  // Each keyframe observes a landmark at most once.
  void AddPointObservation(KeyframeId kf, PointId point,
                           const PointObservation& obs);
  void AddLineObservation(KeyframeId kf, LineId line,
                          const LineObservation& obs);

  void RemovePoint(PointId id);
  void RemoveLine(LineId id);
  void RemoveKeyframe(KeyframeId id);

  void SetPose(KeyframeId id, const Se3Pose& pose);
  void SetPointPosition(PointId id, const Vec3& position);
  void SetLineEndpoints(LineId id, const Vec3& p, const Vec3& q);

  const Keyframe& keyframe(KeyframeId id) const;
  const PointLandmark& point(PointId id) const;
  const LineLandmark& line(LineId id) const;

  const std::map<KeyframeId, Keyframe>& keyframes() const { return keyframes_; }
  const std::map<PointId, PointLandmark>& points() const { return points_; }
  const std::map<LineId, LineLandmark>& lines() const { return lines_; }

  const std::set<KeyframeId>& PointObservers(PointId id) const;
  const std::set<KeyframeId>& LineObservers(LineId id) const;

  /// Keyframes sharing at least min_shared landmarks with id, ascending.
  std::vector<KeyframeId> CovisibleKeyframes(KeyframeId id,
                                             int min_shared) const;

  /// Appends one tracking outcome (matched in the latest keyframe or not).
  void RecordLineMatch(LineId id, bool matched);
  const std::deque<bool>& LineMatchHistory(LineId id) const;

  /// Throws Error naming the first violated invariant: mirrored links,
  /// dangling ids, n_obs, covisibility counts.
  void CheckInvariants() const;

 private:
  Keyframe& MutableKeyframe(KeyframeId id);
  void LinkCovisibility(KeyframeId kf, const std::set<KeyframeId>& observers,
                        int delta);

  std::map<KeyframeId, Keyframe> keyframes_;
  std::map<PointId, PointLandmark> points_;
  std::map<LineId, LineLandmark> lines_;
  std::map<PointId, std::set<KeyframeId>> point_observers_;
  std::map<LineId, std::set<KeyframeId>> line_observers_;
  std::map<LineId, std::deque<bool>> line_history_;
};

/// Removes the landmark when its tracked-match ratio over the last
/// policy.window outcomes falls below policy.min_ratio. Landmarks with a
/// shorter history are kept. Returns true if removed; unknown ids throw.
bool cull_line_landmark(SparseMap& map, LineId id,
                        const CullingPolicy& policy = {});

// Text format "PLMAP 1": one section per table (KEYFRAMES, POINTS, LINES,
// POINT_OBS, LINE_OBS), each headed by its row count, values in %.17g, absent
// optionals written as "nan", absent descriptors as "-".
void write_map(std::ostream& os, const SparseMap& map);
SparseMap read_map(std::istream& is);

}  // namespace plmap
