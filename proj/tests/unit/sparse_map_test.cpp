#include "plmap/sparse_map.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace plmap {
namespace {

const CameraIntrinsics kCam = CameraIntrinsics::Create(500, 500, 320, 240, 0.08);

LineObservation Segment(double y) {
  LineObservation obs;
  obs.p = Vec2(10, y);
  obs.q = Vec2(200, y + 30);
  obs.depth_p = 2.0;
  obs.depth_q = 2.5;
  obs.descriptor = BinaryDescriptor(256);
  obs.descriptor->flip(static_cast<int>(y) % 256);
  return obs;
}

PointObservation Pixel(double u) {
  PointObservation obs;
  obs.pixel = Vec2(u, 100);
  return obs;
}

// Three keyframes, two points, one line.
SparseMap SmallMap() {
  SparseMap map;
  for (std::uint64_t k = 0; k < 3; ++k) {
    map.AddKeyframe(KeyframeId{k}, se3_exp({Vec3(0, 0.1 * k, 0), Vec3(k, 0, 0)}),
                    kCam);
  }
  map.AddPoint({PointId{1}, Vec3(0, 0, 3)});
  map.AddPoint({PointId{2}, Vec3(1, 0, 3)});
  map.AddLine({LineId{5}, Vec3(0, 1, 3), Vec3(1, 1, 3), 0});
  map.AddPointObservation(KeyframeId{0}, PointId{1}, Pixel(10));
  map.AddPointObservation(KeyframeId{1}, PointId{1}, Pixel(20));
  map.AddPointObservation(KeyframeId{1}, PointId{2}, Pixel(30));
  map.AddPointObservation(KeyframeId{2}, PointId{2}, Pixel(40));
  map.AddLineObservation(KeyframeId{0}, LineId{5}, Segment(50));
  map.AddLineObservation(KeyframeId{1}, LineId{5}, Segment(60));
  map.AddLineObservation(KeyframeId{2}, LineId{5}, Segment(70));
  return map;
}

TEST(SparseMapTest, CovisibilityCountsSharedLandmarks) {
  const SparseMap map = SmallMap();
  EXPECT_NO_THROW(map.CheckInvariants());
  EXPECT_EQ(map.keyframe(KeyframeId{0}).covisibility.at(KeyframeId{1}), 2);
  EXPECT_EQ(map.keyframe(KeyframeId{1}).covisibility.at(KeyframeId{2}), 2);
  EXPECT_EQ(map.keyframe(KeyframeId{0}).covisibility.at(KeyframeId{2}), 1);
  EXPECT_EQ(map.CovisibleKeyframes(KeyframeId{1}, 2),
            (std::vector<KeyframeId>{KeyframeId{0}, KeyframeId{2}}));
  EXPECT_EQ(map.CovisibleKeyframes(KeyframeId{0}, 2),
            std::vector<KeyframeId>{KeyframeId{1}});
  EXPECT_EQ(map.line(LineId{5}).n_obs, 3);
}

TEST(SparseMapTest, RejectsDuplicatesAndUnknownIds) {
  SparseMap map = SmallMap();
  EXPECT_THROW(map.AddKeyframe(KeyframeId{0}, Se3Pose(), kCam), DomainError);
  EXPECT_THROW(map.AddPoint({PointId{1}, Vec3::Zero()}), DomainError);
  EXPECT_THROW(map.AddPointObservation(KeyframeId{0}, PointId{1}, Pixel(1)),
               DomainError);
  EXPECT_THROW(map.AddPointObservation(KeyframeId{0}, PointId{99}, Pixel(1)),
               DomainError);
  EXPECT_THROW(map.AddLine({LineId{9}, Vec3::Ones(), Vec3::Ones(), 0}),
               DegenerateError);
  EXPECT_THROW(map.RemoveLine(LineId{42}), DomainError);
  EXPECT_NO_THROW(map.CheckInvariants());
}

TEST(SparseMapTest, RemovalsKeepGraphMirrored) {
  SparseMap map = SmallMap();
  map.RemovePoint(PointId{1});
  map.CheckInvariants();
  EXPECT_EQ(map.keyframe(KeyframeId{0}).covisibility.at(KeyframeId{1}), 1);
  map.RemoveKeyframe(KeyframeId{1});
  map.CheckInvariants();
  EXPECT_EQ(map.line(LineId{5}).n_obs, 2);
  EXPECT_EQ(map.PointObservers(PointId{2}).size(), 1u);
  map.RemoveLine(LineId{5});
  map.CheckInvariants();
  EXPECT_TRUE(map.keyframe(KeyframeId{0}).covisibility.empty());
  EXPECT_TRUE(map.keyframe(KeyframeId{0}).lines.empty());
}

TEST(SparseMapTest, RandomMutationsPreserveInvariants) {
  testing::Rng rng(61);
  SparseMap map;
  std::uint64_t next = 0;
  for (int step = 0; step < 2000; ++step) {
    const int op = static_cast<int>(rng.Uniform(0, 7));
    try {
      switch (op) {
        case 0:
          map.AddKeyframe(KeyframeId{next++}, Se3Pose(), kCam);
          break;
        case 1:
          map.AddPoint({PointId{next++}, rng.Gauss3()});
          break;
        case 2:
          map.AddLine({LineId{next++}, rng.Gauss3(), rng.Gauss3() + Vec3(5, 0, 0), 0});
          break;
        case 3: {
          const auto id = static_cast<std::uint64_t>(rng.Uniform(0, next + 1));
          map.AddPointObservation(KeyframeId{static_cast<std::uint64_t>(
                                      rng.Uniform(0, next + 1))},
                                  PointId{id}, Pixel(5));
          break;
        }
        case 4: {
          const auto id = static_cast<std::uint64_t>(rng.Uniform(0, next + 1));
          map.AddLineObservation(KeyframeId{static_cast<std::uint64_t>(
                                     rng.Uniform(0, next + 1))},
                                 LineId{id}, Segment(5));
          break;
        }
        case 5:
          if (rng.Uniform(0, 1) < 0.3) {
            map.RemoveKeyframe(
                KeyframeId{static_cast<std::uint64_t>(rng.Uniform(0, next + 1))});
          }
          break;
        case 6: {
          const auto id = static_cast<std::uint64_t>(rng.Uniform(0, next + 1));
          if (rng.Uniform(0, 1) < 0.5) {
            map.RemovePoint(PointId{id});
          } else {
            map.RemoveLine(LineId{id});
          }
          break;
        }
      }
    } catch (const DomainError&) {
      // Unknown or duplicate ids are expected; the map must be unchanged.
    }
    ASSERT_NO_THROW(map.CheckInvariants()) << "step " << step;
  }
}

TEST(CullLineLandmarkTest, PolicyExamples) {
  SparseMap map = SmallMap();
  EXPECT_FALSE(cull_line_landmark(map, LineId{5}));  // no history yet
  for (int i = 0; i < 4; ++i) map.RecordLineMatch(LineId{5}, true);
  EXPECT_FALSE(cull_line_landmark(map, LineId{5}));
  map.RecordLineMatch(LineId{5}, false);
  map.RecordLineMatch(LineId{5}, false);
  EXPECT_FALSE(cull_line_landmark(map, LineId{5}));  // 1 of last 3
  map.RecordLineMatch(LineId{5}, false);
  EXPECT_TRUE(cull_line_landmark(map, LineId{5}));  // 0 of last 3
  EXPECT_FALSE(map.lines().count(LineId{5}));
  for (const auto& [id, kf] : map.keyframes()) EXPECT_TRUE(kf.lines.empty());
  map.CheckInvariants();
  EXPECT_THROW(cull_line_landmark(map, LineId{5}), DomainError);
}

TEST(MapSerializationTest, RoundTripIsExact) {
  SparseMap map = SmallMap();
  map.SetPointPosition(PointId{1}, Vec3(0.1 / 3.0, -2.0 / 7.0, 3.25));
  std::stringstream first;
  write_map(first, map);
  const SparseMap back = read_map(first);
  back.CheckInvariants();
  std::stringstream second;
  write_map(second, back);
  EXPECT_EQ(first.str(), second.str());
  EXPECT_EQ(back.point(PointId{1}).position, map.point(PointId{1}).position);
  EXPECT_EQ(back.keyframe(KeyframeId{2}).lines.at(LineId{5}).descriptor,
            map.keyframe(KeyframeId{2}).lines.at(LineId{5}).descriptor);
  EXPECT_FALSE(back.keyframe(KeyframeId{0}).points.at(PointId{1}).depth);
}

TEST(MapSerializationTest, RejectsMalformedInput) {
  std::stringstream bad("PLMAP 2\n");
  EXPECT_THROW(read_map(bad), ConfigError);
  std::stringstream truncated("PLMAP 1\nKEYFRAMES 1\n");
  EXPECT_THROW(read_map(truncated), ConfigError);
}

}  // namespace
}  // namespace plmap
