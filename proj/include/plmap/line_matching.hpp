#pragma once

// (theta, h) tiling of 2D line parameters and descriptor matching of
// projected map lines against observed segments.

#include <cstddef>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "plmap/descriptor.hpp"
#include "plmap/line_geometry.hpp"

namespace plmap {

struct TileConfig {
  int theta_bins = 32;
  int h_bins = 32;
  // h is binned over [-h_max, h_max]; values outside clamp to the end bins.
  double h_max = 800.0;  // diagonal of a 640 x 480 image
};

/// Sign convention applied before tiling: (n, h) and (-n, -h) describe the
/// same line, so n is flipped to n_u > 0 (n_v > 0 when n_u == 0). The
/// resulting theta lies in (-pi/2, pi/2].
Line2dParams canonicalize(const Line2dParams& line);

enum class Neighborhood { kSameTile, kEightNeighborhood };

class TileIndex {
 public:
  using Tile = std::pair<int, int>;  // (theta bin, h bin)

  explicit TileIndex(const TileConfig& config = {});

  /// Canonical theta bins cover [-pi/2, pi/2). theta == pi/2 wraps to bin 0
  /// with h mirrored, since it is the same line as theta = -pi/2 with -h.
  Tile TileOf(const Line2dParams& line) const;

  void Insert(std::size_t id, const Line2dParams& line);

  /// Ids in the query's tile, or in it and its 8 neighbors. Crossing the
  /// theta seam mirrors the h bin. Sorted ascending, no duplicates.
  std::vector<std::size_t> Candidates(const Line2dParams& query,
                                      Neighborhood hood) const;

  std::size_t size() const { return size_; }
  const std::map<Tile, std::vector<std::size_t>>& buckets() const {
    return buckets_;
  }
  const TileConfig& config() const { return config_; }

 private:
  TileConfig config_;
  std::map<Tile, std::vector<std::size_t>> buckets_;
  std::size_t size_ = 0;
};

/// Index over observations; ids are positions in the input list.
TileIndex build_tile_index(const std::vector<LineObservation>& observations,
                           const TileConfig& config = {});

std::vector<std::size_t> candidate_matches(const TileIndex& index,
                                           const Line2dParams& projected,
                                           Neighborhood hood =
                                               Neighborhood::kEightNeighborhood);

struct MatchQuery {
  BinaryDescriptor descriptor;
  Vec2 p = Vec2::Zero();  // projected segment endpoints
  Vec2 q = Vec2::Zero();
};

struct MatchCandidate {
  std::size_t id = 0;
  BinaryDescriptor descriptor;
  Vec2 p = Vec2::Zero();
  Vec2 q = Vec2::Zero();
};

struct MatchConfig {
  double ratio = 0.8;
  double max_line_dist = 40.0;  // pixels
};

/// Larger of the two midpoint-to-other-line perpendicular distances.
double line_to_line_distance(const Vec2& p1, const Vec2& q1, const Vec2& p2,
                             const Vec2& q2);

/// Nearest candidate by Hamming distance (ties to the lower id), accepted
/// when it is the only candidate or d1 / d2 < ratio, and its line distance
/// to the query is within max_line_dist. d1 = d2 = 0 is ambiguous and
/// rejected.
std::optional<std::size_t> match_descriptor(
    const MatchQuery& query, const std::vector<MatchCandidate>& candidates,
    const MatchConfig& config = {});

}  // namespace plmap
