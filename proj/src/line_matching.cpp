#include "plmap/line_matching.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace plmap {

Line2dParams canonicalize(const Line2dParams& line) {
  Line2dParams out = line;
  const Vec2& n = line.normal;
  if (n.x() < 0.0 || (n.x() == 0.0 && n.y() < 0.0)) {
    out.normal = -n;
    out.offset = -line.offset;
  }
  out.theta = std::atan2(out.normal.y(), out.normal.x());
  return out;
}

TileIndex::TileIndex(const TileConfig& config) : config_(config) {
  if (config.theta_bins < 1 || config.h_bins < 1 || !(config.h_max > 0.0)) {
    throw ConfigError("tile index: bins must be positive and h_max > 0");
  }
}

TileIndex::Tile TileIndex::TileOf(const Line2dParams& line) const {
  const Line2dParams c = canonicalize(line);
  double t = (c.theta + std::numbers::pi / 2) / std::numbers::pi;
  double h = c.offset;
  int tb = static_cast<int>(std::floor(t * config_.theta_bins));
  if (tb >= config_.theta_bins) {
    tb = 0;
    h = -h;
  }
  tb = std::clamp(tb, 0, config_.theta_bins - 1);
  const double s = (h + config_.h_max) / (2.0 * config_.h_max);
  const int hb = std::clamp(static_cast<int>(std::floor(s * config_.h_bins)), 0,
                            config_.h_bins - 1);
  return {tb, hb};
}

void TileIndex::Insert(std::size_t id, const Line2dParams& line) {
  buckets_[TileOf(line)].push_back(id);
  ++size_;
}

std::vector<std::size_t> TileIndex::Candidates(const Line2dParams& query,
                                               Neighborhood hood) const {
  const Tile center = TileOf(query);
  std::vector<Tile> tiles{center};
  if (hood == Neighborhood::kEightNeighborhood) {
    for (int dt = -1; dt <= 1; ++dt) {
      for (int dh = -1; dh <= 1; ++dh) {
        if (dt == 0 && dh == 0) continue;
        int tb = center.first + dt;
        int hb = center.second + dh;
        if (tb < 0 || tb >= config_.theta_bins) {
          tb = (tb + config_.theta_bins) % config_.theta_bins;
          hb = config_.h_bins - 1 - hb;
        }
        if (hb < 0 || hb >= config_.h_bins) continue;
        tiles.emplace_back(tb, hb);
      }
    }
  }
  std::vector<std::size_t> out;
  for (const Tile& t : tiles) {
    auto it = buckets_.find(t);
    if (it != buckets_.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

TileIndex build_tile_index(const std::vector<LineObservation>& observations,
                           const TileConfig& config) {
  TileIndex index(config);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    index.Insert(i, line_params_from_endpoints(observations[i].p,
                                               observations[i].q));
  }
  return index;
}

std::vector<std::size_t> candidate_matches(const TileIndex& index,
                                           const Line2dParams& projected,
                                           Neighborhood hood) {
  if (!projected.normal.allFinite() || !std::isfinite(projected.offset)) {
    throw DomainError("candidate_matches: non-finite line parameters");
  }
  return index.Candidates(projected, hood);
}

double line_to_line_distance(const Vec2& p1, const Vec2& q1, const Vec2& p2,
                             const Vec2& q2) {
  const Line2dParams l1 = line_params_from_endpoints(p1, q1);
  const Line2dParams l2 = line_params_from_endpoints(p2, q2);
  const double a = std::abs(l1.normal.dot(0.5 * (p2 + q2)) - l1.offset);
  const double b = std::abs(l2.normal.dot(0.5 * (p1 + q1)) - l2.offset);
  return std::max(a, b);
}

std::optional<std::size_t> match_descriptor(
    const MatchQuery& query, const std::vector<MatchCandidate>& candidates,
    const MatchConfig& config) {
  if (candidates.empty()) return std::nullopt;
  std::vector<std::pair<int, std::size_t>> ranked;  // (distance, position)
  ranked.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ranked.emplace_back(query.descriptor.Hamming(candidates[i].descriptor), i);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return candidates[a.second].id < candidates[b.second].id;
  });
  if (ranked.size() > 1) {
    const int d1 = ranked[0].first;
    const int d2 = ranked[1].first;
    if (d2 == 0) return std::nullopt;
    if (!(static_cast<double>(d1) / d2 < config.ratio)) return std::nullopt;
  }
  const MatchCandidate& best = candidates[ranked[0].second];
  if (line_to_line_distance(query.p, query.q, best.p, best.q) >
      config.max_line_dist) {
    return std::nullopt;
  }
  return best.id;
}

}  // namespace plmap
