#include "smc/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "smc/errors.hpp"

namespace smc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

}  // namespace

GmmSpec benchmark_gmm_spec() {
  GmmSpec spec;
  spec.means = Matrix(4, 2);
  const double m[4][2] = {{0.7, 3.5}, {1.0, 1.5}, {2.7, 1.0}, {5.0, 3.5}};
  for (int j = 0; j < 4; ++j) {
    spec.means(j, 0) = m[j][0];
    spec.means(j, 1) = m[j][1];
  }
  spec.sigma2 = 0.1;
  spec.points_per_cluster = 100;
  return spec;
}

GmmSample simulate_gmm(const GmmSpec& spec, RngStream& rng) {
  if (!(spec.sigma2 > 0.0) && spec.sigma2 != 0.0)
    throw InvalidModelError("gmm sigma2 must be >= 0");
  const std::size_t k = spec.means.rows, d = spec.means.cols;
  const std::size_t n = k * spec.points_per_cluster;
  const double sd = std::sqrt(spec.sigma2);
  GmmSample out{Matrix(n, d), std::vector<std::uint32_t>(n)};
  std::size_t idx = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < spec.points_per_cluster; ++i, ++idx) {
      for (std::size_t m = 0; m < d; ++m)
        out.points(idx, m) = spec.means(c, m) + sd * rng.normal();
      out.labels[idx] = c;
    }
  }
  return out;
}

SvSample simulate_sv(const SvParams& params, RngStream& rng) {
  if (std::abs(params.phi) >= 1.0)
    throw InvalidModelError("sv model needs |phi| < 1");
  const double sigma = std::sqrt(params.sigma2);
  SvSample out{{}, Matrix(params.T, 1)};
  out.states.resize(params.T);
  double stationary_sd =
      std::sqrt(params.sigma2 / (1.0 - params.phi * params.phi));
  for (std::size_t t = 0; t < params.T; ++t) {
    if (t == 0)
      out.states[t] = stationary_sd * rng.normal();
    else
      out.states[t] = params.phi * out.states[t - 1] + sigma * rng.normal();
    out.observations(t, 0) =
        params.beta * std::exp(out.states[t] / 2.0) * rng.normal();
  }
  return out;
}

SvModel::SvModel(const SvParams& params) : p_(params) {
  if (std::abs(p_.phi) >= 1.0)
    throw InvalidModelError("sv model needs |phi| < 1");
  stationary_var_ = p_.sigma2 / (1.0 - p_.phi * p_.phi);
}

void SvModel::sample_initial(std::span<double> out, RngStream& rng) const {
  out[0] = std::sqrt(stationary_var_) * rng.normal();
}

void SvModel::sample_proposal(std::span<const double> prev, const Matrix&,
                              std::span<double> out, RngStream& rng) const {
  out[0] = p_.phi * prev[0] + std::sqrt(p_.sigma2) * rng.normal();
}

double SvModel::log_transition(std::span<const double> prev,
                               std::span<const double> next,
                               const Matrix&) const {
  return log_normal_pdf(next[0], p_.phi * prev[0], p_.sigma2);
}

double SvModel::log_observation(std::span<const double> obs,
                                std::span<const double> state) const {
  double var = p_.beta * p_.beta * std::exp(state[0]);
  return log_normal_pdf(obs[0], 0.0, var);
}

double TerrainMap::eval(double lon, double lat) const {
  if (!inside(lon, lat))
    throw OutOfBoundsError("terrain query outside map box");
  double u = (lon - lon_min) / cell_width();
  double v = (lat_max - lat) / cell_height();
  std::size_t j0 = std::min(std::size_t(u), W - 2);
  std::size_t i0 = std::min(std::size_t(v), H - 2);
  double fu = u - double(j0);
  double fv = v - double(i0);
  double top = (1.0 - fu) * grid(i0, j0) + fu * grid(i0, j0 + 1);
  double bot = (1.0 - fu) * grid(i0 + 1, j0) + fu * grid(i0 + 1, j0 + 1);
  return (1.0 - fv) * top + fv * bot;
}

TerrainMap read_terrain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open terrain file: " + path);
  TerrainMap map;
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("terrain file truncated: " + path);
  {
    std::istringstream hs(header);
    if (!(hs >> map.H >> map.W >> map.lon_min >> map.lon_max >> map.lat_min >>
          map.lat_max))
      throw std::runtime_error("bad terrain header: " + path);
    std::string extra;
    if (hs >> extra)
      throw std::runtime_error("trailing tokens in terrain header: " + path);
  }
  if (map.H < 2 || map.W < 2)
    throw std::runtime_error("terrain grid needs H,W >= 2: " + path);
  if (!(map.lon_min < map.lon_max) || !(map.lat_min < map.lat_max))
    throw std::runtime_error("terrain box is empty: " + path);
  map.grid = Matrix(map.H, map.W);
  for (std::size_t i = 0; i < map.H * map.W; ++i) {
    if (!(in >> map.grid.data[i]))
      throw std::runtime_error("terrain grid truncated: " + path);
    if (!std::isfinite(map.grid.data[i]))
      throw std::runtime_error("non-finite altitude in terrain file: " + path);
  }
  double extra;
  if (in >> extra)
    throw std::runtime_error("trailing values in terrain file: " + path);
  return map;
}

void write_terrain(const TerrainMap& map, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write terrain file: " + path);
  std::fprintf(f, "%zu %zu %.17g %.17g %.17g %.17g\n", map.H, map.W,
               map.lon_min, map.lon_max, map.lat_min, map.lat_max);
  for (std::size_t i = 0; i < map.H; ++i) {
    for (std::size_t j = 0; j < map.W; ++j)
      std::fprintf(f, "%s%.17g", j ? " " : "", map.grid(i, j));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

TerrainMap synth_terrain(const std::vector<TerrainBump>& bumps, std::size_t H,
                         std::size_t W, double lon_min, double lon_max,
                         double lat_min, double lat_max) {
  if (H < 2 || W < 2) throw std::invalid_argument("terrain needs H,W >= 2");
  TerrainMap map;
  map.H = H;
  map.W = W;
  map.lon_min = lon_min;
  map.lon_max = lon_max;
  map.lat_min = lat_min;
  map.lat_max = lat_max;
  map.grid = Matrix(H, W);
  for (std::size_t i = 0; i < H; ++i) {
    double lat = lat_max - double(i) * (lat_max - lat_min) / double(H - 1);
    for (std::size_t j = 0; j < W; ++j) {
      double lon = lon_min + double(j) * (lon_max - lon_min) / double(W - 1);
      double z = 0.0;
      for (const auto& b : bumps) {
        double dx = lon - b.lon, dy = lat - b.lat;
        z += b.amplitude *
             std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
      }
      map.grid(i, j) = z;
    }
  }
  return map;
}

TrackSample simulate_track(const TerrainMap& map, const TrackParams& params,
                           const PathSpec& path, RngStream& rng) {
  const std::size_t T = path.velocities.rows;
  TrackSample out{Matrix(T, 2), Matrix(T, 3)};
  double l11 = std::sqrt(params.s11);
  double l21 = l11 > 0.0 ? params.s12 / l11 : 0.0;
  double l22 = std::sqrt(std::max(0.0, params.s22 - l21 * l21));
  double lon = path.start_lon, lat = path.start_lat;
  if (!map.inside(lon, lat))
    throw OutOfBoundsError("track start outside map box");
  for (std::size_t t = 0; t < T; ++t) {
    lon += path.velocities(t, 0) * params.dt;
    lat += path.velocities(t, 1) * params.dt;
    if (!map.inside(lon, lat))
      throw OutOfBoundsError("true path leaves map box at step " +
                             std::to_string(t + 1));
    out.true_path(t, 0) = lon;
    out.true_path(t, 1) = lat;
    double n1 = rng.normal(), n2 = rng.normal();
    out.observations(t, 0) =
        params.h - map.eval(lon, lat) + std::sqrt(params.sigma_h2) * rng.normal();
    out.observations(t, 1) = path.velocities(t, 0) + l11 * n1;
    out.observations(t, 2) = path.velocities(t, 1) + l21 * n1 + l22 * n2;
  }
  return out;
}

TrackModel::TrackModel(const TerrainMap& map, const TrackParams& params)
    : map_(&map), p_(params) {
  if (!(p_.s11 > 0.0) || !(p_.s22 > 0.0) ||
      p_.s11 * p_.s22 - p_.s12 * p_.s12 <= 0.0)
    throw InvalidModelError("track velocity covariance must be SPD");
  l11_ = std::sqrt(p_.s11);
  l21_ = p_.s12 / l11_;
  l22_ = std::sqrt(p_.s22 - l21_ * l21_);
  double det = p_.s11 * p_.s22 - p_.s12 * p_.s12;
  inv11_ = p_.s22 / det;
  inv12_ = -p_.s12 / det;
  inv22_ = p_.s11 / det;
  log_norm_ = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

void TrackModel::sample_initial(std::span<double> out, RngStream& rng) const {
  out[0] = rng.uniform(map_->lon_min, map_->lon_max);
  out[1] = rng.uniform(map_->lat_min, map_->lat_max);
}

void TrackModel::sample_proposal(std::span<const double> prev,
                                 const Matrix& obs_history,
                                 std::span<double> out, RngStream& rng) const {
  auto obs = obs_history.row(obs_history.rows - 1);
  double n1 = rng.normal(), n2 = rng.normal();
  out[0] = prev[0] + obs[1] * p_.dt + l11_ * n1;
  out[1] = prev[1] + obs[2] * p_.dt + l21_ * n1 + l22_ * n2;
}

double TrackModel::log_transition(std::span<const double> prev,
                                  std::span<const double> next,
                                  const Matrix& obs_history) const {
  auto obs = obs_history.row(obs_history.rows - 1);
  double dx = next[0] - (prev[0] + obs[1] * p_.dt);
  double dy = next[1] - (prev[1] + obs[2] * p_.dt);
  double quad = dx * dx * inv11_ + 2.0 * dx * dy * inv12_ + dy * dy * inv22_;
  return log_norm_ - 0.5 * quad;
}

double TrackModel::log_observation(std::span<const double> obs,
                                   std::span<const double> state) const {
  if (!map_->inside(state[0], state[1])) return kNegInf;
  double predicted = p_.h - map_->eval(state[0], state[1]);
  return log_normal_pdf(obs[0], predicted, p_.sigma_h2);
}

std::size_t count_spatial_modes(const Matrix& states,
                                std::span<const double> weights,
                                const TerrainMap& map,
                                const ModeCountParams& params) {
  struct Cell {
    double weight = 0.0;
    std::size_t particles = 0;
  };
  const std::size_t cells_x = map.W - 1, cells_y = map.H - 1;
  std::unordered_map<std::size_t, Cell> occupied;
  for (std::size_t i = 0; i < states.rows; ++i) {
    double lon = states(i, 0), lat = states(i, 1);
    if (!map.inside(lon, lat)) continue;
    auto cx = std::min(std::size_t((lon - map.lon_min) / map.cell_width()),
                       cells_x - 1);
    auto cy = std::min(std::size_t((map.lat_max - lat) / map.cell_height()),
                       cells_y - 1);
    Cell& c = occupied[cy * cells_x + cx];
    c.weight += weights[i];
    c.particles += 1;
  }

  // cells holding only negligible mass must not bridge real modes together
  for (auto it = occupied.begin(); it != occupied.end();) {
    if (it->second.weight < params.cell_weight_floor)
      it = occupied.erase(it);
    else
      ++it;
  }

  // connected components over occupied cells, 8-neighborhood
  std::unordered_map<std::size_t, int> component;
  int n_comp = 0;
  std::vector<std::size_t> stack;
  for (const auto& [key, cell] : occupied) {
    if (component.count(key)) continue;
    int id = n_comp++;
    stack.push_back(key);
    component[key] = id;
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      std::size_t cx = cur % cells_x, cy = cur / cells_x;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if ((dx < 0 && cx == 0) || (dy < 0 && cy == 0)) continue;
          std::size_t nx = cx + dx, ny = cy + dy;
          if (nx >= cells_x || ny >= cells_y) continue;
          std::size_t nk = ny * cells_x + nx;
          if (!occupied.count(nk) || component.count(nk)) continue;
          component[nk] = id;
          stack.push_back(nk);
        }
      }
    }
  }

  struct Comp {
    double weight = 0.0;
    std::size_t particles = 0;
    std::vector<std::pair<double, double>> cells;  // (cx, cy)
  };
  std::vector<Comp> comps(n_comp);
  for (const auto& [key, cell] : occupied) {
    Comp& c = comps[component[key]];
    c.weight += cell.weight;
    c.particles += cell.particles;
    c.cells.emplace_back(double(key % cells_x), double(key / cells_x));
  }
  std::vector<Comp> kept;
  for (auto& c : comps)
    if (c.weight >= params.weight_floor && c.particles >= params.min_particles)
      kept.push_back(std::move(c));

  // merge components whose closest cells are within the separation threshold
  const std::size_t m = kept.size();
  std::vector<std::size_t> parent(m);
  for (std::size_t i = 0; i < m; ++i) parent[i] = i;
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  const double sep2 =
      params.min_separation_cells * params.min_separation_cells;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      bool close = false;
      for (const auto& ca : kept[a].cells) {
        for (const auto& cb : kept[b].cells) {
          double dx = ca.first - cb.first, dy = ca.second - cb.second;
          if (dx * dx + dy * dy <= sep2) {
            close = true;
            break;
          }
        }
        if (close) break;
      }
      if (close) parent[find(a)] = find(b);
    }
  }
  std::size_t modes = 0;
  for (std::size_t i = 0; i < m; ++i) modes += (find(i) == i);
  return modes;
}

}  // namespace smc
