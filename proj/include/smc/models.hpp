#pragma once

#include <array>
#include <string>
#include <vector>

#include "smc/matrix.hpp"
#include "smc/rng.hpp"
#include "smc/state_model.hpp"

namespace smc {

// ---------------------------------------------------------------- GMM data

struct GmmSpec {
  Matrix means;  // k x d
  double sigma2 = 0.1;
  std::size_t points_per_cluster = 100;
};

// The four-cluster benchmark layout.
GmmSpec benchmark_gmm_spec();

struct GmmSample {
  Matrix points;
  std::vector<std::uint32_t> labels;
};

GmmSample simulate_gmm(const GmmSpec& spec, RngStream& rng);

// ------------------------------------------------- stochastic volatility

struct SvParams {
  double phi = 0.8;
  double sigma2 = 0.9;
  double beta = 0.7;
  std::size_t T = 40;
};

struct SvSample {
  std::vector<double> states;  // x_1..x_T
  Matrix observations;         // T x 1
};

// x_1 ~ N(0, sigma2/(1-phi^2)), x_t = phi x_{t-1} + sigma eps_t,
// y_t = beta exp(x_t/2) eta_t.
SvSample simulate_sv(const SvParams& params, RngStream& rng);

// Bootstrap adapter. The initial draw is the stationary AR(1) law, so the
// time-1 marginal matches the simulator's x_1.
class SvModel : public StateSpaceModel {
 public:
  explicit SvModel(const SvParams& params);

  std::size_t state_dim() const override { return 1; }
  void sample_initial(std::span<double> out, RngStream& rng) const override;
  void sample_proposal(std::span<const double> prev, const Matrix& obs_history,
                       std::span<double> out, RngStream& rng) const override;
  double log_transition(std::span<const double> prev,
                        std::span<const double> next,
                        const Matrix& obs_history) const override;
  // y | x ~ N(0, beta^2 e^x)
  double log_observation(std::span<const double> obs,
                         std::span<const double> state) const override;

 private:
  SvParams p_;
  double stationary_var_;
};

// ------------------------------------------------------------- terrain map

struct TerrainMap {
  std::size_t H = 0, W = 0;
  double lon_min = 0, lon_max = 1, lat_min = 0, lat_max = 1;
  Matrix grid;  // H x W altitudes, row 0 at lat_max, rows go south

  bool inside(double lon, double lat) const {
    return lon >= lon_min && lon <= lon_max && lat >= lat_min &&
           lat <= lat_max;
  }
  // Bilinear interpolation; exact at grid nodes. Throws OutOfBoundsError
  // outside the box.
  double eval(double lon, double lat) const;

  double cell_width() const { return (lon_max - lon_min) / double(W - 1); }
  double cell_height() const { return (lat_max - lat_min) / double(H - 1); }
};

TerrainMap read_terrain(const std::string& path);
void write_terrain(const TerrainMap& map, const std::string& path);

struct TerrainBump {
  double lon = 0, lat = 0;
  double amplitude = 1, radius = 0.1;
};

// Sum of Gaussian bumps sampled onto an H x W node grid.
TerrainMap synth_terrain(const std::vector<TerrainBump>& bumps, std::size_t H,
                         std::size_t W, double lon_min, double lon_max,
                         double lat_min, double lat_max);

// ----------------------------------------------------------- terrain track

struct TrackParams {
  double h = 3000.0;       // cruise altitude above sea level
  double sigma_h2 = 400.0; // altimeter noise variance
  // velocity/transition noise covariance, SPD
  double s11 = 1e-4, s12 = 0.0, s22 = 1e-4;
  double dt = 1.0;
};

struct PathSpec {
  double start_lon = 0, start_lat = 0;
  Matrix velocities;  // T x 2 true velocities per step
};

struct TrackSample {
  Matrix true_path;     // T x 2 positions after each step
  Matrix observations;  // T x 3 columns (h, vx, vy)
};

// Observed velocity = true velocity + N(0, Sigma); observed altimeter
// reading h_t = h - Z(x_t) + N(0, sigma_h2). Throws OutOfBoundsError if the
// true path leaves the map box.
TrackSample simulate_track(const TerrainMap& map, const TrackParams& params,
                           const PathSpec& path, RngStream& rng);

// Bootstrap adapter: x_0 ~ Uniform(box); x_t = x_{t-1} + v_t dt + eps,
// eps ~ N(0, Sigma) with v_t read from the current observation row; altimeter
// likelihood N(h_t; h - Z(x_t), sigma_h2); particles outside the box get
// log-weight -inf.
class TrackModel : public StateSpaceModel {
 public:
  TrackModel(const TerrainMap& map, const TrackParams& params);

  std::size_t state_dim() const override { return 2; }
  void sample_initial(std::span<double> out, RngStream& rng) const override;
  void sample_proposal(std::span<const double> prev, const Matrix& obs_history,
                       std::span<double> out, RngStream& rng) const override;
  double log_transition(std::span<const double> prev,
                        std::span<const double> next,
                        const Matrix& obs_history) const override;
  double log_observation(std::span<const double> obs,
                         std::span<const double> state) const override;

 private:
  const TerrainMap* map_;
  TrackParams p_;
  double l11_, l21_, l22_;  // cholesky of Sigma
  double inv11_, inv12_, inv22_, log_norm_;
};

// ------------------------------------------------- posterior mode counting

struct ModeCountParams {
  double min_separation_cells = 5.0;  // closer components merge into one mode
  double weight_floor = 1e-7;         // drop near-zero-mass components
  double cell_weight_floor = 1e-6;    // cells below this mass are unoccupied
  std::size_t min_particles = 3;
};

// Number of well-separated spatial posterior modes: particles binned into
// terrain cells, cells below the mass floor discarded, the rest joined by
// 8-neighborhood into components, tiny components dropped, components closer
// than the separation threshold merged.
std::size_t count_spatial_modes(const Matrix& states,
                                std::span<const double> weights,
                                const TerrainMap& map,
                                const ModeCountParams& params = {});

}  // namespace smc
