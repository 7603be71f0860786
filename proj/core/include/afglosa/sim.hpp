#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace afglosa {

// ---------------------------------------------------------------------------
// Static scenario description
// ---------------------------------------------------------------------------

struct VehicleClass {
	std::string name;
	double accel_max = 3.0;  // m/s^2
	double decel_max = 3.0;  // m/s^2
	double length = 5.0;     // m
	double min_gap = 2.0;    // m
	double spawn_probability = 0.0;

	void validate() const;
};

/// The five human-driven classes A/B/C/D/F.
std::vector<VehicleClass> default_hdv_classes();
/// The controlled vehicle: +-3 m/s^2, 5 m long, 2 m standstill gap.
VehicleClass default_cav_class();

struct RoadConfig {
	double route_length = 994.9;
	double stop_line_position = 500.0;
	double speed_limit = 11.0;
	int lanes = 3;
	double detector_length = 300.0;
	double guidance_zone_length = 240.0;

	void validate() const;
};

/// Fixed-time two-phase signal. There is no amber.
struct SignalController {
	double green_duration = 20.0;
	double red_duration = 20.0;
	double initial_offset = 0.0;  // in [0, cycle)

	[[nodiscard]] double cycle() const noexcept { return green_duration + red_duration; }
	void validate() const;
};

enum class Phase : int { green = 0, red = 1 };

struct PhaseInfo {
	Phase phase;
	double remaining;  // seconds until the next phase boundary, in (0, phase duration]
};

PhaseInfo signal_phase(double t, const SignalController& sig);

/// Instantaneous fuel model:
///   rate = max(idle, c1 v + c2 v^2 + c3 v^3 + c4 a+ v + c5 a+^2 v)   [mg/s]
/// CO2 is a fixed mass multiple of fuel.
struct EmissionModel {
	double idle_rate = 300.0;
	double c1 = 40.0;
	double c2 = 0.0;
	double c3 = 0.25;
	double c4 = 100.0;
	double c5 = 20.0;
	double co2_per_fuel = 3.135;

	void validate() const;
};

struct EmissionStep {
	double fuel;  // mg
	double co2;   // mg
};

EmissionStep emission_step(double speed, double accel, double dt, const EmissionModel& em);

struct IdmParams {
	double headway = 1.0;  // desired time gap T [s]
	double delta = 4.0;    // free-road exponent
};

struct ScenarioConfig {
	RoadConfig road;
	double green_duration = 20.0;
	double red_duration = 20.0;
	std::vector<VehicleClass> hdv_classes = default_hdv_classes();
	VehicleClass cav_class = default_cav_class();
	EmissionModel emission;
	IdmParams idm;
	std::vector<double> densities{300.0, 1200.0, 2700.0};
	double substep = 0.1;  // internal integration step [s]

	void validate() const;
};

// ---------------------------------------------------------------------------
// Vehicles and the car-following law
// ---------------------------------------------------------------------------

struct VehicleState {
	int id = 0;
	VehicleClass cls;
	int lane = 0;
	double position = 0.0;  // front bumper, m from route origin
	double speed = 0.0;
	double accel = 0.0;
	bool is_cav = false;
	bool held_by_red = false;  // committed to stopping at the line for the current red

	[[nodiscard]] double rear() const noexcept { return position - cls.length; }
};

/// Anything a vehicle can follow: another vehicle or the stop line during red.
struct Obstacle {
	double position;  // front of the obstacle
	double length;
	double speed;

	[[nodiscard]] double rear() const noexcept { return position - length; }
};

Obstacle as_obstacle(const VehicleState& v) noexcept;
/// Zero-length standing obstacle located at the stop line.
Obstacle stop_line_obstacle(const RoadConfig& road) noexcept;

/// IDM acceleration with desired speed road.speed_limit, clamped to the
/// class limits. Throws SimulationFault if the leader overlaps the ego vehicle.
double idm_acceleration(const VehicleState& ego, const std::optional<Obstacle>& leader,
	const RoadConfig& road, const IdmParams& idm = {});

struct KinematicStep {
	double speed;
	double distance;
};

/// Clamped speed update with trapezoidal position update.
KinematicStep kinematic_step(double speed, double accel, double dt, double speed_cap);

inline constexpr double kSafetyMargin = 1e-3;  // m

/// Highest speed at the end of a step of length `h` from which the follower,
/// braking at `decel`, can still stop behind a leader that brakes at
/// `leader_decel` from now on. `leader_travel` and `leader_speed_next`
/// describe the leader's own step. Keeps mixed-braking traffic collision-free.
double safe_speed(double speed, double gap, double leader_travel, double leader_speed_next, double decel,
	double leader_decel, double h) noexcept;

/// Per-lane per-step spawn probability for a total flow in vehicles/hour.
double spawn_probability(double flow, int lanes, double dt) noexcept;

/// How the world drives the CAV during a tick.
struct CavLaw {
	enum class Mode { idm, track };
	Mode mode = Mode::idm;
	double target_speed = 0.0;
	double rate = 0.0;  // |accel| used while tracking the target

	static CavLaw idm() { return {}; }
	static CavLaw track(double target, double rate) { return {Mode::track, target, rate}; }
};

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

/// Single-route, multi-lane microscopic world. Lanes are independent
/// single-file queues; within a lane vehicles are ordered front to back.
class World {
public:
	World(ScenarioConfig cfg, SignalController signal, std::uint64_t seed, double flow);

	/// Advance one observable tick: spawn, integrate in substeps, remove exits.
	void tick(double dt = 1.0, const CavLaw& cav_law = {});

	/// Run the spawner and dynamics with no CAV present.
	void warm_up(double seconds);

	/// Insert the CAV at the route origin of the middle lane. Returns false if
	/// the entry is blocked this tick.
	bool insert_cav();

	/// Insert a vehicle at an arbitrary position (scenario construction and tests).
	/// Returns the assigned id.
	int place(VehicleState v);

	/// Draw this tick's HDV arrivals and insert the ones whose entry is free.
	std::vector<VehicleState> spawn_hdvs(double dt);

	[[nodiscard]] double time() const noexcept { return time_; }
	[[nodiscard]] const ScenarioConfig& config() const noexcept { return cfg_; }
	[[nodiscard]] const SignalController& signal() const noexcept { return signal_; }
	[[nodiscard]] PhaseInfo phase() const { return signal_phase(time_, signal_); }
	[[nodiscard]] const std::vector<std::vector<VehicleState>>& lanes() const noexcept { return lanes_; }

	[[nodiscard]] const VehicleState* cav() const noexcept;
	[[nodiscard]] bool cav_inserted() const noexcept { return cav_id_.has_value(); }
	[[nodiscard]] bool cav_exited() const noexcept { return cav_exited_; }
	/// CAV state at the moment it left the route.
	[[nodiscard]] const VehicleState* cav_at_exit() const noexcept { return cav_at_exit_ ? &*cav_at_exit_ : nullptr; }
	/// Nearest vehicle ahead of the CAV in its lane, if any.
	[[nodiscard]] const VehicleState* cav_leader() const noexcept;
	/// Average CAV acceleration over the last tick.
	[[nodiscard]] double cav_tick_accel() const noexcept { return cav_tick_accel_; }

	[[nodiscard]] std::size_t active_count() const noexcept;
	[[nodiscard]] std::size_t spawned_count() const noexcept { return spawned_; }
	[[nodiscard]] std::size_t exited_count() const noexcept { return exited_; }
	/// Smallest bumper gap between consecutive same-lane vehicles (+inf if none).
	[[nodiscard]] double min_gap() const noexcept;

private:
	void substep(double h, const CavLaw& cav_law);
	double entry_speed(const VehicleClass& cls, int lane) const;
	bool entry_free(const VehicleClass& cls, int lane) const;
	void insert_at_tail(VehicleState v);

	ScenarioConfig cfg_;
	SignalController signal_;
	std::mt19937_64 rng_;
	std::discrete_distribution<int> class_dist_;
	double flow_;
	double time_ = 0.0;
	int next_id_ = 1;
	std::size_t spawned_ = 0;
	std::size_t exited_ = 0;
	std::vector<std::vector<VehicleState>> lanes_;
	std::optional<int> cav_id_;
	bool cav_exited_ = false;
	std::optional<VehicleState> cav_at_exit_;
	double cav_tick_accel_ = 0.0;
};

}  // namespace afglosa
