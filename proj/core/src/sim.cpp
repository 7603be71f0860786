#include <afglosa/sim.hpp>

#include <afglosa/errors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace afglosa {

namespace {

void require(bool cond, const char* what) {
	if (!cond) {
		throw ConfigError(what);
	}
}

}  // namespace

void VehicleClass::validate() const {
	require(accel_max > 0.0, "vehicle class: accel_max must be > 0");
	require(decel_max > 0.0, "vehicle class: decel_max must be > 0");
	require(length > 0.0, "vehicle class: length must be > 0");
	require(min_gap >= 0.0, "vehicle class: min_gap must be >= 0");
	require(spawn_probability >= 0.0 && spawn_probability <= 1.0,
		"vehicle class: spawn_probability must lie in [0, 1]");
}

std::vector<VehicleClass> default_hdv_classes() {
	return {
		{"A", 6.0, 6.0, 5.0, 2.0, 0.1},
		{"B", 5.0, 4.5, 5.0, 2.0, 0.2},
		{"C", 3.0, 5.0, 5.0, 2.0, 0.3},
		{"D", 3.0, 3.0, 5.0, 2.0, 0.3},
		{"F", 2.0, 1.5, 5.0, 2.0, 0.1},
	};
}

VehicleClass default_cav_class() {
	return {"CAV", 3.0, 3.0, 5.0, 2.0, 0.0};
}

void RoadConfig::validate() const {
	require(lanes >= 1, "road: lanes must be >= 1");
	require(speed_limit > 0.0, "road: speed_limit must be > 0");
	require(detector_length > 0.0, "road: detector_length must be > 0");
	require(guidance_zone_length > 0.0, "road: guidance_zone_length must be > 0");
	require(guidance_zone_length <= stop_line_position,
		"road: guidance_zone_length must not exceed stop_line_position");
	require(stop_line_position < route_length, "road: stop_line_position must be < route_length");
}

void SignalController::validate() const {
	require(green_duration > 0.0 && red_duration > 0.0, "signal: phase durations must be > 0");
	require(initial_offset >= 0.0 && initial_offset < cycle(), "signal: offset must lie in [0, cycle)");
}

PhaseInfo signal_phase(double t, const SignalController& sig) {
	const double cycle = sig.cycle();
	double u = std::fmod(t + sig.initial_offset, cycle);
	if (u < 0.0) {
		u += cycle;
	}
	if (u < sig.green_duration) {
		return {Phase::green, sig.green_duration - u};
	}
	return {Phase::red, cycle - u};
}

void EmissionModel::validate() const {
	require(idle_rate >= 0.0, "emission: idle_rate must be >= 0");
	require(co2_per_fuel > 0.0, "emission: co2_per_fuel must be > 0");
}

EmissionStep emission_step(double speed, double accel, double dt, const EmissionModel& em) {
	const double a = std::max(0.0, accel);
	const double v = speed;
	const double poly = em.c1 * v + em.c2 * v * v + em.c3 * v * v * v + em.c4 * a * v + em.c5 * a * a * v;
	const double fuel = dt * std::max(em.idle_rate, poly);
	return {fuel, em.co2_per_fuel * fuel};
}

void ScenarioConfig::validate() const {
	road.validate();
	SignalController{green_duration, red_duration, 0.0}.validate();
	emission.validate();
	cav_class.validate();
	require(!hdv_classes.empty(), "scenario: at least one HDV class is required");
	double total = 0.0;
	for (const auto& c : hdv_classes) {
		c.validate();
		total += c.spawn_probability;
	}
	require(std::abs(total - 1.0) < 1e-9, "scenario: HDV spawn probabilities must sum to 1");
	require(!densities.empty(), "scenario: densities must not be empty");
	for (double d : densities) {
		require(d >= 0.0, "scenario: densities must be >= 0");
	}
	require(substep > 0.0 && substep <= 1.0, "scenario: substep must lie in (0, 1]");
	require(idm.headway > 0.0 && idm.delta > 0.0, "scenario: IDM headway and delta must be > 0");
}

Obstacle as_obstacle(const VehicleState& v) noexcept {
	return {v.position, v.cls.length, v.speed};
}

Obstacle stop_line_obstacle(const RoadConfig& road) noexcept {
	return {road.stop_line_position, 0.0, 0.0};
}

double idm_acceleration(const VehicleState& ego, const std::optional<Obstacle>& leader,
	const RoadConfig& road, const IdmParams& idm) {
	const double a_max = ego.cls.accel_max;
	const double b = ego.cls.decel_max;
	const double v = ego.speed;

	double acc = a_max * (1.0 - std::pow(v / road.speed_limit, idm.delta));
	if (leader) {
		const double gap = leader->rear() - ego.position;
		if (gap < 0.0) {
			std::ostringstream msg;
			msg << "vehicle " << ego.id << " overlaps its leader (gap " << gap << " m)";
			throw SimulationFault(msg.str());
		}
		if (gap <= 0.0) {
			return -b;
		}
		const double dv = v - leader->speed;
		const double s_star = ego.cls.min_gap + std::max(0.0, v * idm.headway + v * dv / (2.0 * std::sqrt(a_max * b)));
		const double ratio = s_star / gap;
		acc -= a_max * ratio * ratio;
	}
	return std::clamp(acc, -b, a_max);
}

KinematicStep kinematic_step(double speed, double accel, double dt, double speed_cap) {
	const double next = std::clamp(speed + accel * dt, 0.0, speed_cap);
	return {next, 0.5 * (speed + next) * dt};
}

double safe_speed(double speed, double gap, double leader_travel, double leader_speed_next, double decel,
	double leader_decel, double h) noexcept {
	const double room = gap - kSafetyMargin + leader_travel + leader_speed_next * leader_speed_next / (2.0 * leader_decel) -
		0.5 * speed * h;
	if (room <= 0.0) {
		return 0.0;
	}
	const double bh = 0.5 * decel * h;
	return -bh + std::sqrt(bh * bh + 2.0 * decel * room);
}

double spawn_probability(double flow, int lanes, double dt) noexcept {
	return std::clamp(flow * dt / (3600.0 * lanes), 0.0, 1.0);
}

// ---------------------------------------------------------------------------

World::World(ScenarioConfig cfg, SignalController signal, std::uint64_t seed, double flow)
	: cfg_(std::move(cfg)), signal_(signal), rng_(seed), flow_(flow) {
	cfg_.validate();
	signal_.validate();
	if (flow_ < 0.0) {
		throw ConfigError("world: flow must be >= 0");
	}
	std::vector<double> weights;
	weights.reserve(cfg_.hdv_classes.size());
	for (const auto& c : cfg_.hdv_classes) {
		weights.push_back(c.spawn_probability);
	}
	class_dist_ = std::discrete_distribution<int>(weights.begin(), weights.end());
	lanes_.resize(static_cast<std::size_t>(cfg_.road.lanes));
}

bool World::entry_free(const VehicleClass& cls, int lane) const {
	const auto& q = lanes_[static_cast<std::size_t>(lane)];
	return q.empty() || q.back().rear() >= cls.min_gap;
}

double World::entry_speed(const VehicleClass& cls, int lane) const {
	const auto& q = lanes_[static_cast<std::size_t>(lane)];
	if (q.empty()) {
		return cfg_.road.speed_limit;
	}
	const auto& tail = q.back();
	const double spare = std::max(0.0, tail.rear() - cls.min_gap);
	const double tail_stop = tail.speed * tail.speed / (2.0 * tail.cls.decel_max);
	const double b = std::min(cls.decel_max, tail.cls.decel_max);
	const double v = std::sqrt(2.0 * b * (spare + tail_stop));
	return std::min(cfg_.road.speed_limit, v);
}

void World::insert_at_tail(VehicleState v) {
	v.id = next_id_++;
	++spawned_;
	lanes_[static_cast<std::size_t>(v.lane)].push_back(std::move(v));
}

std::vector<VehicleState> World::spawn_hdvs(double dt) {
	std::vector<VehicleState> spawned;
	const double p = spawn_probability(flow_, cfg_.road.lanes, dt);
	if (p <= 0.0) {
		return spawned;
	}
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	for (int lane = 0; lane < cfg_.road.lanes; ++lane) {
		if (unit(rng_) >= p) {
			continue;
		}
		const auto& cls = cfg_.hdv_classes[static_cast<std::size_t>(class_dist_(rng_))];
		if (!entry_free(cls, lane)) {
			continue;
		}
		VehicleState v;
		v.cls = cls;
		v.lane = lane;
		v.position = 0.0;
		v.speed = entry_speed(cls, lane);
		insert_at_tail(v);
		spawned.push_back(lanes_[static_cast<std::size_t>(lane)].back());
	}
	return spawned;
}

bool World::insert_cav() {
	if (cav_id_) {
		throw std::logic_error("world: CAV already inserted");
	}
	const int lane = cfg_.road.lanes / 2;
	if (!entry_free(cfg_.cav_class, lane)) {
		return false;
	}
	VehicleState v;
	v.cls = cfg_.cav_class;
	v.lane = lane;
	v.position = 0.0;
	v.speed = entry_speed(cfg_.cav_class, lane);
	v.is_cav = true;
	insert_at_tail(v);
	cav_id_ = lanes_[static_cast<std::size_t>(lane)].back().id;
	return true;
}

int World::place(VehicleState v) {
	if (v.lane < 0 || v.lane >= cfg_.road.lanes) {
		throw ConfigError("world: lane index out of range");
	}
	v.id = next_id_++;
	++spawned_;
	auto& q = lanes_[static_cast<std::size_t>(v.lane)];
	auto it = std::find_if(q.begin(), q.end(), [&](const VehicleState& o) { return o.position < v.position; });
	const int id = v.id;
	if (v.is_cav) {
		cav_id_ = id;
	}
	q.insert(it, std::move(v));
	return id;
}

void World::warm_up(double seconds) {
	const auto ticks = static_cast<long>(std::floor(seconds + 1e-9));
	for (long k = 0; k < ticks; ++k) {
		tick(1.0);
	}
}

void World::tick(double dt, const CavLaw& cav_law) {
	spawn_hdvs(dt);
	const VehicleState* cav_before = cav();
	const double v0 = cav_before ? cav_before->speed : 0.0;
	const bool had_cav = cav_before != nullptr;

	const double start = time_;
	const auto n = std::max<long>(1, std::lround(dt / cfg_.substep));
	const double h = dt / static_cast<double>(n);
	for (long k = 0; k < n; ++k) {
		time_ = start + static_cast<double>(k) * h;
		substep(h, cav_law);
	}
	time_ = start + dt;

	if (had_cav) {
		const VehicleState* now = cav();
		const double v1 = now ? now->speed : cav_at_exit_->speed;
		cav_tick_accel_ = (v1 - v0) / dt;
	}
}

void World::substep(double h, const CavLaw& cav_law) {
	const PhaseInfo ph = signal_phase(time_, signal_);
	const RoadConfig& road = cfg_.road;

	std::vector<std::vector<double>> accel(lanes_.size());
	for (std::size_t l = 0; l < lanes_.size(); ++l) {
		auto& q = lanes_[l];
		accel[l].resize(q.size());
		for (std::size_t i = 0; i < q.size(); ++i) {
			auto& ego = q[i];
			if (ph.phase == Phase::green) {
				ego.held_by_red = false;
			} else if (!ego.held_by_red && ego.position <= road.stop_line_position) {
				const double braking = ego.speed * ego.speed / (2.0 * ego.cls.decel_max);
				ego.held_by_red = braking <= road.stop_line_position - ego.position;
			}

			const double b = ego.cls.decel_max;
			std::optional<Obstacle> leader;
			double v_cap = road.speed_limit;
			if (i > 0) {
				const auto& lead = q[i - 1];
				leader = as_obstacle(lead);
				const KinematicStep lk = kinematic_step(lead.speed, accel[l][i - 1], h, road.speed_limit);
				// Planning with the weaker of the two braking limits keeps the
				// closest approach at the final stop; otherwise a hard-braking
				// follower can cross a softly braking leader mid-manoeuvre.
				const double b_plan = std::min(b, lead.cls.decel_max);
				v_cap = std::min(v_cap, safe_speed(ego.speed, lead.rear() - ego.position, lk.distance, lk.speed,
					b_plan, lead.cls.decel_max, h));
			}
			double a = idm_acceleration(ego, leader, road, cfg_.idm);
			if (ego.held_by_red) {
				Obstacle line = stop_line_obstacle(road);
				line.position = std::max(line.position, ego.position);
				a = std::min(a, idm_acceleration(ego, line, road, cfg_.idm));
				v_cap = std::min(v_cap, safe_speed(ego.speed, line.position - ego.position, 0.0, 0.0, b, b, h));
			}
			a = std::min(a, (v_cap - ego.speed) / h);
			if (ego.is_cav && cav_law.mode == CavLaw::Mode::track) {
				const double rate = std::abs(cav_law.rate);
				const double track = std::clamp((cav_law.target_speed - ego.speed) / h, -rate, rate);
				a = std::min(a, track);
			}
			accel[l][i] = std::clamp(a, -ego.cls.decel_max, ego.cls.accel_max);
		}
	}

	for (std::size_t l = 0; l < lanes_.size(); ++l) {
		auto& q = lanes_[l];
		for (std::size_t i = 0; i < q.size(); ++i) {
			auto& v = q[i];
			const KinematicStep ks = kinematic_step(v.speed, accel[l][i], h, road.speed_limit);
			v.speed = ks.speed;
			v.position += ks.distance;
			v.accel = accel[l][i];
		}
		for (std::size_t i = 1; i < q.size(); ++i) {
			const double gap = q[i - 1].rear() - q[i].position;
			if (gap < 0.0) {
				std::ostringstream msg;
				msg << "collision in lane " << l << " at t=" << time_ + h << ": vehicle " << q[i].id
					<< " ran into " << q[i - 1].id << " (gap " << gap << " m)";
				for (const VehicleState* v : {&q[i], &q[i - 1]}) {
					msg << "; " << v->id << (v->is_cav ? " cav" : " " + v->cls.name) << " x=" << v->position
						<< " v=" << v->speed << " a=" << v->accel;
				}
				throw SimulationFault(msg.str());
			}
		}
		while (!q.empty() && q.front().position > road.route_length) {
			if (q.front().is_cav) {
				cav_exited_ = true;
				cav_at_exit_ = q.front();
			}
			q.erase(q.begin());
			++exited_;
		}
	}
}

const VehicleState* World::cav() const noexcept {
	if (!cav_id_ || cav_exited_) {
		return nullptr;
	}
	for (const auto& q : lanes_) {
		for (const auto& v : q) {
			if (v.id == *cav_id_) {
				return &v;
			}
		}
	}
	return nullptr;
}

const VehicleState* World::cav_leader() const noexcept {
	const VehicleState* c = cav();
	if (c == nullptr) {
		return nullptr;
	}
	const auto& q = lanes_[static_cast<std::size_t>(c->lane)];
	for (std::size_t i = 1; i < q.size(); ++i) {
		if (q[i].id == c->id) {
			return &q[i - 1];
		}
	}
	return nullptr;
}

std::size_t World::active_count() const noexcept {
	return std::accumulate(lanes_.begin(), lanes_.end(), std::size_t{0},
		[](std::size_t n, const auto& q) { return n + q.size(); });
}

double World::min_gap() const noexcept {
	double best = std::numeric_limits<double>::infinity();
	for (const auto& q : lanes_) {
		for (std::size_t i = 1; i < q.size(); ++i) {
			best = std::min(best, q[i - 1].rear() - q[i].position);
		}
	}
	return best;
}

}  // namespace afglosa
