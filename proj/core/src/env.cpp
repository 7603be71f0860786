#include <afglosa/env.hpp>

#include <afglosa/errors.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace afglosa {

ObservationVector Observation::to_array() const noexcept {
	return {distance, speed, accel, phase_remaining, wait, leader_speed, leader_gap,
		static_cast<double>(static_cast<int>(phase))};
}

Observation Observation::from_array(const ObservationVector& x) {
	if (x[7] != 0.0 && x[7] != 1.0) {
		throw std::invalid_argument("observation: phase code must be 0 or 1");
	}
	return {x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7] == 0.0 ? Phase::green : Phase::red};
}

ObservationVector normalize(const Observation& o, const ObservationScales& s) {
	return {o.distance / s.distance, o.speed / s.speed, o.accel / s.accel, o.phase_remaining / s.phase_remaining,
		o.wait / s.wait, o.leader_speed / s.leader_speed, o.leader_gap / s.leader_gap,
		static_cast<double>(static_cast<int>(o.phase))};
}

double wait_until_green(Phase phase, double remaining, double red_duration, WaitEncoding enc) noexcept {
	if (phase == Phase::red) {
		return remaining;
	}
	return enc == WaitEncoding::s2 ? remaining + red_duration : 0.0;
}

void RewardConfig::validate() const {
	if (!(v_min < v_max)) {
		throw ConfigError("reward: v_min must be < v_max");
	}
	if (!(stop_speed_threshold > 0.0)) {
		throw ConfigError("reward: stop_speed_threshold must be > 0");
	}
}

RewardBreakdown compute_reward(const Observation& obs, const HybridAction& act, double fuel_step,
	double speed_next, const RewardConfig& cfg, double control_step) {
	const double r1 = fuel_step;
	const double r2 = speed_next <= cfg.stop_speed_threshold ? cfg.stop_penalty : 0.0;
	double r3 = 0.0;
	if (act.gap_bit == 1) {
		const double aim = target_speed(obs.speed, act.accel_adv, control_step);
		r3 = (aim >= cfg.v_min && aim <= cfg.v_max) ? cfg.r3_good_control : cfg.r3_bad;
	} else {
		r3 = obs.speed < cfg.v_min ? cfg.r3_bad : cfg.r3_gap;
	}
	return {cfg.alpha * r1 + cfg.beta * r2 + cfg.omega * r3, r1, r2, r3};
}

EpisodeMetrics& EpisodeMetrics::operator+=(const EpisodeMetrics& o) noexcept {
	wti += o.wti;
	wco += o.wco;
	co2 += o.co2;
	fuel += o.fuel;
	return *this;
}

EpisodeMetrics accumulate_metrics(std::span<const TraceRow> trajectory, double stop_speed_threshold,
	const EmissionModel& em) {
	EpisodeMetrics m;
	bool stopped = false;
	for (const auto& row : trajectory) {
		const EmissionStep e = emission_step(row.speed, row.accel, 1.0, em);
		m.fuel += e.fuel;
		m.co2 += e.co2;
		const bool now = row.speed <= stop_speed_threshold;
		if (now) {
			m.wti += 1.0;
			if (!stopped) {
				m.wco += 1.0;
			}
		}
		stopped = now;
	}
	return m;
}

void EnvConfig::validate() const {
	scenario.validate();
	reward.validate();
	if (!(control_step > 0.0) || std::floor(control_step) != control_step) {
		throw ConfigError("env: control_step must be a positive whole number of seconds");
	}
	if (depart_window < 0) {
		throw ConfigError("env: depart_window must be >= 0");
	}
	if (!(horizon > 0.0)) {
		throw ConfigError("env: horizon must be > 0");
	}
}

// ---------------------------------------------------------------------------

GlosaEnv::GlosaEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
	cfg_.validate();
}

Observation GlosaEnv::reset(std::uint64_t seed, double density, std::optional<int> depart,
	std::optional<double> offset) {
	const auto& levels = cfg_.scenario.densities;
	if (std::none_of(levels.begin(), levels.end(), [&](double d) { return std::abs(d - density) < 1e-9; })) {
		throw ConfigError("env: density " + std::to_string(density) + " veh/h is not a configured level");
	}
	const double cycle = cfg_.scenario.green_duration + cfg_.scenario.red_duration;

	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> offset_dist(0.0, cycle);
	std::uniform_int_distribution<int> depart_dist(0, cfg_.depart_window);
	const double off = offset_dist(rng);
	const int dep = depart_dist(rng);
	const std::uint64_t world_seed = rng();

	SignalController sig{cfg_.scenario.green_duration, cfg_.scenario.red_duration, offset.value_or(off)};
	world_.emplace(cfg_.scenario, sig, world_seed, density);
	world_->warm_up(cycle);
	for (int k = 0; k < depart.value_or(dep); ++k) {
		world_->tick();
	}
	int blocked = 0;
	while (!world_->insert_cav()) {
		world_->tick();
		if (++blocked > 3600) {
			throw SimulationFault("env: CAV entry blocked for an hour of simulated time");
		}
	}

	law_ = CavLaw::idm();
	metrics_ = {};
	trace_.clear();
	frozen_signal_.reset();
	stopped_ = false;
	done_ = false;
	entry_time_ = world_->time();
	advisories_ = 0;
	decisions_ = 0;
	return observe();
}

bool GlosaEnv::in_guidance_zone() const {
	const VehicleState* c = world_ ? world_->cav() : nullptr;
	if (c == nullptr) {
		return false;
	}
	const RoadConfig& road = cfg_.scenario.road;
	return c->position <= road.stop_line_position &&
		road.stop_line_position - c->position <= road.guidance_zone_length;
}

double GlosaEnv::elapsed() const {
	return world_ ? world_->time() - entry_time_ : 0.0;
}

StepResult GlosaEnv::step(const HybridAction& act) {
	if (done_) {
		throw EpisodeFinished("env: step on a finished episode");
	}
	if (act.gap_bit != 0 && act.gap_bit != 1) {
		throw std::invalid_argument("env: gap_bit must be 0 or 1");
	}
	const Observation obs = observe();
	Command command = Command::keep;
	CavLaw law = law_;
	if (act.gap_bit == 1) {
		const double aim = target_speed(obs.speed, act.accel_adv, cfg_.control_step);
		const bool valid = aim >= cfg_.reward.v_min && aim <= cfg_.reward.v_max;
		command = valid ? Command::advise : Command::reject;
		law = valid ? CavLaw::track(aim, std::abs(act.accel_adv)) : CavLaw::idm();
	}
	if (!in_guidance_zone()) {
		law = CavLaw::idm();
		if (command == Command::advise) {
			command = Command::keep;
		}
	}
	return advance(act, command, law);
}

StepResult GlosaEnv::step_to_speed(double target) {
	if (done_) {
		throw EpisodeFinished("env: step on a finished episode");
	}
	const Observation obs = observe();
	const double limit = cfg_.scenario.cav_class.accel_max;
	HybridAction act;
	act.gap_bit = 1;
	act.accel_adv = std::clamp((target - obs.speed) / cfg_.control_step, -limit, limit);
	act.accel_sample = act.accel_adv;
	if (!in_guidance_zone()) {
		return advance(act, Command::keep, CavLaw::idm());
	}
	return advance(act, Command::advise, CavLaw::track(target, limit));
}

StepResult GlosaEnv::advance(const HybridAction& act, Command command, CavLaw law) {
	const Observation obs = observe();
	const RoadConfig& road = cfg_.scenario.road;
	const EmissionModel& em = cfg_.scenario.emission;
	++decisions_;
	if (command == Command::advise) {
		++advisories_;
	}
	law_ = law;

	EpisodeMetrics delta;
	const auto ticks = static_cast<int>(cfg_.control_step);
	for (int k = 0; k < ticks; ++k) {
		if (const VehicleState* c = world_->cav(); c != nullptr && c->position > road.stop_line_position) {
			law_ = CavLaw::idm();
		}
		world_->tick(1.0, law_);
		const VehicleState* c = world_->cav_exited() ? world_->cav_at_exit() : world_->cav();
		if (!frozen_signal_ && c->position > road.stop_line_position) {
			frozen_signal_ = world_->phase();
		}
		const double accel = world_->cav_tick_accel();
		const EmissionStep e = emission_step(c->speed, accel, 1.0, em);
		delta.fuel += e.fuel;
		delta.co2 += e.co2;
		const bool stopped = c->speed <= cfg_.reward.stop_speed_threshold;
		if (stopped) {
			delta.wti += 1.0;
			if (!stopped_) {
				delta.wco += 1.0;
			}
		}
		stopped_ = stopped;
		trace_.push_back({elapsed(), c->position, c->speed, accel, static_cast<int>(world_->phase().phase),
			metrics_.fuel + delta.fuel, act.gap_bit, act.gap_bit == 1 ? act.accel_adv : 0.0});
		if (world_->cav_exited()) {
			done_ = true;
			break;
		}
	}
	metrics_ += delta;
	if (elapsed() >= cfg_.horizon) {
		done_ = true;
	}

	const VehicleState* c = world_->cav_exited() ? world_->cav_at_exit() : world_->cav();
	const Observation next = observe_state(*c);
	const RewardBreakdown reward = compute_reward(obs, act, delta.fuel, next.speed, cfg_.reward, cfg_.control_step);
	return {next, reward, done_, delta, command == Command::advise, command == Command::reject};
}

Observation GlosaEnv::observe() const {
	if (!world_ || !world_->cav_inserted()) {
		throw EpisodeFinished("env: no episode in progress");
	}
	const VehicleState* c = world_->cav();
	if (c == nullptr) {
		throw EpisodeFinished("env: the CAV already left the route");
	}
	return observe_state(*c);
}

Observation GlosaEnv::observe_state(const VehicleState& cav) const {
	const RoadConfig& road = cfg_.scenario.road;
	Observation o;
	PhaseInfo ph = world_->phase();
	if (cav.position <= road.stop_line_position) {
		o.distance = road.stop_line_position - cav.position;
	} else {
		o.distance = std::max(0.0, road.route_length - cav.position);
		if (frozen_signal_) {
			ph = *frozen_signal_;
		}
	}
	o.speed = cav.speed;
	o.accel = world_->cav_tick_accel();
	o.phase = ph.phase;
	o.phase_remaining = ph.remaining;
	o.wait = wait_until_green(ph.phase, ph.remaining, cfg_.scenario.red_duration, cfg_.wait_encoding);

	o.leader_speed = road.speed_limit;
	o.leader_gap = road.detector_length;
	if (!world_->cav_exited()) {
		if (const VehicleState* lead = world_->cav_leader(); lead != nullptr) {
			const double gap = lead->rear() - cav.position;
			if (gap <= road.detector_length) {
				o.leader_speed = lead->speed;
				o.leader_gap = gap;
			}
		}
	}
	return o;
}

}  // namespace afglosa
