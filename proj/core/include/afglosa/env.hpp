#pragma once

#include <afglosa/sim.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace afglosa {

/// Encoding of the wait-until-green feature while the light is green.
/// s1: zero. s2: remaining green plus the full red duration.
enum class WaitEncoding { s1, s2 };

inline constexpr std::size_t kObservationSize = 8;
using ObservationVector = std::array<double, kObservationSize>;

/// CAV-centric state: [l, v, a, m, w, pre_v, pre_d, p].
struct Observation {
	double distance = 0.0;         // to the stop line; to the route end once crossed
	double speed = 0.0;
	double accel = 0.0;
	double phase_remaining = 0.0;  // m
	double wait = 0.0;             // w
	double leader_speed = 0.0;
	double leader_gap = 0.0;
	Phase phase = Phase::green;

	[[nodiscard]] ObservationVector to_array() const noexcept;
	static Observation from_array(const ObservationVector& x);
};

/// Fixed per-feature scales that bring network inputs to order one.
struct ObservationScales {
	double distance = 240.0;
	double speed = 11.0;
	double accel = 3.0;
	double phase_remaining = 40.0;
	double wait = 40.0;
	double leader_speed = 11.0;
	double leader_gap = 300.0;
};

ObservationVector normalize(const Observation& obs, const ObservationScales& scales);

/// Wait-until-green value implied by a phase and its remaining time.
double wait_until_green(Phase phase, double remaining, double red_duration, WaitEncoding enc) noexcept;

/// Discrete advisory bit plus continuous acceleration, with the
/// log-probabilities the behaviour policy assigned to them.
struct HybridAction {
	int gap_bit = 0;          // 1 = issue an advisory now
	double accel_adv = 0.0;   // m/s^2, in [-3, 3]
	double logp_d = 0.0;
	double logp_c = 0.0;
	double accel_sample = 0.0;  // Gaussian draw before clipping to [-3, 3]
};

struct RewardConfig {
	double alpha = -0.1;
	double beta = 0.6;
	double omega = 10.0;
	double stop_penalty = -200.0;
	double stop_speed_threshold = 0.1;
	double r3_good_control = 5.0;
	double r3_bad = -2.0;
	double r3_gap = 4.0;
	double v_min = 4.0;
	double v_max = 11.0;

	void validate() const;
};

struct RewardBreakdown {
	double total;
	double r1;
	double r2;
	double r3;
};

/// Speed the advisory aims for at the end of the control step.
[[nodiscard]] inline double target_speed(double speed, double accel_adv, double control_step) noexcept {
	return speed + accel_adv * control_step;
}

RewardBreakdown compute_reward(const Observation& obs, const HybridAction& act, double fuel_step,
	double speed_next, const RewardConfig& cfg, double control_step);

struct EpisodeMetrics {
	double wti = 0.0;   // s stopped
	double wco = 0.0;   // stop events
	double co2 = 0.0;   // mg
	double fuel = 0.0;  // mg

	EpisodeMetrics& operator+=(const EpisodeMetrics& o) noexcept;
	friend bool operator==(const EpisodeMetrics&, const EpisodeMetrics&) = default;
};

/// One simulated second of the CAV's trip.
struct TraceRow {
	double t;         // s since the CAV entered
	double position;  // m
	double speed;     // m/s at the end of the second
	double accel;     // mean m/s^2 over the second
	int phase;        // 0 green, 1 red
	double fuel_cum;  // mg
	int gap_bit;
	double accel_adv;
};

/// Rebuild metrics from a 1 s trajectory.
EpisodeMetrics accumulate_metrics(std::span<const TraceRow> trajectory, double stop_speed_threshold,
	const EmissionModel& em);

struct EnvConfig {
	ScenarioConfig scenario;
	RewardConfig reward;
	ObservationScales scales;
	WaitEncoding wait_encoding = WaitEncoding::s2;
	double control_step = 2.0;     // s between decisions
	int depart_window = 40;        // CAV entry drawn uniformly from {0..window} s after warm-up
	double horizon = 400.0;        // s after CAV entry

	void validate() const;
};

struct StepResult {
	Observation obs;
	RewardBreakdown reward;
	bool done;
	EpisodeMetrics delta;
	bool advisory_applied;   // a valid advisory changed the CAV's target this step
	bool advisory_rejected;  // gap_bit was 1 but the target speed was out of range
};

/// Episode driver around a World. The CAV is the only controlled vehicle.
class GlosaEnv {
public:
	explicit GlosaEnv(EnvConfig cfg);

	/// Fresh world. `depart` and `offset` override the random draws.
	Observation reset(std::uint64_t seed, double density, std::optional<int> depart = {},
		std::optional<double> offset = {});

	StepResult step(const HybridAction& act);
	/// Single advisory that sets the target speed directly, tracked at the
	/// CAV's acceleration limit. Used by the rule-based baseline.
	StepResult step_to_speed(double target);

	[[nodiscard]] Observation observe() const;
	[[nodiscard]] ObservationVector normalized(const Observation& obs) const { return normalize(obs, cfg_.scales); }

	[[nodiscard]] bool done() const noexcept { return done_; }
	[[nodiscard]] const EpisodeMetrics& metrics() const noexcept { return metrics_; }
	[[nodiscard]] const std::vector<TraceRow>& trace() const noexcept { return trace_; }
	[[nodiscard]] const World& world() const { return *world_; }
	[[nodiscard]] const EnvConfig& config() const noexcept { return cfg_; }
	[[nodiscard]] int advisory_count() const noexcept { return advisories_; }
	[[nodiscard]] int decision_count() const noexcept { return decisions_; }
	[[nodiscard]] bool in_guidance_zone() const;
	[[nodiscard]] double elapsed() const;

private:
	enum class Command { keep, advise, reject };
	StepResult advance(const HybridAction& act, Command command, CavLaw law);
	[[nodiscard]] Observation observe_state(const VehicleState& cav) const;

	EnvConfig cfg_;
	std::optional<World> world_;
	CavLaw law_;
	EpisodeMetrics metrics_;
	std::vector<TraceRow> trace_;
	std::optional<PhaseInfo> frozen_signal_;
	bool stopped_ = false;
	bool done_ = true;
	double entry_time_ = 0.0;
	int advisories_ = 0;
	int decisions_ = 0;
};

}  // namespace afglosa
