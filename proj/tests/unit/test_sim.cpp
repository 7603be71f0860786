#include <afglosa/errors.hpp>
#include <afglosa/sim.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

using namespace afglosa;

namespace {

VehicleState vehicle(const VehicleClass& cls, double pos, double speed, int lane = 0) {
	VehicleState v;
	v.cls = cls;
	v.lane = lane;
	v.position = pos;
	v.speed = speed;
	return v;
}

VehicleClass class_named(const std::string& name) {
	for (const auto& c : default_hdv_classes()) {
		if (c.name == name) {
			return c;
		}
	}
	throw std::runtime_error("no class " + name);
}

ScenarioConfig single_lane() {
	ScenarioConfig s;
	s.road.lanes = 1;
	return s;
}

}  // namespace

TEST(Signal, PhaseAtStartOfCycle) {
	const SignalController sig{20.0, 20.0, 0.0};
	auto p = signal_phase(0.0, sig);
	EXPECT_EQ(p.phase, Phase::green);
	EXPECT_DOUBLE_EQ(p.remaining, 20.0);
	p = signal_phase(20.0, sig);
	EXPECT_EQ(p.phase, Phase::red);
	EXPECT_DOUBLE_EQ(p.remaining, 20.0);
	p = signal_phase(55.0, sig);
	EXPECT_EQ(p.phase, Phase::green);
	EXPECT_DOUBLE_EQ(p.remaining, 5.0);
}

TEST(Signal, OffsetShiftsTheCycle) {
	const SignalController sig{20.0, 20.0, 25.0};
	const auto p = signal_phase(0.0, sig);
	EXPECT_EQ(p.phase, Phase::red);
	EXPECT_DOUBLE_EQ(p.remaining, 15.0);
}

TEST(Signal, RemainingStaysInsidePhase) {
	const SignalController sig{20.0, 20.0, 7.5};
	for (double t = 0.0; t < 400.0; t += 0.25) {
		const auto p = signal_phase(t, sig);
		EXPECT_GT(p.remaining, 0.0);
		EXPECT_LE(p.remaining, 20.0);
	}
}

TEST(Signal, RejectsOffsetOutsideCycle) {
	EXPECT_THROW((SignalController{20.0, 20.0, 40.0}.validate()), ConfigError);
	EXPECT_THROW((SignalController{0.0, 20.0, 0.0}.validate()), ConfigError);
}

TEST(Idm, FreeFlowEquilibrium) {
	const RoadConfig road;
	const auto ego = vehicle(class_named("D"), 100.0, 11.0);
	EXPECT_LT(std::abs(idm_acceleration(ego, std::nullopt, road)), 1e-6);
}

TEST(Idm, StandstillAtMinimumGap) {
	const RoadConfig road;
	const auto ego = vehicle(class_named("D"), 100.0, 0.0);
	const Obstacle lead{100.0 + 2.0 + 5.0, 5.0, 0.0};
	EXPECT_NEAR(idm_acceleration(ego, lead, road), 0.0, 1e-12);
}

TEST(Idm, FreeRoadAcceleration) {
	const RoadConfig road;
	const auto ego = vehicle(class_named("C"), 0.0, 5.0);  // accel_max 3
	EXPECT_NEAR(idm_acceleration(ego, std::nullopt, road), 2.871935, 1e-6);
}

TEST(Idm, ClampedToClassLimits) {
	const RoadConfig road;
	const auto ego = vehicle(class_named("F"), 0.0, 11.0);
	const Obstacle wall{3.0, 0.0, 0.0};
	EXPECT_DOUBLE_EQ(idm_acceleration(ego, wall, road), -1.5);
}

TEST(Idm, OverlapIsAFault) {
	const RoadConfig road;
	const auto ego = vehicle(class_named("D"), 100.0, 5.0);
	const Obstacle lead{102.0, 5.0, 0.0};
	EXPECT_THROW(idm_acceleration(ego, lead, road), SimulationFault);
}

TEST(Kinematics, ClampAndTrapezoid) {
	auto k = kinematic_step(0.0, -3.0, 1.0, 11.0);
	EXPECT_DOUBLE_EQ(k.speed, 0.0);
	EXPECT_DOUBLE_EQ(k.distance, 0.0);
	k = kinematic_step(8.0, 2.5, 1.0, 11.0);
	EXPECT_DOUBLE_EQ(k.speed, 10.5);
	EXPECT_DOUBLE_EQ(k.distance, 9.25);
	k = kinematic_step(10.0, 3.0, 1.0, 11.0);
	EXPECT_DOUBLE_EQ(k.speed, 11.0);
	EXPECT_DOUBLE_EQ(k.distance, 10.5);
}

TEST(SafeSpeed, BrakingEnvelopeHolds) {
	// The returned speed must satisfy the stopping inequality, with equality
	// whenever it is positive. Zero means even v' = 0 cannot satisfy it.
	std::mt19937_64 rng(11);
	std::uniform_real_distribution<double> u(0.0, 1.0);
	for (int k = 0; k < 20000; ++k) {
		const double v = 11.0 * u(rng);
		const double gap = 40.0 * u(rng);
		const double vl = 11.0 * u(rng);
		const double travel = vl * 0.1;
		const double b = 1.0 + 5.0 * u(rng);
		const double bl = 1.0 + 5.0 * u(rng);
		const double h = 0.1;
		const double vs = safe_speed(v, gap, travel, vl, b, bl, h);
		ASSERT_GE(vs, 0.0);
		const double need = 0.5 * (v + vs) * h + vs * vs / (2.0 * b);
		const double have = gap - kSafetyMargin + travel + vl * vl / (2.0 * bl);
		if (vs > 0.0) {
			EXPECT_NEAR(need, have, 1e-9);
		} else {
			EXPECT_LE(have, 0.5 * v * h + 1e-12);
		}
	}
}

TEST(Spawning, ProbabilityPerLane) {
	EXPECT_DOUBLE_EQ(spawn_probability(0.0, 3, 1.0), 0.0);
	EXPECT_NEAR(spawn_probability(3600.0, 3, 1.0), 1.0 / 3.0, 1e-15);
	EXPECT_DOUBLE_EQ(spawn_probability(1e9, 3, 1.0), 1.0);
}

TEST(Spawning, ZeroFlowNeverSpawns) {
	World w(ScenarioConfig{}, SignalController{}, 3, 0.0);
	for (int k = 0; k < 500; ++k) {
		EXPECT_TRUE(w.spawn_hdvs(1.0).empty());
	}
}

TEST(Spawning, ClassFrequenciesFollowTheMix) {
	ScenarioConfig s;
	World w(s, SignalController{1e6, 20.0, 0.0}, 5, 3600.0 * 3);
	std::map<std::string, long> count;
	long total = 0;
	while (total < 100000) {
		for (const auto& v : w.spawn_hdvs(1.0)) {
			++count[v.cls.name];
			++total;
		}
		w.tick(1.0);
	}
	EXPECT_NEAR(static_cast<double>(count["C"]) / total, 0.3, 0.01);
	EXPECT_NEAR(static_cast<double>(count["A"]) / total, 0.1, 0.01);
	EXPECT_NEAR(static_cast<double>(count["F"]) / total, 0.1, 0.01);
}

TEST(Emission, IdleFloor) {
	const EmissionModel em;
	const auto e = emission_step(0.0, 0.0, 1.0, em);
	EXPECT_DOUBLE_EQ(e.fuel, em.idle_rate);
}

TEST(Emission, Co2IsFixedMultipleOfFuel) {
	const EmissionModel em;
	std::mt19937_64 rng(2);
	std::uniform_real_distribution<double> v(0.0, 11.0);
	std::uniform_real_distribution<double> a(-3.0, 3.0);
	for (int k = 0; k < 1000; ++k) {
		const auto e = emission_step(v(rng), a(rng), 1.0, em);
		EXPECT_NEAR(e.co2 / e.fuel, 3.135, 1e-12);
	}
}

TEST(Emission, BrakingCostsNoMoreThanCruising) {
	const EmissionModel em;
	for (double v = 0.0; v <= 11.0; v += 0.5) {
		EXPECT_LE(emission_step(v, -2.0, 1.0, em).fuel, emission_step(v, 0.0, 1.0, em).fuel);
		EXPECT_GE(emission_step(v, 2.0, 1.0, em).fuel, emission_step(v, 0.0, 1.0, em).fuel);
	}
}

TEST(World, SingleVehicleReachesSpeedLimit) {
	World w(single_lane(), SignalController{1e6, 20.0, 0.0}, 1, 0.0);
	w.place(vehicle(class_named("D"), 0.0, 0.0));
	for (int k = 0; k < 30; ++k) {
		w.tick();
	}
	ASSERT_EQ(w.active_count(), 1u);
	EXPECT_GE(w.lanes()[0][0].speed, 0.98 * 11.0);
}

TEST(World, SingleVehicleStopsAtRed) {
	World w(single_lane(), SignalController{20.0, 1000.0, 20.0}, 1, 0.0);
	w.place(vehicle(class_named("D"), 400.0, 11.0));
	for (int k = 0; k < 60; ++k) {
		w.tick();
	}
	const auto& v = w.lanes()[0][0];
	EXPECT_LT(v.speed, 0.1);
	EXPECT_LE(v.position, 500.0);
	EXPECT_GE(v.position, 497.0);
}

TEST(World, VehicleTooCloseToStopRunsTheRed) {
	// 11 m/s with decel 1.5 needs ~40 m; 10 m out it cannot stop and is not held.
	World w(single_lane(), SignalController{20.0, 1000.0, 20.0}, 1, 0.0);
	w.place(vehicle(class_named("F"), 490.0, 11.0));
	for (int k = 0; k < 5; ++k) {
		w.tick();
	}
	EXPECT_GT(w.lanes()[0][0].position, 500.0);
}

TEST(World, QueueBehindStoppedLeaderKeepsGaps) {
	World w(single_lane(), SignalController{20.0, 1000.0, 20.0}, 1, 0.0);
	w.place(vehicle(class_named("F"), 300.0, 11.0));
	w.place(vehicle(class_named("A"), 280.0, 11.0));
	w.place(vehicle(class_named("F"), 262.0, 11.0));
	w.place(vehicle(class_named("B"), 240.0, 11.0));
	w.place(vehicle(class_named("C"), 225.0, 11.0));
	for (int k = 0; k < 120; ++k) {
		w.tick();
		EXPECT_GE(w.min_gap(), 0.0);
	}
	EXPECT_EQ(w.active_count(), 5u);
	for (const auto& v : w.lanes()[0]) {
		EXPECT_LT(v.speed, 0.1);
	}
}

TEST(World, VehiclesLeaveAtRouteEnd) {
	World w(single_lane(), SignalController{1e6, 20.0, 0.0}, 1, 0.0);
	w.place(vehicle(class_named("D"), 980.0, 11.0));
	w.tick();
	w.tick();
	EXPECT_EQ(w.active_count(), 0u);
	EXPECT_EQ(w.exited_count(), 1u);
}

TEST(World, CavInsertionAndExitSnapshot) {
	World w(ScenarioConfig{}, SignalController{1e6, 20.0, 0.0}, 1, 0.0);
	ASSERT_TRUE(w.insert_cav());
	ASSERT_NE(w.cav(), nullptr);
	EXPECT_EQ(w.cav()->lane, 1);
	EXPECT_THROW(w.insert_cav(), std::logic_error);
	while (!w.cav_exited()) {
		w.tick();
	}
	EXPECT_EQ(w.cav(), nullptr);
	ASSERT_NE(w.cav_at_exit(), nullptr);
	EXPECT_GT(w.cav_at_exit()->position, 994.9);
}

TEST(World, TrackLawFollowsTarget) {
	World w(ScenarioConfig{}, SignalController{1e6, 20.0, 0.0}, 1, 0.0);
	ASSERT_TRUE(w.insert_cav());
	for (int k = 0; k < 10; ++k) {
		w.tick();
	}
	ASSERT_NEAR(w.cav()->speed, 11.0, 1e-6);
	const CavLaw law = CavLaw::track(8.0, 1.0);
	w.tick(1.0, law);
	EXPECT_NEAR(w.cav()->speed, 10.0, 1e-9);
	EXPECT_NEAR(w.cav_tick_accel(), -1.0, 1e-9);
	w.tick(1.0, law);
	w.tick(1.0, law);
	w.tick(1.0, law);
	EXPECT_NEAR(w.cav()->speed, 8.0, 1e-9);
}

TEST(World, ZeroNegativeGapsUnderHeavyTraffic) {
	World w(ScenarioConfig{}, SignalController{20.0, 20.0, 0.0}, 17, 2700.0);
	for (int k = 0; k < 10000; ++k) {
		w.tick();
		ASSERT_GE(w.min_gap(), 0.0) << "tick " << k;
	}
	EXPECT_GT(w.exited_count(), 0u);
}

TEST(World, SoftBrakingLeadersAreNotRammed) {
	// Every other vehicle brakes four times harder than the one in front of it,
	// the case where ordered stopping points alone do not prevent a crossing.
	ScenarioConfig s;
	s.hdv_classes = {s.hdv_classes.front(), s.hdv_classes.back()};
	s.hdv_classes[0].decel_max = 6.0;
	s.hdv_classes[1].decel_max = 1.5;
	s.hdv_classes[0].spawn_probability = 0.5;
	s.hdv_classes[1].spawn_probability = 0.5;
	for (std::uint64_t seed = 1; seed <= 5; ++seed) {
		World w(s, SignalController{10.0, 10.0, 0.0}, seed, 3600.0);
		for (int k = 0; k < 3000; ++k) {
			w.tick();
			ASSERT_GE(w.min_gap(), 0.0) << "seed " << seed << " tick " << k;
		}
	}
}

TEST(World, SameSeedSameWorld) {
	World a(ScenarioConfig{}, SignalController{}, 99, 1200.0);
	World b(ScenarioConfig{}, SignalController{}, 99, 1200.0);
	for (int k = 0; k < 600; ++k) {
		a.tick();
		b.tick();
	}
	ASSERT_EQ(a.active_count(), b.active_count());
	for (std::size_t l = 0; l < a.lanes().size(); ++l) {
		for (std::size_t i = 0; i < a.lanes()[l].size(); ++i) {
			EXPECT_EQ(a.lanes()[l][i].position, b.lanes()[l][i].position);
			EXPECT_EQ(a.lanes()[l][i].speed, b.lanes()[l][i].speed);
		}
	}
}

TEST(Config, ScenarioValidation) {
	ScenarioConfig s;
	EXPECT_NO_THROW(s.validate());
	s.hdv_classes[0].spawn_probability = 0.5;
	EXPECT_THROW(s.validate(), ConfigError);
	s = {};
	s.substep = 0.0;
	EXPECT_THROW(s.validate(), ConfigError);
}
