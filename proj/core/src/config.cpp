#include <afglosa/config.hpp>

#include <afglosa/errors.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace afglosa {

using nlohmann::json;

namespace {

/// Reads the fields of one JSON object and remembers which ones were used.
class Fields {
public:
	Fields(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
		if (!j_.is_object()) {
			throw ConfigError(ctx_ + ": expected an object");
		}
	}

	template <class T>
	void get(const char* key, T& dst) {
		if (!j_.contains(key)) {
			return;
		}
		seen_.insert(key);
		try {
			dst = j_.at(key).get<T>();
		} catch (const json::exception& e) {
			throw ConfigError(ctx_ + "." + key + ": " + e.what());
		}
	}

	const json* sub(const char* key) {
		if (!j_.contains(key)) {
			return nullptr;
		}
		seen_.insert(key);
		return &j_.at(key);
	}

	std::string path(const char* key) const { return ctx_ + "." + key; }

	void finish() const {
		for (const auto& [k, v] : j_.items()) {
			if (!seen_.count(k)) {
				throw ConfigError(ctx_ + ": unknown field '" + k + "'");
			}
		}
	}

private:
	const json& j_;
	std::string ctx_;
	std::set<std::string> seen_;
};

json parse(const std::string& text, const std::string& what) {
	try {
		return json::parse(text);
	} catch (const json::parse_error& e) {
		throw ConfigError(what + ": " + e.what());
	}
}

std::string slurp(const std::string& path) {
	std::ifstream in(path);
	if (!in) {
		throw ConfigError("cannot read " + path);
	}
	std::ostringstream s;
	s << in.rdbuf();
	return s.str();
}

VehicleClass read_class(const json& j, const std::string& ctx) {
	VehicleClass c;
	Fields f(j, ctx);
	f.get("name", c.name);
	f.get("accel_max", c.accel_max);
	f.get("decel_max", c.decel_max);
	f.get("length", c.length);
	f.get("min_gap", c.min_gap);
	f.get("spawn_probability", c.spawn_probability);
	f.finish();
	return c;
}

json write_class(const VehicleClass& c) {
	return {{"name", c.name}, {"accel_max", c.accel_max}, {"decel_max", c.decel_max}, {"length", c.length},
		{"min_gap", c.min_gap}, {"spawn_probability", c.spawn_probability}};
}

ScenarioConfig read_scenario(const json& j) {
	ScenarioConfig s;
	Fields f(j, "scenario");
	if (const json* r = f.sub("road")) {
		Fields fr(*r, "scenario.road");
		fr.get("route_length", s.road.route_length);
		fr.get("stop_line_position", s.road.stop_line_position);
		fr.get("speed_limit", s.road.speed_limit);
		fr.get("lanes", s.road.lanes);
		fr.get("detector_length", s.road.detector_length);
		fr.get("guidance_zone_length", s.road.guidance_zone_length);
		fr.finish();
	}
	if (const json* g = f.sub("signal")) {
		Fields fs(*g, "scenario.signal");
		fs.get("green_duration", s.green_duration);
		fs.get("red_duration", s.red_duration);
		fs.finish();
	}
	if (const json* h = f.sub("hdv_classes")) {
		if (!h->is_array()) {
			throw ConfigError("scenario.hdv_classes: expected an array");
		}
		s.hdv_classes.clear();
		for (std::size_t i = 0; i < h->size(); ++i) {
			s.hdv_classes.push_back(read_class((*h)[i], "scenario.hdv_classes[" + std::to_string(i) + "]"));
		}
	}
	if (const json* c = f.sub("cav_class")) {
		s.cav_class = read_class(*c, "scenario.cav_class");
	}
	if (const json* e = f.sub("emission")) {
		Fields fe(*e, "scenario.emission");
		fe.get("idle_rate", s.emission.idle_rate);
		fe.get("c1", s.emission.c1);
		fe.get("c2", s.emission.c2);
		fe.get("c3", s.emission.c3);
		fe.get("c4", s.emission.c4);
		fe.get("c5", s.emission.c5);
		fe.get("co2_per_fuel", s.emission.co2_per_fuel);
		fe.finish();
	}
	if (const json* m = f.sub("idm")) {
		Fields fi(*m, "scenario.idm");
		fi.get("headway", s.idm.headway);
		fi.get("delta", s.idm.delta);
		fi.finish();
	}
	f.get("densities", s.densities);
	f.get("substep", s.substep);
	f.finish();
	s.validate();
	return s;
}

json write_scenario(const ScenarioConfig& s) {
	json classes = json::array();
	for (const auto& c : s.hdv_classes) {
		classes.push_back(write_class(c));
	}
	return {
		{"road", {{"route_length", s.road.route_length}, {"stop_line_position", s.road.stop_line_position},
					 {"speed_limit", s.road.speed_limit}, {"lanes", s.road.lanes},
					 {"detector_length", s.road.detector_length},
					 {"guidance_zone_length", s.road.guidance_zone_length}}},
		{"signal", {{"green_duration", s.green_duration}, {"red_duration", s.red_duration}}},
		{"hdv_classes", classes},
		{"cav_class", write_class(s.cav_class)},
		{"emission", {{"idle_rate", s.emission.idle_rate}, {"c1", s.emission.c1}, {"c2", s.emission.c2},
						 {"c3", s.emission.c3}, {"c4", s.emission.c4}, {"c5", s.emission.c5},
						 {"co2_per_fuel", s.emission.co2_per_fuel}}},
		{"idm", {{"headway", s.idm.headway}, {"delta", s.idm.delta}}},
		{"densities", s.densities},
		{"substep", s.substep},
	};
}

WaitEncoding wait_from_string(const std::string& s) {
	if (s == "s1") return WaitEncoding::s1;
	if (s == "s2") return WaitEncoding::s2;
	throw ConfigError("env.wait_encoding: expected 's1' or 's2', got '" + s + "'");
}

BatchingMode batching_from_string(const std::string& s) {
	if (s == "epochs") return BatchingMode::epochs;
	if (s == "sampled") return BatchingMode::sampled;
	throw ConfigError("trainer.batching: expected 'epochs' or 'sampled', got '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
	env.validate();
	trainer.validate();
	if (eval_repeats < 1) {
		throw ConfigError("eval_repeats must be >= 1");
	}
	if (densities.empty()) {
		throw ConfigError("densities must not be empty");
	}
	if (checkpoint_every < 0) {
		throw ConfigError("checkpoint_every must be >= 0");
	}
	if (threads < 1) {
		throw ConfigError("threads must be >= 1");
	}
	const auto& levels = env.scenario.densities;
	auto known = [&](double d) {
		for (double l : levels) {
			if (std::abs(l - d) < 1e-9) return true;
		}
		return false;
	};
	for (double d : densities) {
		if (!known(d)) {
			throw ConfigError("density " + std::to_string(d) + " is not one of the scenario's levels");
		}
	}
	if (!known(trainer.density)) {
		throw ConfigError("trainer.density is not one of the scenario's levels");
	}
}

ScenarioConfig parse_scenario(const std::string& json_text) {
	return read_scenario(parse(json_text, "scenario"));
}

ScenarioConfig load_scenario(const std::string& path) {
	return parse_scenario(slurp(path));
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
	const json j = parse(json_text, "run config");
	RunConfig c;
	Fields f(j, "run");
	if (const json* s = f.sub("scenario")) {
		if (s->is_string()) {
			std::filesystem::path p = s->get<std::string>();
			if (p.is_relative()) {
				p = std::filesystem::path(base_dir) / p;
			}
			c.scenario_path = p.lexically_normal().string();
			c.env.scenario = load_scenario(c.scenario_path);
		} else {
			c.env.scenario = read_scenario(*s);
		}
	}
	std::string method = to_string(c.method);
	f.get("method", method);
	c.method = method_from_string(method);
	f.get("densities", c.densities);
	f.get("eval_repeats", c.eval_repeats);
	f.get("seed", c.seed);
	f.get("out", c.out_dir);
	f.get("checkpoint_every", c.checkpoint_every);
	f.get("threads", c.threads);

	if (const json* e = f.sub("env")) {
		Fields fe(*e, "run.env");
		fe.get("control_step", c.env.control_step);
		fe.get("depart_window", c.env.depart_window);
		fe.get("horizon", c.env.horizon);
		std::string w = c.env.wait_encoding == WaitEncoding::s1 ? "s1" : "s2";
		fe.get("wait_encoding", w);
		c.env.wait_encoding = wait_from_string(w);
		if (const json* sc = fe.sub("scales")) {
			Fields fs(*sc, "run.env.scales");
			auto& s = c.env.scales;
			fs.get("distance", s.distance);
			fs.get("speed", s.speed);
			fs.get("accel", s.accel);
			fs.get("phase_remaining", s.phase_remaining);
			fs.get("wait", s.wait);
			fs.get("leader_speed", s.leader_speed);
			fs.get("leader_gap", s.leader_gap);
			fs.finish();
		}
		fe.finish();
	}
	if (const json* r = f.sub("reward")) {
		Fields fr(*r, "run.reward");
		auto& rw = c.env.reward;
		fr.get("alpha", rw.alpha);
		fr.get("beta", rw.beta);
		fr.get("omega", rw.omega);
		fr.get("stop_penalty", rw.stop_penalty);
		fr.get("stop_speed_threshold", rw.stop_speed_threshold);
		fr.get("r3_good_control", rw.r3_good_control);
		fr.get("r3_bad", rw.r3_bad);
		fr.get("r3_gap", rw.r3_gap);
		fr.get("v_min", rw.v_min);
		fr.get("v_max", rw.v_max);
		fr.finish();
	}
	if (const json* t = f.sub("trainer")) {
		Fields ft(*t, "run.trainer");
		auto& tr = c.trainer;
		ft.get("gamma", tr.gamma);
		ft.get("clip_eps", tr.clip_eps);
		ft.get("buffer_capacity", tr.buffer_capacity);
		ft.get("batch_size", tr.batch_size);
		ft.get("epochs_per_update", tr.epochs_per_update);
		ft.get("minibatch_size", tr.minibatch_size);
		std::string b = tr.batching == BatchingMode::epochs ? "epochs" : "sampled";
		ft.get("batching", b);
		tr.batching = batching_from_string(b);
		ft.get("total_episodes", tr.total_episodes);
		ft.get("normalize_advantage", tr.normalize_advantage);
		ft.get("reward_scale", tr.reward_scale);
		ft.get("mask_continuous_by_gap", tr.mask_continuous_by_gap);
		ft.get("entropy_log_every", tr.entropy_log_every);
		ft.get("density", tr.density);
		ft.get("init_sigma", tr.init_sigma);
		if (const json* a = ft.sub("adam")) {
			Fields fa(*a, "run.trainer.adam");
			fa.get("lr_discrete", tr.adam.lr_discrete);
			fa.get("lr_continuous", tr.adam.lr_continuous);
			fa.get("lr_critic", tr.adam.lr_critic);
			fa.get("beta1", tr.adam.beta1);
			fa.get("beta2", tr.adam.beta2);
			fa.get("eps", tr.adam.eps);
			fa.finish();
		}
		ft.finish();
	}
	f.finish();
	c.validate();
	return c;
}

RunConfig load_run_config(const std::string& path) {
	const auto dir = std::filesystem::path(path).parent_path();
	return parse_run_config(slurp(path), dir.empty() ? "." : dir.string());
}

std::string to_json(const ScenarioConfig& s) {
	return write_scenario(s).dump(2);
}

std::string to_json(const RunConfig& c) {
	const auto& e = c.env;
	const auto& r = e.reward;
	const auto& t = c.trainer;
	json j = {
		{"scenario", write_scenario(e.scenario)},
		{"method", to_string(c.method)},
		{"densities", c.densities},
		{"eval_repeats", c.eval_repeats},
		{"seed", c.seed},
		{"out", c.out_dir},
		{"checkpoint_every", c.checkpoint_every},
		{"threads", c.threads},
		{"env", {{"control_step", e.control_step}, {"depart_window", e.depart_window}, {"horizon", e.horizon},
					{"wait_encoding", e.wait_encoding == WaitEncoding::s1 ? "s1" : "s2"},
					{"scales", {{"distance", e.scales.distance}, {"speed", e.scales.speed}, {"accel", e.scales.accel},
								   {"phase_remaining", e.scales.phase_remaining}, {"wait", e.scales.wait},
								   {"leader_speed", e.scales.leader_speed}, {"leader_gap", e.scales.leader_gap}}}}},
		{"reward", {{"alpha", r.alpha}, {"beta", r.beta}, {"omega", r.omega}, {"stop_penalty", r.stop_penalty},
					   {"stop_speed_threshold", r.stop_speed_threshold}, {"r3_good_control", r.r3_good_control},
					   {"r3_bad", r.r3_bad}, {"r3_gap", r.r3_gap}, {"v_min", r.v_min}, {"v_max", r.v_max}}},
		{"trainer", {{"gamma", t.gamma}, {"clip_eps", t.clip_eps}, {"buffer_capacity", t.buffer_capacity},
						{"batch_size", t.batch_size}, {"epochs_per_update", t.epochs_per_update},
						{"minibatch_size", t.minibatch_size},
						{"batching", t.batching == BatchingMode::epochs ? "epochs" : "sampled"},
						{"total_episodes", t.total_episodes}, {"normalize_advantage", t.normalize_advantage},
						{"reward_scale", t.reward_scale}, {"mask_continuous_by_gap", t.mask_continuous_by_gap},
						{"entropy_log_every", t.entropy_log_every}, {"density", t.density}, {"init_sigma", t.init_sigma},
						{"adam", {{"lr_discrete", t.adam.lr_discrete}, {"lr_continuous", t.adam.lr_continuous},
									 {"lr_critic", t.adam.lr_critic}, {"beta1", t.adam.beta1},
									 {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}}}},
	};
	return j.dump(2);
}

std::string config_hash(const RunConfig& c) {
	// The output directory does not change results, so it stays out of the hash.
	RunConfig copy = c;
	copy.out_dir.clear();
	copy.threads = 1;
	const std::string text = to_json(copy);
	std::uint64_t h = 0xcbf29ce484222325ULL;
	for (unsigned char ch : text) {
		h ^= ch;
		h *= 0x100000001b3ULL;
	}
	char buf[17];
	std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
	return buf;
}

}  // namespace afglosa
