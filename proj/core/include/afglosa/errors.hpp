#pragma once

#include <stdexcept>
#include <string>

namespace afglosa {

/// Broken physical consistency inside a world (overlap, negative gap).
class SimulationFault : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Operation requested on an episode whose CAV already left the route.
class EpisodeFinished : public std::logic_error {
public:
	using std::logic_error::logic_error;
};

/// Invalid or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Non-finite value in a network input or a training loss. Maps to CLI exit code 3.
class NumericFault : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

}  // namespace afglosa
