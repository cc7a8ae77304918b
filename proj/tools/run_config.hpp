#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "knnshift/geometry.hpp"
#include "knnshift/harness.hpp"

namespace knnshift::cli {

/// Schema violation in a run config; always exit code 1.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class Command { estimate, sweep, geometry, verify, ate };
Command parse_command(const std::string& name);
std::string to_string(Command c);

/// Command-line flags that override config scalars.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<unsigned> threads;
  std::optional<std::string> suite;
};

struct EstimateRun {
  SetupSpec setup;
  std::size_t n = 4000, m = 4000;
  MethodSpec method;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct SweepRun {
  SweepConfig config;
};

struct GeometryExpect {
  std::optional<Verdict> condition_a, tube;
  std::optional<double> x2_at_least;  // min ratio must reach this
  std::optional<double> x2_below;     // min ratio must stay under this
};

struct GeometryRun {
  DomainPtr domain;
  GeometryConfig config;
  GeometryExpect expect;
  unsigned threads = 0;
};

struct NegCorrSpec {
  double p_a = 0.2, p_b = 0.3;
  std::size_t n = 30;
};

struct BiasSpec {
  BiasExpansionConfig config;
  double tolerance = 0.15;  // relative deviation at the largest n
};

struct VerifyRun {
  std::string suite = "lemmas";  // lemmas | catchment | bias | ate | all
  TauLawConfig beta;             // KS of F_x(tau_k) against the Beta law
  TauLawConfig moments;          // mean, moment bound and tails
  NegCorrSpec negative_correlation;
  CatchmentTailConfig catchment;
  BiasSpec bias;
  AteNormalityConfig ate;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct AteRun {
  double sigma = 1.0;
  std::size_t n = 5000;
  std::optional<std::size_t> k;
  double k_exponent = 0.3;
  bool local_poly = false;
  unsigned order = 1;
  std::size_t reps = 1;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

/// Each parser validates the whole object, rejects unknown keys, and applies
/// the overrides. The optional "command" key must name the same command.
EstimateRun parse_estimate(const nlohmann::json& j, const Overrides& o);
SweepRun parse_sweep(const nlohmann::json& j, const Overrides& o);
GeometryRun parse_geometry(const nlohmann::json& j, const Overrides& o);
VerifyRun parse_verify(const nlohmann::json& j, const Overrides& o);
AteRun parse_ate(const nlohmann::json& j, const Overrides& o);

DomainPtr parse_domain(const nlohmann::json& j, const std::string& path);
MethodSpec parse_method(const nlohmann::json& j, const std::string& path);

/// Text shown by --help: every command with its config keys.
std::string schema_help();

}  // namespace knnshift::cli
