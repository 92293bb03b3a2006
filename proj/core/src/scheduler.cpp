#include "diflow/scheduler.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "diflow/errors.hpp"

namespace diflow {

namespace {

void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(std::string(what) + ": t = " + std::to_string(t) + " outside [0, 1]");
  }
}

}  // namespace

Scheduler Scheduler::polynomial(double exponent) {
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw ConfigError("polynomial scheduler: exponent must be positive");
  }
  return {Kind::kPolynomial, exponent};
}

double kappa(const Scheduler& s, double t) {
  check_time(t, "kappa");
  if (t == 0.0) return 0.0;
  if (t == 1.0) return 1.0;
  switch (s.kind) {
    case Scheduler::Kind::kLinear:
      return t;
    case Scheduler::Kind::kPolynomial:
      return std::pow(t, s.exponent);
    case Scheduler::Kind::kCosine:
      return 0.5 * (1.0 - std::cos(std::numbers::pi * t));
  }
  return t;
}

double kappa_dot(const Scheduler& s, double t) {
  check_time(t, "kappa_dot");
  switch (s.kind) {
    case Scheduler::Kind::kLinear:
      return 1.0;
    case Scheduler::Kind::kPolynomial: {
      if (t == 0.0 && s.exponent < 1.0) {
        throw SingularityError("kappa_dot: polynomial derivative unbounded at t = 0");
      }
      if (s.exponent == 1.0) return 1.0;
      return s.exponent * std::pow(t, s.exponent - 1.0);
    }
    case Scheduler::Kind::kCosine:
      return 0.5 * std::numbers::pi * std::sin(std::numbers::pi * t);
  }
  return 1.0;
}

double velocity_coefficient(const Scheduler& s, double t) {
  const double k = kappa(s, t);
  if (k >= 1.0) {
    throw SingularityError("velocity_coefficient: kappa(t) = 1 at t = " + std::to_string(t));
  }
  return kappa_dot(s, t) / (1.0 - k);
}

Scheduler parse_scheduler(const std::string& text) {
  if (text == "linear") return Scheduler::linear();
  if (text == "cosine") return Scheduler::cosine();
  if (text.rfind("poly:", 0) == 0) {
    const std::string rest = text.substr(5);
    std::size_t used = 0;
    double e = 0.0;
    try {
      e = std::stod(rest, &used);
    } catch (const std::exception&) {
      throw ConfigError("scheduler: bad exponent in '" + text + "'");
    }
    if (used != rest.size()) throw ConfigError("scheduler: bad exponent in '" + text + "'");
    return Scheduler::polynomial(e);
  }
  throw ConfigError("scheduler: expected linear | poly:<exp> | cosine, got '" + text + "'");
}

std::string to_string(const Scheduler& s) {
  switch (s.kind) {
    case Scheduler::Kind::kLinear:
      return "linear";
    case Scheduler::Kind::kCosine:
      return "cosine";
    case Scheduler::Kind::kPolynomial: {
      std::ostringstream os;
      os.precision(17);
      os << "poly:" << s.exponent;
      return os.str();
    }
  }
  return "linear";
}

}  // namespace diflow
