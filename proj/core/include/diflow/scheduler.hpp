#pragma once

#include <string>

namespace diflow {

// Monotone interpolation kappa: [0,1] -> [0,1] with kappa(0) = 0, kappa(1) = 1.
struct Scheduler {
  enum class Kind { kLinear, kPolynomial, kCosine };

  Kind kind = Kind::kLinear;
  double exponent = 1.0;  // used by kPolynomial

  static Scheduler linear() { return {}; }
  static Scheduler polynomial(double exponent);
  static Scheduler cosine() { return {Kind::kCosine, 1.0}; }

  friend bool operator==(const Scheduler&, const Scheduler&) = default;
};

double kappa(const Scheduler& s, double t);
double kappa_dot(const Scheduler& s, double t);
// kappa_dot / (1 - kappa); throws SingularityError where kappa(t) = 1.
double velocity_coefficient(const Scheduler& s, double t);

// "linear" | "poly:<exp>" | "cosine"
Scheduler parse_scheduler(const std::string& text);
std::string to_string(const Scheduler& s);

}  // namespace diflow
