#include "matext/planner.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "matext/error.hpp"
#include "matext/stats.hpp"

namespace matext {

using nlohmann::json;

void DesignPlan::validate() const {
  if (!(N > 0)) throw Error(ErrorCode::InvalidPlan, "N must be > 0, got " + format_double(N));
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorCode::InvalidPlan,
                "treated fraction p must lie in (0,1), got " + format_double(p));
  if (!(h > 0.0 && h <= 1.0))
    throw Error(ErrorCode::InvalidPlan,
                "coded fraction h must lie in (0,1], got " + format_double(h));
  if (!(r2 <= 1.0))
    throw Error(ErrorCode::InvalidPlan, "r2 cannot exceed 1, got " + format_double(r2));
  if (!(sigma2 > 0.0))
    throw Error(ErrorCode::InvalidPlan, "sigma2 must be > 0, got " + format_double(sigma2));
  if (!(mdes_multiplier > 0.0))
    throw Error(ErrorCode::InvalidPlan,
                "mdes multiplier must be > 0, got " + format_double(mdes_multiplier));
  if (!(alpha > 0.0 && alpha < 1.0))
    throw Error(ErrorCode::InvalidPlan, "alpha must lie in (0,1), got " + format_double(alpha));
  if (!(power > 0.0 && power < 1.0))
    throw Error(ErrorCode::InvalidPlan, "power must lie in (0,1), got " + format_double(power));
}

DesignPlan DesignPlan::from_json(const json& j) {
  DesignPlan plan;
  if (j.contains("N")) plan.N = j.at("N").get<double>();
  if (j.contains("p")) plan.p = j.at("p").get<double>();
  if (j.contains("h")) plan.h = j.at("h").get<double>();
  if (j.contains("r2")) plan.r2 = j.at("r2").get<double>();
  if (j.contains("sigma2")) plan.sigma2 = j.at("sigma2").get<double>();
  if (j.contains("alpha")) plan.alpha = j.at("alpha").get<double>();
  if (j.contains("power")) plan.power = j.at("power").get<double>();
  if (j.contains("mdes_multiplier")) plan.mdes_multiplier = j.at("mdes_multiplier").get<double>();
  plan.validate();
  return plan;
}

json DesignPlan::to_json() const {
  json j;
  j["N"] = N;
  j["p"] = p;
  j["h"] = h;
  j["r2"] = r2;
  j["sigma2"] = sigma2;
  j["alpha"] = alpha;
  j["power"] = power;
  j["mdes_multiplier"] = mdes_multiplier;
  return j;
}

std::vector<std::string> plan_warnings(const DesignPlan& plan) {
  std::vector<std::string> warnings;
  if (plan.r2 < 0.0)
    warnings.push_back(
        "assumed r2 is negative: the predictor is worse than the coded-subset mean, so "
        "partial coding inflates variance beyond the r2=0 case");
  return warnings;
}

namespace {

double allocation_factor(const DesignPlan& plan) { return 1.0 / plan.p + 1.0 / (1.0 - plan.p); }

}  // namespace

double variance_ma(const DesignPlan& plan) {
  plan.validate();
  const double inflation = 1.0 + ((1.0 - plan.h) / plan.h) * (1.0 - plan.r2);
  return (1.0 / plan.N) * allocation_factor(plan) * inflation * plan.sigma2;
}

double variance_subset(const DesignPlan& plan) {
  plan.validate();
  return (1.0 / plan.N) * (1.0 / plan.h) * allocation_factor(plan) * plan.sigma2;
}

double relative_variance(const DesignPlan& plan) {
  plan.validate();
  return 1.0 - plan.r2 * (1.0 - plan.h);
}

double se_inflation(const DesignPlan& plan) {
  plan.validate();
  return std::sqrt(1.0 + ((1.0 - plan.h) / plan.h) * (1.0 - plan.r2));
}

double mdes(const DesignPlan& plan) { return plan.mdes_multiplier * std::sqrt(variance_ma(plan)); }

std::vector<CurvePoint> mdes_curve(const DesignPlan& plan, const std::vector<double>& h_grid) {
  plan.validate();
  if (h_grid.empty()) throw Error(ErrorCode::EmptyGrid, "coding-fraction grid is empty");
  std::vector<CurvePoint> curve;
  curve.reserve(h_grid.size());
  for (double h : h_grid) {
    if (!(h > 0.0 && h <= 1.0))
      throw Error(ErrorCode::InvalidPlan,
                  "grid coded fraction must lie in (0,1], got " + format_double(h));
    DesignPlan at = plan;
    at.h = h;
    CurvePoint point;
    point.h = h;
    point.se = std::sqrt(variance_ma(at));
    point.mdes = mdes(at);
    point.inflation = se_inflation(at);
    curve.push_back(point);
  }
  return curve;
}

CsvTable curve_table(const std::vector<CurvePoint>& curve) {
  CsvTable table;
  table.header = {"h", "se", "mdes", "inflation"};
  for (const auto& point : curve)
    table.rows.push_back({format_double(point.h), format_double(point.se),
                          format_double(point.mdes), format_double(point.inflation)});
  return table;
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json arr = json::array();
  for (const auto& point : curve) {
    json j;
    j["h"] = point.h;
    j["se"] = point.se;
    j["mdes"] = point.mdes;
    j["inflation"] = point.inflation;
    arr.push_back(std::move(j));
  }
  return arr;
}

RequiredFraction required_fraction(const DesignPlan& plan, double target_mdes) {
  plan.validate();
  if (!(target_mdes > 0.0))
    throw Error(ErrorCode::InvalidPlan, "target mdes must be > 0");

  // mdes(h)^2 = c (1 + ((1-h)/h)(1-r2)) with c the full-coding mdes^2;
  // solving mdes(h) <= t for the smallest h gives h = (1-r2)/(t^2/c - r2).
  const double c = plan.mdes_multiplier * plan.mdes_multiplier * (1.0 / plan.N) *
                   allocation_factor(plan) * plan.sigma2;
  const double ratio = target_mdes * target_mdes / c;

  RequiredFraction result;
  // tolerance keeps a target computed as mdes(h=1) from rounding to infeasible
  if (ratio < 1.0 - 1e-12) {
    result.h = 1.0;
    result.feasible = false;
    return result;
  }
  result.feasible = true;
  if (plan.r2 == 1.0) {
    result.h = 0.0;  // mdes is flat in h: any positive fraction attains the target
    return result;
  }
  result.h = std::min(1.0, (1.0 - plan.r2) / (ratio - plan.r2));
  return result;
}

}  // namespace matext
