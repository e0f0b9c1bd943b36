#pragma once

#include <string>

#include "qdc/qdc.hpp"

namespace testing_helpers {

inline qdc::Problem problem(const std::string& text) { return qdc::problem_from_json(qdc::json::parse(text)).problem; }

inline qdc::Problem shipped(const std::string& name) {
  return qdc::load_problem(std::string(QDC_DATA_DIR) + "/" + name + ".json").problem;
}

// One composite with identity outer over a single inner function given as a JSON object.
inline qdc::Problem scalar(const std::string& inner, double lo, double hi) {
  return problem(R"({"dimension":1,"feasible_set":{"type":"box","lower":[)" + std::to_string(lo) + "],\"upper\":[" +
                 std::to_string(hi) + R"(]},"composites":[{"outer":{"type":"I","phi":"y0"},"inner":[)" + inner + "]}]}");
}

}  // namespace testing_helpers
