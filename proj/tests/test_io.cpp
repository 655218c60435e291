#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "jomi/io.hpp"
#include "jomi/rng.hpp"

using namespace jomi;

namespace {

PredictionSet random_set(Rng& rng) {
  if (rng.below(3) == 0) {
    std::vector<int> labels;
    const int k = static_cast<int>(rng.below(4));
    for (int i = 0; i < k; ++i) labels.push_back(static_cast<int>(rng.below(6)));
    return PredictionSet::from_labels(std::move(labels));
  }
  std::vector<Interval> parts;
  const int k = static_cast<int>(rng.below(4));
  for (int i = 0; i < k; ++i) {
    const double a = rng.normal() * 3.0;
    const double b = a + rng.u01() * 2.0 + 0.01;
    parts.push_back(Interval{a, b, rng.below(2) == 0, rng.below(2) == 0});
  }
  if (rng.below(8) == 0) parts.push_back(Interval{-kInf, rng.normal(), true, rng.below(2) == 0});
  return PredictionSet::from_intervals(IntervalSet::normalize(std::move(parts)));
}

std::string temp_path(const std::string& name) {
  return std::string("io_test_") + name + ".csv";
}

}  // namespace

TEST_CASE("prediction set serialization round-trips on fuzzed sets") {
  Rng rng(191);
  for (int rep = 0; rep < 10000; ++rep) {
    const PredictionSet s = random_set(rng);
    const std::string text = serialize_prediction_set(s);
    const PredictionSet back = parse_prediction_set(text, s.variant);
    if (s.variant == PredictionSet::Variant::Labels) {
      CHECK(back.labels == s.labels);
    } else {
      REQUIRE(back.intervals.parts().size() == s.intervals.parts().size());
      for (std::size_t k = 0; k < s.intervals.parts().size(); ++k) {
        const auto& a = s.intervals.parts()[k];
        const auto& b = back.intervals.parts()[k];
        CHECK(a.lo == b.lo);
        CHECK(a.hi == b.hi);
        CHECK(a.lo_open == b.lo_open);
        CHECK(a.hi_open == b.hi_open);
      }
    }
  }
}

TEST_CASE("serialization format matches the documented examples") {
  auto two = PredictionSet::from_intervals(
      IntervalSet(closed(-0.5, 0.5)).unite(IntervalSet(Interval{1.0, 2.0, true, false})));
  CHECK(serialize_prediction_set(two) == "-0.5:0.5;1o:2");
  auto single_label = PredictionSet::from_labels({1});
  CHECK(serialize_prediction_set(single_label) == "1");
  CHECK(serialize_prediction_set(PredictionSet::from_labels({})).empty());
  auto ray = PredictionSet::from_intervals(IntervalSet(Interval{-kInf, 0.0, true, false}));
  CHECK(serialize_prediction_set(ray) == "-inf:0");
}

TEST_CASE("csv ingestion recognizes the documented columns") {
  const std::string calib = temp_path("calib");
  const std::string test = temp_path("test");
  write_text_file(calib, "id,y,muhat,sel_score\nu1,0.5,0.4,0.9\nu2,-1,0.1,0.2\n");
  write_text_file(test, "id,muhat,sel_score,y\nv1,0.3,0.8,\nv2,0.7,0.1,1.25\n");
  const Dataset d = ingest(calib, test);
  REQUIRE(d.n() == 2);
  REQUIRE(d.m() == 2);
  CHECK(d.calib[0].id == "u1");
  CHECK(*d.calib[0].outcome == 0.5);
  CHECK(*d.calib[1].point_pred == 0.1);
  CHECK_FALSE(d.test[0].outcome.has_value());
  CHECK(*d.test[1].outcome == 1.25);  // stored for evaluation mode
  std::remove(calib.c_str());
  std::remove(test.c_str());
}

TEST_CASE("csv ingestion errors carry row and column context") {
  const std::string path = temp_path("bad");
  write_text_file(path, "id,y,muhat\nu1,0.5,oops\n");
  try {
    read_units_csv(path, true);
    FAIL("expected a data error");
  } catch (const data_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("muhat") != std::string::npos);
  }

  write_text_file(path, "id,muhat\nu1,0.5\n");
  CHECK_THROWS_AS(read_units_csv(path, true), data_error);  // calibration needs y

  write_text_file(path, "id,y,prob_0,prob_1\nu1,1,0.5,0.6\n");
  try {
    read_units_csv(path, true);
    FAIL("expected a data error");
  } catch (const data_error& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }

  write_text_file(path, "id,y,weird\nu1,1,2\n");
  CHECK_THROWS_AS(read_units_csv(path, true), data_error);
  std::remove(path.c_str());
}

TEST_CASE("json documents parse back with identical values") {
  JsonValue doc = JsonValue::object();
  doc.set("tool", JsonValue::str("jomi"));
  doc.set("alpha", JsonValue::number(0.1));
  doc.set("third", JsonValue::number(1.0 / 3.0));
  doc.set("trials", JsonValue::integer(2000));
  doc.set("ok", JsonValue::boolean(true));
  JsonValue arr = JsonValue::array();
  arr.push(JsonValue::number(0.30000000000000004));
  arr.push(JsonValue::number(-1e-17));
  doc.set("values", std::move(arr));

  const auto parsed = nlohmann::json::parse(doc.dump());
  CHECK(parsed["tool"] == "jomi");
  CHECK(parsed["alpha"].get<double>() == 0.1);
  CHECK(parsed["third"].get<double>() == 1.0 / 3.0);
  CHECK(parsed["trials"].get<long long>() == 2000);
  CHECK(parsed["ok"].get<bool>() == true);
  CHECK(parsed["values"][0].get<double>() == 0.30000000000000004);
  CHECK(parsed["values"][1].get<double>() == -1e-17);
}

TEST_CASE("double formatting survives parse round-trips") {
  Rng rng(193);
  for (int rep = 0; rep < 5000; ++rep) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(std::isinf(parse_double("inf")));
  CHECK(parse_double("-inf") == -kInf);
}
