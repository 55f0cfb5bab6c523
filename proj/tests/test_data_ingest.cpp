#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"

#include "acfnet/data_ingest.hpp"

using namespace acfnet;

namespace {

RecordingRecord rec(std::string id, std::string spk, std::vector<ClinicalScore> scores) {
  RecordingRecord r;
  r.recording_id = std::move(id);
  r.speaker_id = std::move(spk);
  r.scores = std::move(scores);
  return r;
}

// Speaker sets of the three parts, checked by direct intersection.
void check_speaker_disjoint(const DatasetSplit& split, const std::map<std::string, std::string>& speaker_of) {
  std::array<std::set<std::string>, 3> sp;
  const std::array<const std::vector<std::string>*, 3> parts{&split.train, &split.validation, &split.test};
  for (int p = 0; p < 3; ++p)
    for (const auto& id : *parts[p]) sp[p].insert(speaker_of.at(id));
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      std::vector<std::string> common;
      std::set_intersection(sp[a].begin(), sp[a].end(), sp[b].begin(), sp[b].end(), std::back_inserter(common));
      CHECK(common.empty());
    }
  }
}

}  // namespace

TEST_CASE("severity levels follow the HAMD and QIDS bands") {
  CHECK(score_to_severity({Scale::HAMD, 7}) == SeverityLevel::Normal);
  CHECK(score_to_severity({Scale::HAMD, 8}) == SeverityLevel::Mild);
  CHECK(score_to_severity({Scale::HAMD, 14}) == SeverityLevel::Moderate);
  CHECK(score_to_severity({Scale::HAMD, 18}) == SeverityLevel::Moderate);
  CHECK(score_to_severity({Scale::HAMD, 19}) == SeverityLevel::Severe);
  CHECK(score_to_severity({Scale::HAMD, 23}) == SeverityLevel::VerySevere);
  CHECK(score_to_severity({Scale::HAMD, 52}) == SeverityLevel::VerySevere);
  CHECK(score_to_severity({Scale::QIDS, 0}) == SeverityLevel::Normal);
  CHECK(score_to_severity({Scale::QIDS, 5}) == SeverityLevel::Normal);
  CHECK(score_to_severity({Scale::QIDS, 6}) == SeverityLevel::Mild);
  CHECK(score_to_severity({Scale::QIDS, 21}) == SeverityLevel::VerySevere);
  CHECK(score_to_severity({Scale::QIDS, 27}) == SeverityLevel::VerySevere);
}

TEST_CASE("out of range scores name the scale") {
  CHECK_THROWS_AS(score_to_severity({Scale::HAMD, 53}), RangeError);
  CHECK_THROWS_AS(score_to_severity({Scale::QIDS, -1}), RangeError);
  try {
    score_to_severity({Scale::QIDS, 28});
    FAIL("no throw");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find("QIDS") != std::string::npos);
  }
}

TEST_CASE("severity is monotone in the score") {
  for (Scale s : {Scale::HAMD, Scale::QIDS}) {
    const int top = s == Scale::HAMD ? 52 : 27;
    int prev = 0;
    for (int v = 0; v <= top; ++v) {
      const int level = static_cast<int>(score_to_severity({s, v}));
      CHECK(level >= prev);
      prev = level;
    }
  }
}

TEST_CASE("label assignment") {
  CHECK(assign_label(rec("a", "s", {{Scale::HAMD, 14}})) == Label::Depressed);
  CHECK(assign_label(rec("a", "s", {{Scale::HAMD, 3}, {Scale::QIDS, 2}})) == Label::NonDepressed);
  CHECK_FALSE(assign_label(rec("a", "s", {{Scale::HAMD, 9}, {Scale::QIDS, 4}})).has_value());
  // Mild and Moderate: same side of the split, different level.
  const auto mixed = rec("a", "s", {{Scale::HAMD, 10}, {Scale::QIDS, 12}});
  CHECK_FALSE(assign_label(mixed).has_value());
  CHECK(assign_label(mixed, AgreementMode::SameClass) == Label::Depressed);
  CHECK_THROWS_AS(assign_label(rec("a", "s", {})), MissingDataError);
}

TEST_CASE("manifest round trip") {
  std::istringstream in(
      R"({"recording_id":"r1","speaker_id":"s1","database":"MD1","path":"a.acft","hamd":20})"
      "\n\n"
      R"({"recording_id":"r2","speaker_id":"s2","database":"MD2","path":"b.acft","hamd":9,"qids":4})"
      "\n");
  const auto records = parse_manifest(in);
  REQUIRE(records.size() == 2);
  CHECK(records[0].label == Label::Depressed);
  CHECK(records[0].database == Database::MD1);
  CHECK_FALSE(records[1].label.has_value());

  const auto path = (std::filesystem::temp_directory_path() / "acfnet_manifest_test.jsonl").string();
  write_manifest(path, records);
  const auto again = read_manifest(path);
  REQUIRE(again.size() == 2);
  CHECK(again[1].scores.size() == 2);
  CHECK(manifest_line(again[0]) == manifest_line(records[0]));
  std::filesystem::remove(path);
}

TEST_CASE("manifest errors") {
  std::istringstream dup(R"({"recording_id":"r","speaker_id":"s","database":"MD1","path":"","hamd":1})"
                         "\n"
                         R"({"recording_id":"r","speaker_id":"s","database":"MD1","path":"","hamd":1})");
  CHECK_THROWS_AS(parse_manifest(dup), FormatError);
  std::istringstream bad_db(R"({"recording_id":"r","speaker_id":"s","database":"MD9","hamd":1})");
  CHECK_THROWS_AS(parse_manifest(bad_db), FormatError);
  std::istringstream garbage("{not json");
  CHECK_THROWS_AS(parse_manifest(garbage), FormatError);
}

TEST_CASE("ten balanced speakers split 8/1/1") {
  std::vector<RecordingRecord> records;
  for (int s = 0; s < 10; ++s) {
    auto r = rec("r" + std::to_string(s), "s" + std::to_string(s), {{Scale::HAMD, s % 2 ? 20 : 2}});
    r.label = assign_label(r);
    records.push_back(r);
  }
  const auto split = make_split(records, {}, 42);
  CHECK(split.train.size() == 8);
  CHECK(split.validation.size() == 1);
  CHECK(split.test.size() == 1);
  const auto again = make_split(records, {}, 42);
  CHECK(again.train == split.train);
  CHECK(again.test == split.test);
}

TEST_CASE("speakers stay whole and parts stay disjoint") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SplitItem> items;
    std::map<std::string, std::string> speaker_of;
    const int speakers = 3 + static_cast<int>(rng() % 30);
    for (int s = 0; s < speakers; ++s) {
      const int n = 1 + static_cast<int>(rng() % 5);
      const Label l = rng() % 3 == 0 ? Label::Depressed : Label::NonDepressed;
      for (int k = 0; k < n; ++k) {
        const std::string id = "s" + std::to_string(s) + "_" + std::to_string(k);
        items.push_back({id, "s" + std::to_string(s), l, 1 + rng() % 7});
        speaker_of[id] = "s" + std::to_string(s);
      }
    }
    const auto split = make_split(items, {}, rng());
    CHECK(split.train.size() + split.validation.size() + split.test.size() == items.size());
    CHECK_FALSE(split.train.empty());
    CHECK_FALSE(split.validation.empty());
    CHECK_FALSE(split.test.empty());
    check_speaker_disjoint(split, speaker_of);
  }
}

TEST_CASE("split needs three speakers and labels") {
  std::vector<SplitItem> two{{"a", "s1", Label::Depressed, 1}, {"b", "s2", Label::NonDepressed, 1}};
  CHECK_THROWS_AS(make_split(two, {}, 0), InfeasibleSplitError);
  std::vector<RecordingRecord> unlabeled{rec("a", "s", {{Scale::HAMD, 9}, {Scale::QIDS, 1}})};
  CHECK_THROWS_AS(make_split(unlabeled, {}, 0), MissingDataError);
}

TEST_CASE("split file round trip") {
  DatasetSplit s{{"a", "b"}, {"c"}, {"d"}, {}, 77};
  const auto path = (std::filesystem::temp_directory_path() / "acfnet_split_test.json").string();
  write_split(path, s);
  const auto t = read_split(path);
  CHECK(t.train == s.train);
  CHECK(t.validation == s.validation);
  CHECK(t.test == s.test);
  CHECK(t.seed == 77);
  std::filesystem::remove(path);
}

TEST_CASE("class weights") {
  auto labels = [](int dep, int nd) {
    std::vector<Label> v(dep, Label::Depressed);
    v.insert(v.end(), nd, Label::NonDepressed);
    return v;
  };
  auto w = class_weights(labels(80, 20));
  CHECK(w.depressed == doctest::Approx(0.625));
  CHECK(w.nondepressed == doctest::Approx(2.5));
  w = class_weights(labels(50, 50));
  CHECK(w.depressed == 1.0);
  CHECK(w.nondepressed == 1.0);
  w = class_weights(labels(99, 1));
  CHECK(w.depressed == doctest::Approx(100.0 / 198.0).epsilon(1e-12));
  CHECK(w.nondepressed == doctest::Approx(50.0));
  CHECK_THROWS_AS(class_weights(labels(5, 0)), DegenerateClassError);

  std::mt19937 rng(3);
  for (int i = 0; i < 100; ++i) {
    const int d = 1 + static_cast<int>(rng() % 500), n = 1 + static_cast<int>(rng() % 500);
    w = class_weights(labels(d, n));
    CHECK(w.depressed * d == doctest::Approx(w.nondepressed * n).epsilon(1e-14));
  }
}
