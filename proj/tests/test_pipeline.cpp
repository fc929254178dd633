#include <algorithm>
#include <map>

#include "doctest.h"
#include "mfseg/error.hpp"
#include "fixtures.hpp"
#include "mfseg/pipeline.hpp"
#include "scratch_dir.hpp"

using namespace mfseg;
using nlohmann::json;

namespace {

const char* kReproducible[] = {"segmentation.json", "point_labels.bin", "field_labels.bin", "report.json", "merge.json"};

}  // namespace

TEST_CASE("saved segmentations load back and re-save byte for byte") {
  TwoBlobFiles fx;
  const auto a = segment_dataset(fx.data, fx.source, fx.params);
  CHECK(a.segmentation.point_labels.size() == fx.data.points.size());
  CHECK(a.segmentation.field_labels.size() == fx.data.field_columns.size());
  CHECK(a.clusters.size() == a.segmentation.centers.size());

  ScratchDir first("first"), second("second");
  write_segmentation(a, first.path());
  const auto loaded = load_segmentation(first.path());
  CHECK(loaded.segmentation.point_labels == a.segmentation.point_labels);
  CHECK(loaded.segmentation.field_labels == a.segmentation.field_labels);
  CHECK(loaded.merge.map == a.merge.map);
  CHECK(loaded.source.field == a.source.field);

  write_segmentation(loaded, second.path());
  for (const char* name : {"segmentation.json", "point_labels.bin", "field_labels.bin", "merge.json"}) {
    CAPTURE(name);
    CHECK(slurp(first / name) == slurp(second / name));
  }
  for (std::size_t i = 0; i < a.merge.table.size(); ++i) {
    CHECK(center_row_json(loaded.merge.table[i]).dump() == center_row_json(a.merge.table[i]).dump());
  }
}

TEST_CASE("equal inputs give equal artifacts regardless of workers") {
  TwoBlobFiles fx;
  ScratchDir one("w1"), four("w4");
  EngineOptions opts;
  write_segmentation(segment_dataset(fx.data, fx.source, fx.params, opts), one.path());
  opts.workers = 4;
  opts.chunk_size = 97;
  write_segmentation(segment_dataset(fx.data, fx.source, fx.params, opts), four.path());
  for (const char* name : kReproducible) {
    CAPTURE(name);
    CHECK(slurp(one / name) == slurp(four / name));
  }
  CHECK(slurp(one / "timing.json").find("\"workers\": 1") != std::string::npos);
}

TEST_CASE("segmentation recovers the two blobs") {
  TwoBlobFiles fx;
  const auto a = segment_dataset(fx.data, fx.source, fx.params);
  const auto truth = generate_synthetic(two_blob_spec());
  // Every ground-truth class should be dominated by a single merged feature.
  for (int cls = 0; cls < 3; ++cls) {
    std::map<ClusterId, int> votes;
    int total = 0;
    for (std::size_t i = 0; i < truth.field_truth.size(); ++i) {
      if (truth.field_truth[i] != cls) continue;
      ++votes[a.merge.map[static_cast<std::size_t>(a.segmentation.field_labels[i])]];
      ++total;
    }
    int best = 0;
    for (const auto& [id, n] : votes) best = std::max(best, n);
    CAPTURE(cls);
    CHECK(best >= 0.95 * total);
  }
}

TEST_CASE("parameter documents name the offending field") {
  const ClusterParams defaults;
  const auto p = params_from_json(json::parse(R"({"k":[2,3,4,5],"cf":2,"eps_m":0.5,"normalize":false})"));
  CHECK(p.k == Counts4{2, 3, 4, 5});
  CHECK(p.cf == 2);
  CHECK(p.eps_m == 0.5);
  CHECK_FALSE(p.normalize);
  CHECK(p.wd == defaults.wd);
  CHECK(params_from_json(json::parse(params_json(p).dump())).k == p.k);

  auto field_of = [](const char* text) {
    try {
      params_from_json(json::parse(text)).validate(true, true);
    } catch (const ParameterError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field_of(R"({"k":[1,1,1]})") == "k");
  CHECK(field_of(R"({"k":[1,1,1,0]})") == "k");
  CHECK(field_of(R"({"cf":"fast"})") == "cf");
  CHECK(field_of(R"({"eps_c":0})") == "eps_c");
  CHECK(field_of(R"({"eps_c":-1})") == "eps_c");
  CHECK(field_of(R"({"max_iterations":2.5})") == "max_iterations");
  CHECK(field_of(R"({"normalize":"yes"})") == "normalize");
  CHECK(field_of(R"({"kk":1})") == "kk");
  CHECK(field_of(R"({"wd":0,"wp":0})") == "wp");
  CHECK(field_of(R"({"wd":0,"wf":0})") == "wf");
  CHECK(field_of(R"({})") == "<none>");
}

TEST_CASE("parameter errors are raised before any compute") {
  TwoBlobFiles fx;
  ClusterParams p = fx.params;
  p.wd = 0;
  p.wp = 0;
  CHECK_THROWS_AS(segment_dataset(fx.data, fx.source, p), ParameterError);
}

TEST_CASE("merging at a new threshold is deterministic and leaves labels alone") {
  TwoBlobFiles fx;
  ClusterParams p = fx.params;
  p.k = {4, 2, 2, 2};
  const auto a = segment_dataset(fx.data, fx.source, p);

  // At eps_m = 0 only centers with exactly equal values share a feature; the
  // zero-noise fixture has such ties.
  const auto identity = merge_artifacts(a.clusters, 0.0);
  for (const auto& ci : a.clusters) {
    for (const auto& cj : a.clusters) {
      const bool same = identity.map[static_cast<std::size_t>(ci.center.id)] ==
                        identity.map[static_cast<std::size_t>(cj.center.id)];
      CHECK(same == (ci.center.p == cj.center.p && ci.center.f == cj.center.f));
    }
  }

  ScratchDir x("mx"), y("my");
  const auto wide = merge_artifacts(a.clusters, 0.05);
  write_merge(wide, x.path());
  write_merge(merge_artifacts(a.clusters, 0.05), y.path());
  CHECK(slurp(x / "merge.json") == slurp(y / "merge.json"));
  CHECK(wide.table.size() < identity.table.size());

  ScratchDir dir("relabel");
  write_segmentation(a, dir.path());
  const std::string labels = slurp(dir / "point_labels.bin");
  write_merge(wide, dir.path());
  const auto loaded = load_segmentation(dir.path());
  CHECK(loaded.merge.map == wide.map);
  CHECK(loaded.merge.eps_m == 0.05);
  CHECK(slurp(dir / "point_labels.bin") == labels);
}

TEST_CASE("features of a saved segmentation") {
  TwoBlobFiles fx;
  const auto a = segment_dataset(fx.data, fx.source, fx.params);
  const auto features = features_for(a, fx.data);
  CHECK(features.size() == a.merge.table.size());
  std::size_t fields = 0, points = 0;
  for (const auto& f : features) {
    fields += f.stats.field.n;
    points += f.stats.point.n;
    for (const auto& line : f.polylines) CHECK(line.points.size() >= 2);
  }
  CHECK(fields == fx.data.field_columns.size());
  CHECK(points == fx.data.points.size());

  const auto doc = features_json(features, a.merge);
  CHECK(doc["features"].size() == features.size());
  CHECK(doc["eps_m"] == fx.params.eps_m);

  Dataset fewer = fx.data;
  fewer.field_columns = {};
  CHECK_THROWS_AS(features_for(a, fewer), Error);
}

TEST_CASE("missing or corrupt artifacts are rejected") {
  TwoBlobFiles fx;
  const auto a = segment_dataset(fx.data, fx.source, fx.params);
  ScratchDir dir("bad");
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);

  write_segmentation(a, dir.path());
  const std::string seg = slurp(dir / "segmentation.json");
  const std::string labels = slurp(dir / "point_labels.bin");
  const std::string merge = slurp(dir / "merge.json");

  spit(dir / "point_labels.bin", labels.substr(0, labels.size() - 4));
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);
  std::string wrong = labels;
  wrong[0] = '\x7f';
  spit(dir / "point_labels.bin", wrong);
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);
  spit(dir / "point_labels.bin", labels);

  spit(dir / "segmentation.json", seg.substr(0, seg.size() / 2));
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);
  auto doc = json::parse(seg);
  doc["format"] = "something-else";
  spit(dir / "segmentation.json", doc.dump());
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);
  doc = json::parse(seg);
  doc["clusters"][0].erase("n_points");
  spit(dir / "segmentation.json", doc.dump());
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);
  spit(dir / "segmentation.json", seg);

  auto m = json::parse(merge);
  m["merge_map"].erase(m["merge_map"].size() - 1);
  spit(dir / "merge.json", m.dump());
  CHECK_THROWS_AS(load_segmentation(dir.path()), Error);

  std::filesystem::remove(dir / "merge.json");
  const auto fresh = load_segmentation(dir.path());
  CHECK(fresh.merge.map == a.merge.map);
}
