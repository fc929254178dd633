#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "metrics.hpp"
#include "mfseg/pipeline.hpp"
#include "mfseg/service.hpp"
#include "scratch_dir.hpp"

using namespace mfseg;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

/// Runs the mfseg binary with `args` (already shell-quoted as needed).
Outcome mfseg_cli(const std::string& args) {
  static ScratchDir capture("cli_io");
  const auto out = capture / "stdout", err = capture / "stderr";
  const std::string cmd = std::string(MFSEG_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::vector<ClusterId> lines_to_ids(const std::string& text) {
  std::vector<ClusterId> ids;
  std::istringstream in(text);
  ClusterId id;
  while (in >> id) ids.push_back(id);
  return ids;
}

std::string inputs(const TwoBlobFiles& f) { return "--field " + q(*f.source.field) + " --points " + q(*f.source.points); }

}  // namespace

TEST_CASE("gen is deterministic and rejects blobs outside the extent") {
  ScratchDir dir("gen");
  const auto spec = two_blob_spec();
  spit(dir / "spec.json", spec.to_json().dump());
  REQUIRE(mfseg_cli("gen --spec " + q(dir / "spec.json") + " --out " + q(dir / "a")).code == 0);
  REQUIRE(mfseg_cli("gen --spec " + q(dir / "spec.json") + " --out " + q(dir / "b")).code == 0);
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    CAPTURE(name);
    CHECK(slurp(entry.path()) == slurp(dir / "b" / name));
  }

  auto empty = spec;
  empty.blobs.clear();
  spit(dir / "empty.json", empty.to_json().dump());
  REQUIRE(mfseg_cli("gen --spec " + q(dir / "empty.json") + " --out " + q(dir / "c")).code == 0);
  const std::string truth = slurp(dir / "c" / "field_truth.txt");
  CHECK(truth.find_first_not_of("0\n") == std::string::npos);

  auto doc = spec.to_json();
  doc["blobs"][0]["center"] = json::array({-5, 5, 5, 5});
  spit(dir / "outside.json", doc.dump());
  const auto bad = mfseg_cli("gen --spec " + q(dir / "outside.json") + " --out " + q(dir / "d"));
  CHECK(bad.code != 0);
  CHECK_FALSE(bad.err.empty());
}

TEST_CASE("segment writes artifacts that recover the ground truth") {
  TwoBlobFiles f;
  ScratchDir out("seg");
  const auto r = mfseg_cli("segment " + inputs(f) + " --k 3,1,1,1 --out " + q(out.path()));
  REQUIRE(r.code == 0);
  for (const char* name : {"segmentation.json", "point_labels.bin", "field_labels.bin", "report.json", "timing.json",
                           "merge.json"}) {
    CAPTURE(name);
    CHECK(std::filesystem::exists(out / name));
  }
  const auto report = read_json(out / "report.json");
  CHECK(report["params"]["k"] == json::array({3, 1, 1, 1}));
  CHECK(report["samples"]["fields"] == f.data.field_columns.size());
  CHECK(report["iterations_used"].get<int>() >= 1);

  const auto a = load_segmentation(out.path());
  const auto truth = generate_synthetic(two_blob_spec());
  std::vector<ClusterId> merged;
  for (ClusterId l : a.segmentation.field_labels) merged.push_back(a.merge.map[static_cast<std::size_t>(l)]);
  const double rand = metrics::rand_index<int, ClusterId>(truth.field_truth, merged);
  CHECK(rand >= 0.99);
}

TEST_CASE("segment errors: missing input, invalid parameters") {
  TwoBlobFiles f;
  ScratchDir out("err");
  const auto missing = mfseg_cli("segment --field " + q(out / "absent.json") + " --out " + q(out / "r"));
  CHECK(missing.code != 0);
  CHECK(missing.err.find("absent.json") != std::string::npos);

  const auto weights = mfseg_cli("segment " + inputs(f) + " --wd 0 --wp 0 --out " + q(out / "w"));
  CHECK(weights.code != 0);
  CHECK(weights.err.find("wp") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(out / "w"));

  CHECK(mfseg_cli("segment " + inputs(f) + " --k 2,2 --out " + q(out / "k")).code != 0);
  CHECK(mfseg_cli("segment " + inputs(f) + " --eps-c 0 --out " + q(out / "e")).code != 0);
  CHECK(mfseg_cli("segment " + inputs(f) + " --normalize maybe --out " + q(out / "n")).code != 0);
  CHECK(mfseg_cli("segment --out " + q(out / "none")).code != 0);
}

TEST_CASE("merge, features and query work post hoc on saved artifacts") {
  TwoBlobFiles f;
  ScratchDir out("post");
  REQUIRE(mfseg_cli("segment " + inputs(f) + " --k 4,2,2,1 --eps-m 0 --out " + q(out.path())).code == 0);
  const std::string labels = slurp(out / "field_labels.bin");
  const auto a = load_segmentation(out.path());

  REQUIRE(mfseg_cli("merge --out " + q(out.path()) + " --eps-m 0").code == 0);
  const auto zero = load_segmentation(out.path());
  for (const auto& ci : a.clusters) {
    for (const auto& cj : a.clusters) {
      const bool same = zero.merge.map[static_cast<std::size_t>(ci.center.id)] ==
                        zero.merge.map[static_cast<std::size_t>(cj.center.id)];
      CHECK(same == (ci.center.p == cj.center.p && ci.center.f == cj.center.f));
    }
  }

  REQUIRE(mfseg_cli("merge --out " + q(out.path()) + " --eps-m 0.05").code == 0);
  const std::string first = slurp(out / "merge.json");
  REQUIRE(mfseg_cli("merge --out " + q(out.path()) + " --eps-m 0.05").code == 0);
  CHECK(slurp(out / "merge.json") == first);
  CHECK(slurp(out / "field_labels.bin") == labels);
  CHECK(mfseg_cli("merge --out " + q(out.path()) + " --eps-m -1").code != 0);

  // Queries against the exported merged table, filtered independently.
  const auto merged = read_json(out / "merge.json");
  std::vector<ClusterId> all, band;
  for (const auto& row : merged["centers"]) {
    all.push_back(row["id"].get<ClusterId>());
    if (!row["f_c"].is_null() && row["f_c"].get<double>() >= 0.4 && row["f_c"].get<double>() <= 0.95 &&
        row["n_points"].get<long>() >= 1) {
      band.push_back(row["id"].get<ClusterId>());
    }
  }
  std::sort(all.begin(), all.end());
  std::sort(band.begin(), band.end());
  CHECK(lines_to_ids(mfseg_cli("query --out " + q(out.path())).out) == all);
  const auto r = mfseg_cli("query --out " + q(out.path()) + " f_c=0.4:0.95 n_points=1:");
  CHECK(r.code == 0);
  CHECK(lines_to_ids(r.out) == band);
  CHECK_FALSE(band.empty());
  CHECK(mfseg_cli("query --out " + q(out.path()) + " f_c=0.4").code != 0);
  CHECK(mfseg_cli("query --out " + q(out / "nowhere")).code != 0);

  REQUIRE(mfseg_cli("features --out " + q(out.path())).code == 0);
  const auto features = read_json(out / "features.json");
  CHECK(features["features"].size() == merged["centers"].size());
  CHECK(features["eps_m"] == 0.05);
}

TEST_CASE("CLI and service produce the same artifacts and center lists") {
  TwoBlobFiles f;
  ScratchDir cli_out("parity_cli"), svc_out("parity_svc");
  REQUIRE(mfseg_cli("segment " + inputs(f) + " --k 4,2,2,1 --wd 0.5 --eps-m 0.02 --out " + q(cli_out.path())).code == 0);

  ServiceConfig c;
  c.source = f.source;
  c.out = svc_out.path();
  Service s(c);
  REQUIRE(s.segment(R"({"k":[4,2,2,1],"wd":0.5,"eps_m":0.02})").status == 202);
  s.wait_idle();
  const auto job_dir = svc_out / "jobs" / "1";
  for (const char* name : {"segmentation.json", "point_labels.bin", "field_labels.bin", "report.json", "merge.json"}) {
    CAPTURE(name);
    CHECK(slurp(cli_out / name) == slurp(job_dir / name));
  }

  const auto page = s.centers({{"p_c", "0.3:"}, {"page_size", "1000"}});
  REQUIRE(page.status == 200);
  std::vector<ClusterId> served;
  for (const auto& row : page.body["rows"]) served.push_back(row["id"].get<ClusterId>());
  CHECK_FALSE(served.empty());
  CHECK(lines_to_ids(mfseg_cli("query --out " + q(cli_out.path()) + " p_c=0.3:").out) == served);
}

TEST_CASE("bench emits one row per sample count") {
  const auto r = mfseg_cli("bench --n 1000,2000,4000,8000 --ks 2,2,2,2 --repeats 1");
  REQUIRE(r.code == 0);
  const auto doc = json::parse(r.out);
  CHECK(doc["rows"].size() == 4);
  CHECK(doc["rows"][3]["samples"] == 8000);
  CHECK(doc["machine"].contains("kernel"));
  CHECK(doc["machine"]["workers"] == 1);

  TwoBlobFiles f;
  const auto on_data = mfseg_cli("bench " + inputs(f) + " --ks 3,1,1,1 --ks 6,2,2,1 --repeats 1");
  REQUIRE(on_data.code == 0);
  const auto rows = json::parse(on_data.out)["rows"];
  CHECK(rows.size() == 2);
  CHECK(rows[0]["samples"] == f.data.points.size() + f.data.field_columns.size());
}
